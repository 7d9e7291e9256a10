// hearthside/checkpoint.h

// Copyright 2026  Hearthside Audio Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Checkpoint container: magic, little-endian u64 header length, a JSON
// header (format version, model config, tensor directory with byte offsets),
// then raw little-endian tensor data. Write-then-read round-trips bit-exactly
// for the stored dtype; loading casts to the model's scalar type.

#ifndef HEARTHSIDE_CHECKPOINT_H_
#define HEARTHSIDE_CHECKPOINT_H_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hearthside/common.h"
#include "hearthside/nn_layers.h"
#include "hearthside/tensor.h"

namespace hearthside {
namespace nn {

inline constexpr char kCheckpointMagic[8] = {'H', 'S', 'C', 'K',
                                             'P', 'T', '1', '\n'};

template <typename S>
const char* DtypeName();
template <>
inline const char* DtypeName<float>() { return "f32"; }
template <>
inline const char* DtypeName<double>() { return "f64"; }

template <typename S>
void SaveCheckpoint(const std::string& path, const nlohmann::json& config,
                    const std::vector<NamedParam<S>>& params,
                    const std::vector<NamedBuffer<S>>& buffers) {
  nlohmann::json header;
  header["version"] = 1;
  header["config"] = config;
  nlohmann::json dir = nlohmann::json::array();

  std::vector<const Tensor<S>*> tensors;
  std::uint64_t offset = 0;
  auto add = [&](const std::string& name, const Tensor<S>& t) {
    const std::uint64_t bytes =
        static_cast<std::uint64_t>(t.numel()) * sizeof(S);
    dir.push_back({{"name", name},
                   {"dtype", DtypeName<S>()},
                   {"shape", t.shape},
                   {"offset", offset},
                   {"bytes", bytes}});
    tensors.push_back(&t);
    offset += bytes;
  };
  for (const auto& p : params) add(p.name, p.var.value());
  for (const auto& b : buffers) add(b.name, *b.tensor);
  header["tensors"] = dir;

  const std::string header_text = header.dump();
  const std::filesystem::path fs_path(path);
  if (fs_path.has_parent_path()) {
    std::filesystem::create_directories(fs_path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(out.good(), "cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(),
            static_cast<std::streamsize>(header_text.size()));
  for (const Tensor<S>* t : tensors) {
    out.write(reinterpret_cast<const char*>(t->v.data()),
              static_cast<std::streamsize>(t->v.size() * sizeof(S)));
  }
  out.flush();
  Require(out.good(), "checkpoint write failed: " + path);
}

struct LoadedCheckpoint {
  nlohmann::json config;
  // All tensors widened to double; f32 -> f64 -> f32 is exact, so the
  // round-trip guarantee holds through this representation.
  std::map<std::string, Tensor<double>> tensors;
};

inline LoadedCheckpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), "cannot open checkpoint: " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  Require(in.good() && std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0,
          "not a checkpoint file: " + path);
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  Require(in.good() && header_len > 0 && header_len < (1u << 26),
          "corrupt checkpoint header length");
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  Require(in.good(), "truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad checkpoint header JSON: ") + e.what());
  }
  Require(header.value("version", 0) == 1, "unsupported checkpoint version");

  LoadedCheckpoint loaded;
  loaded.config = header.value("config", nlohmann::json::object());
  const std::streampos data_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::string dtype = entry.at("dtype").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    const std::uint64_t bytes = entry.at("bytes").get<std::uint64_t>();
    Tensor<double> t(shape);
    in.seekg(data_start + static_cast<std::streamoff>(offset));
    if (dtype == "f32") {
      Require(bytes == t.v.size() * sizeof(float), "tensor byte count mismatch");
      std::vector<float> raw(t.v.size());
      in.read(reinterpret_cast<char*>(raw.data()),
              static_cast<std::streamsize>(bytes));
      for (std::size_t i = 0; i < raw.size(); ++i) t.v[i] = raw[i];
    } else if (dtype == "f64") {
      Require(bytes == t.v.size() * sizeof(double),
              "tensor byte count mismatch");
      in.read(reinterpret_cast<char*>(t.v.data()),
              static_cast<std::streamsize>(bytes));
    } else {
      throw Error("unknown checkpoint dtype: " + dtype);
    }
    Require(in.good(), "truncated checkpoint tensor: " + name);
    loaded.tensors.emplace(name, std::move(t));
  }
  return loaded;
}

// Copies every model tensor from the checkpoint; missing names are an error,
// as are leftover checkpoint tensors unless allow_extra.
template <typename S>
void AssignAll(const LoadedCheckpoint& ckpt,
               const std::vector<NamedParam<S>>& params,
               const std::vector<NamedBuffer<S>>& buffers,
               bool allow_extra = false) {
  std::size_t used = 0;
  auto assign = [&](const std::string& name, Tensor<S>* dst) {
    auto it = ckpt.tensors.find(name);
    Require(it != ckpt.tensors.end(), "checkpoint is missing tensor: " + name);
    Require(it->second.shape == dst->shape,
            "checkpoint shape mismatch for " + name);
    for (std::size_t i = 0; i < dst->v.size(); ++i) {
      dst->v[i] = static_cast<S>(it->second.v[i]);
    }
    ++used;
  };
  for (const auto& p : params) {
    assign(p.name, &const_cast<Var<S>&>(p.var).mutable_value());
  }
  for (const auto& b : buffers) assign(b.name, b.tensor);
  if (!allow_extra) {
    Require(used == ckpt.tensors.size(),
            "checkpoint holds tensors the model does not declare");
  }
}

// Copies only the tensors present in both; returns how many were assigned.
template <typename S>
std::size_t AssignIntersection(const LoadedCheckpoint& ckpt,
                               const std::vector<NamedParam<S>>& params,
                               const std::vector<NamedBuffer<S>>& buffers) {
  std::size_t used = 0;
  auto maybe_assign = [&](const std::string& name, Tensor<S>* dst) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) return;
    Require(it->second.shape == dst->shape,
            "checkpoint shape mismatch for " + name);
    for (std::size_t i = 0; i < dst->v.size(); ++i) {
      dst->v[i] = static_cast<S>(it->second.v[i]);
    }
    ++used;
  };
  for (const auto& p : params) {
    maybe_assign(p.name, &const_cast<Var<S>&>(p.var).mutable_value());
  }
  for (const auto& b : buffers) maybe_assign(b.name, b.tensor);
  return used;
}

}  // namespace nn
}  // namespace hearthside

#endif  // HEARTHSIDE_CHECKPOINT_H_
