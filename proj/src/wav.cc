// src/wav.cc

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

#include "hearthside/wav.h"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "hearthside/common.h"

namespace hearthside {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

template <typename T>
T ReadLE(const unsigned char* p) {
  T v{};
  std::memcpy(&v, p, sizeof(T));  // little-endian host assumed
  return v;
}

template <typename T>
void AppendLE(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void WriteWavImpl(const std::filesystem::path& path, const Wave& wave,
                  bool as_float) {
  Require(wave.sample_rate_hz > 0, "WAV write: sample rate must be positive");
  const std::uint16_t bytes_per_sample = as_float ? 4 : 2;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(wave.samples.size()) * bytes_per_sample;

  std::string out;
  out.reserve(44 + data_bytes);
  out.append("RIFF");
  AppendLE<std::uint32_t>(out, 36 + data_bytes);
  out.append("WAVE");
  out.append("fmt ");
  AppendLE<std::uint32_t>(out, 16);
  AppendLE<std::uint16_t>(out, as_float ? kFormatFloat : kFormatPcm);
  AppendLE<std::uint16_t>(out, 1);  // mono
  AppendLE<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate_hz));
  AppendLE<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate_hz) *
                                   bytes_per_sample);
  AppendLE<std::uint16_t>(out, bytes_per_sample);
  AppendLE<std::uint16_t>(out, static_cast<std::uint16_t>(8 * bytes_per_sample));
  out.append("data");
  AppendLE<std::uint32_t>(out, data_bytes);

  if (as_float) {
    for (float s : wave.samples) AppendLE<float>(out, s);
  } else {
    for (float s : wave.samples) {
      float c = std::clamp(s, -1.0f, 1.0f);
      int v = static_cast<int>(std::lrintf(c * 32767.0f));
      AppendLE<std::int16_t>(out, static_cast<std::int16_t>(v));
    }
  }
  WriteTextFile(path, out);
}

}  // namespace

Wave ReadWav(const std::filesystem::path& path) {
  const std::string raw = ReadTextFile(path);
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  const std::size_t n = raw.size();
  Require(n >= 44 && raw.compare(0, 4, "RIFF") == 0 &&
              raw.compare(8, 4, "WAVE") == 0,
          "not a RIFF/WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  Wave wave;

  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const std::string id = raw.substr(pos, 4);
    const std::uint32_t size = ReadLE<std::uint32_t>(p + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > n) {
      throw ValidationError("truncated WAV chunk in " + path.string());
    }
    if (id == "fmt ") {
      Require(size >= 16, "fmt chunk too small in " + path.string());
      format = ReadLE<std::uint16_t>(p + body);
      channels = ReadLE<std::uint16_t>(p + body + 2);
      rate = ReadLE<std::uint32_t>(p + body + 4);
      bits = ReadLE<std::uint16_t>(p + body + 14);
      have_fmt = true;
    } else if (id == "data") {
      Require(have_fmt, "data chunk before fmt in " + path.string());
      Require(channels == 1,
              "only mono WAV is supported: " + path.string());
      wave.sample_rate_hz = static_cast<int>(rate);
      if (format == kFormatPcm && bits == 16) {
        const std::size_t count = size / 2;
        wave.samples.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
          wave.samples[i] =
              static_cast<float>(ReadLE<std::int16_t>(p + body + 2 * i)) /
              32768.0f;
        }
      } else if (format == kFormatFloat && bits == 32) {
        const std::size_t count = size / 4;
        wave.samples.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
          wave.samples[i] = ReadLE<float>(p + body + 4 * i);
        }
      } else {
        throw ValidationError("unsupported WAV encoding (format=" +
                              std::to_string(format) + ", bits=" +
                              std::to_string(bits) + ") in " + path.string());
      }
      return wave;
    }
    pos = body + size + (size & 1);  // chunks are word-aligned
  }
  throw ValidationError("WAV has no data chunk: " + path.string());
}

void WriteWav(const std::filesystem::path& path, const Wave& wave) {
  WriteWavImpl(path, wave, /*as_float=*/false);
}

void WriteWavFloat(const std::filesystem::path& path, const Wave& wave) {
  WriteWavImpl(path, wave, /*as_float=*/true);
}

}  // namespace hearthside
