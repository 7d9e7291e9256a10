// src/common.cc

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

#include "hearthside/common.h"

#include <cmath>
#include <cstdlib>
#include <fstream>

namespace hearthside {

namespace internal {
void ThrowCheckFailure(const char* cond, const char* file, int line,
                       const std::string& msg) {
  std::ostringstream ss;
  ss << "check failed: " << cond << " at " << file << ":" << line;
  if (!msg.empty()) ss << " : " << msg;
  throw Error(ss.str());
}
}  // namespace internal

std::uint64_t SplitMix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t sm = seed;
  for (auto& s : s_) s = SplitMix64(sm);
}

static inline std::uint64_t Rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

std::uint64_t Rng::NextU64() {
  // xoshiro256++
  const std::uint64_t result = Rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = Rotl(s_[3], 45);
  return result;
}

double Rng::Uniform() {
  // 53 high bits -> [0, 1).
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

double Rng::Uniform(double lo, double hi) {
  return lo + (hi - lo) * Uniform();
}

std::int64_t Rng::UniformInt(std::int64_t n) {
  HS_CHECK(n > 0) << "UniformInt needs positive range, got " << n;
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t x;
  do {
    x = NextU64();
  } while (x >= limit);
  return static_cast<std::int64_t>(x % un);
}

std::int64_t Rng::UniformInt(std::int64_t lo, std::int64_t hi) {
  HS_CHECK(lo <= hi) << lo << " > " << hi;
  return lo + UniformInt(hi - lo + 1);
}

double Rng::Normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = Uniform(-1.0, 1.0);
    v = Uniform(-1.0, 1.0);
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  have_spare_ = true;
  return u * m;
}

double Rng::Gumbel() {
  double u;
  do {
    u = Uniform();
  } while (u <= 0.0);  // Uniform() < 1 already; guard the log(0) corner.
  return -std::log(-std::log(u));
}

std::uint64_t DeriveSeed(std::uint64_t seed) {
  std::uint64_t s = seed ^ 0x6a09e667f3bcc909ULL;
  return SplitMix64(s);
}

std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t part) {
  std::uint64_t s = seed ^ (part + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
  return SplitMix64(s);
}

std::uint64_t DeriveSeed(std::uint64_t seed, const std::string& part) {
  // FNV-1a over the bytes, then mixed into the seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : part) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return DeriveSeed(seed, h);
}

std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error("read failure: " + path.string());
  return ss.str();
}

void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open file for writing: " + path.string());
  out << text;
  out.flush();
  if (!out) throw Error("write failure: " + path.string());
}

std::vector<std::string> SplitLines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) {
    if (cur.back() == '\r') cur.pop_back();
    lines.push_back(cur);
  }
  return lines;
}

std::uint64_t GlobalSeedDefault(std::uint64_t fallback) {
  const char* env = std::getenv("HEARTHSIDE_SEED");
  if (env == nullptr || *env == '\0') return fallback;
  char* end = nullptr;
  unsigned long long v = std::strtoull(env, &end, 10);
  if (end == nullptr || *end != '\0') {
    throw ValidationError(std::string("HEARTHSIDE_SEED is not an integer: ") + env);
  }
  return static_cast<std::uint64_t>(v);
}

std::optional<std::filesystem::path> CacheDirFromEnv() {
  const char* env = std::getenv("HEARTHSIDE_CACHE");
  if (env == nullptr || *env == '\0') return std::nullopt;
  return std::filesystem::path(env);
}

}  // namespace hearthside
