// hearthside/common.h

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

#ifndef HEARTHSIDE_COMMON_H_
#define HEARTHSIDE_COMMON_H_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hearthside {

// Base error type. Validation errors (bad input, bad config) and runtime
// errors (I/O, numerics) are distinguished so the CLI can map them to
// different exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

namespace internal {
[[noreturn]] void ThrowCheckFailure(const char* cond, const char* file,
                                    int line, const std::string& msg);
}  // namespace internal

// HS_CHECK(cond) << "context";  -- throws Error on failure.
class CheckStream {
 public:
  CheckStream(const char* cond, const char* file, int line)
      : cond_(cond), file_(file), line_(line) {}
  [[noreturn]] ~CheckStream() noexcept(false) {
    internal::ThrowCheckFailure(cond_, file_, line_, ss_.str());
  }
  template <typename T>
  CheckStream& operator<<(const T& t) {
    ss_ << t;
    return *this;
  }

 private:
  const char* cond_;
  const char* file_;
  int line_;
  std::ostringstream ss_;
};

#define HS_CHECK(cond)                                   \
  if (cond) {                                            \
  } else                                                 \
    ::hearthside::CheckStream(#cond, __FILE__, __LINE__)

// Require() is for caller-facing validation: message only, no source location.
inline void Require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

// ---------------------------------------------------------------------------
// Time is kept as integer milliseconds internally. All interval arithmetic
// is exact; the 1 ms grid is the resolution floor of every boundary rule.
using Ms = std::int64_t;

inline Ms SecondsToMs(double s) {
  return static_cast<Ms>(std::llround(s * 1000.0));
}
inline double MsToSeconds(Ms ms) { return static_cast<double>(ms) / 1000.0; }

// ---------------------------------------------------------------------------
// Deterministic RNG. We ship our own generator and distributions so that
// streams are reproducible across standard libraries and platforms.
// splitmix64 seeds an xoshiro256++ state; substreams are derived by hashing
// structured keys (strings and integers) into the seed.

std::uint64_t SplitMix64(std::uint64_t& state);

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t NextU64();
  // Uniform in [0, 1).
  double Uniform();
  double Uniform(double lo, double hi);
  // Uniform integer in [0, n); n > 0.
  std::int64_t UniformInt(std::int64_t n);
  std::int64_t UniformInt(std::int64_t lo, std::int64_t hi);  // inclusive ends
  // Standard normal via the polar method.
  double Normal();
  // Standard Gumbel(0, 1): -log(-log(u)).
  double Gumbel();

  template <typename T>
  void Shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(UniformInt(static_cast<std::int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Hash-combines a seed with structured key parts to derive an independent
// substream, e.g. DeriveSeed(global, recording_id, start_ms, "noise").
std::uint64_t DeriveSeed(std::uint64_t seed);
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t part);
std::uint64_t DeriveSeed(std::uint64_t seed, const std::string& part);

template <typename First, typename Second, typename... Rest>
std::uint64_t DeriveSeed(std::uint64_t seed, const First& first,
                         const Second& second, const Rest&... rest) {
  return DeriveSeed(DeriveSeed(seed, first), second, rest...);
}

// ---------------------------------------------------------------------------
// Small file helpers.

std::string ReadTextFile(const std::filesystem::path& path);
void WriteTextFile(const std::filesystem::path& path, const std::string& text);
std::vector<std::string> SplitLines(const std::string& text);

// Global seed default: HEARTHSIDE_SEED env var, else |fallback|.
std::uint64_t GlobalSeedDefault(std::uint64_t fallback = 17);

// HEARTHSIDE_CACHE env var, empty if unset.
std::optional<std::filesystem::path> CacheDirFromEnv();

}  // namespace hearthside

#endif  // HEARTHSIDE_COMMON_H_
