// tests/test_common.cc

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

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <vector>

#include "doctest.h"
#include "hearthside/common.h"

using namespace hearthside;

TEST_CASE("time conversion rounds to the nearest millisecond") {
  CHECK(SecondsToMs(0.0) == 0);
  CHECK(SecondsToMs(1.0) == 1000);
  CHECK(SecondsToMs(0.0004) == 0);
  CHECK(SecondsToMs(0.0006) == 1);
  CHECK(SecondsToMs(2.9999) == 3000);
  CHECK(MsToSeconds(1500) == doctest::Approx(1.5));
  // Round-trip on the millisecond grid is exact.
  for (Ms m : {0LL, 1LL, 199LL, 200LL, 123456LL}) {
    CHECK(SecondsToMs(MsToSeconds(m)) == m);
  }
}

TEST_CASE("checked errors carry context") {
  CHECK_THROWS_AS(Require(false, "boom"), Error);
  bool threw = false;
  try {
    HS_CHECK(1 == 2) << "one is not " << 2;
  } catch (const Error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("one is not 2") != std::string::npos);
  }
  CHECK(threw);
  CHECK_NOTHROW(HS_CHECK(true) << "never evaluated");
}

TEST_CASE("rng reproduces the same stream for the same seed") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff_seed = false;
  for (int i = 0; i < 256; ++i) {
    const std::uint64_t x = a.NextU64();
    all_equal = all_equal && (x == b.NextU64());
    any_diff_seed = any_diff_seed || (x != c.NextU64());
  }
  CHECK(all_equal);
  CHECK(any_diff_seed);
}

TEST_CASE("uniform draws stay in range and fill it") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.Uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);

  for (int i = 0; i < 1000; ++i) {
    const double v = rng.Uniform(-3.0, 5.0);
    CHECK(v >= -3.0);
    CHECK(v < 5.0);
  }
}

TEST_CASE("uniform integers cover all values without bias artifacts") {
  Rng rng(11);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(rng.UniformInt(10))];
  for (int c : counts) {
    // Each bucket expects 10000; a 5-sigma band is about +-470.
    CHECK(c > 9000);
    CHECK(c < 11000);
  }
  for (int i = 0; i < 1000; ++i) {
    const int v = rng.UniformInt(-2, 3);
    CHECK(v >= -2);
    CHECK(v <= 3);
  }
}

TEST_CASE("normal draws have the right first two moments") {
  Rng rng(13);
  const int n = 200000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.Normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("gumbel draws match the standard Gumbel mean") {
  Rng rng(17);
  const int n = 200000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += rng.Gumbel();
  // Mean of standard Gumbel is the Euler-Mascheroni constant.
  CHECK(std::abs(sum / n - 0.5772156649) < 0.02);
}

TEST_CASE("shuffle permutes without losing elements") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.UniformInt(40));
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
    std::vector<int> shuffled = v;
    rng.Shuffle(shuffled);
    std::vector<int> sorted = shuffled;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == v);
  }
}

TEST_CASE("derived seeds differ across labels and match across calls") {
  CHECK(DeriveSeed(1, "alpha") == DeriveSeed(1, "alpha"));
  CHECK(DeriveSeed(1, "alpha") != DeriveSeed(1, "beta"));
  CHECK(DeriveSeed(1, "alpha") != DeriveSeed(2, "alpha"));
  CHECK(DeriveSeed(5, std::uint64_t{0}) != DeriveSeed(5, std::uint64_t{1}));
  CHECK(DeriveSeed(5, "a", std::uint64_t{1}) !=
        DeriveSeed(5, "a", std::uint64_t{2}));
  // Streams from sibling seeds do not collide in their first values.
  Rng a(DeriveSeed(9, "x"));
  Rng b(DeriveSeed(9, "y"));
  CHECK(a.NextU64() != b.NextU64());
}

TEST_CASE("text files round-trip and split into lines") {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "hearthside_common_test";
  std::filesystem::remove_all(dir);
  const std::string path = (dir / "sub" / "file.txt").string();
  WriteTextFile(path, "line1\nline2\r\nline3");
  CHECK(ReadTextFile(path) == "line1\nline2\r\nline3");
  const auto lines = SplitLines(ReadTextFile(path));
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "line1");
  CHECK(lines[1] == "line2");
  CHECK(lines[2] == "line3");
  CHECK_THROWS_AS(ReadTextFile((dir / "missing.txt").string()), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("global seed honors the environment variable") {
  unsetenv("HEARTHSIDE_SEED");
  CHECK(GlobalSeedDefault(17) == 17);
  setenv("HEARTHSIDE_SEED", "12345", 1);
  CHECK(GlobalSeedDefault(17) == 12345);
  setenv("HEARTHSIDE_SEED", "not-a-number", 1);
  CHECK_THROWS_AS(GlobalSeedDefault(17), Error);
  unsetenv("HEARTHSIDE_SEED");
}
