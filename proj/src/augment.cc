// src/augment.cc

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

#include "hearthside/augment.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "hearthside/fft.h"
#include "hearthside/wav.h"

namespace hearthside {
namespace dsp {

using nlohmann::json;

double Rms(std::span<const float> samples) {
  Require(!samples.empty(), "rms of empty signal");
  double acc = 0.0;
  for (float s : samples) acc += static_cast<double>(s) * s;
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

namespace {

inline double Sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

inline double Blackman(double t) {  // t in [-1, 1]
  const double w = std::numbers::pi * (t + 1.0);  // map to [0, 2pi]
  return 0.42 - 0.5 * std::cos(w) + 0.08 * std::cos(2.0 * w);
}

}  // namespace

std::vector<float> Resample(std::span<const float> samples, double from_hz,
                            double to_hz, int taps) {
  Require(from_hz > 0 && to_hz > 0, "resample rates must be positive");
  Require(taps >= 8, "resample needs at least 8 taps");
  if (from_hz == to_hz) return {samples.begin(), samples.end()};
  const std::size_t n = samples.size();
  if (n == 0) return {};

  const double ratio = to_hz / from_hz;  // output samples per input sample
  const std::size_t out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
  // Cutoff (cycles per input sample): 0.8 of the smaller Nyquist.
  const double fc = 0.4 * std::min(1.0, ratio);
  // Kernel half-width in input samples; widen when downsampling so the
  // stretched sinc keeps its shape.
  const double half = 0.5 * taps * std::max(1.0, 1.0 / ratio);

  std::vector<float> out(out_len);
  for (std::size_t j = 0; j < out_len; ++j) {
    const double center = static_cast<double>(j) / ratio;
    const long i_lo = static_cast<long>(std::ceil(center - half));
    const long i_hi = static_cast<long>(std::floor(center + half));
    double acc = 0.0, wsum = 0.0;
    for (long i = i_lo; i <= i_hi; ++i) {
      const double tau = center - static_cast<double>(i);
      const double w = 2.0 * fc * Sinc(2.0 * fc * tau) * Blackman(tau / half);
      wsum += w;
      if (i >= 0 && i < static_cast<long>(n)) {
        acc += w * static_cast<double>(samples[static_cast<std::size_t>(i)]);
      }
    }
    // Per-position normalization keeps DC gain exactly 1.
    out[j] = wsum != 0.0 ? static_cast<float>(acc / wsum) : 0.0f;
  }
  return out;
}

std::vector<float> SpeedPerturb(std::span<const float> samples, double factor,
                                int taps) {
  Require(factor > 0, "speed factor must be positive");
  if (factor == 1.0) return {samples.begin(), samples.end()};
  // Playing the clip factor-times faster: sample the waveform at positions
  // j * factor, i.e. resample with a rate ratio of 1/factor.
  return Resample(samples, factor, 1.0, taps);
}

NoiseMixResult AddNoiseSnr(std::span<const float> signal,
                           std::span<const float> noise, double snr_db,
                           Rng& rng) {
  Require(!noise.empty(), "noise clip is empty");
  const double rms_s = Rms(signal);
  Require(rms_s > 0, "SNR undefined for a silent signal");

  const std::size_t n = signal.size();
  const std::size_t m = noise.size();
  std::vector<float> slice(n);
  double rms_n = 0.0;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const std::size_t offset =
        static_cast<std::size_t>(rng.UniformInt(static_cast<std::int64_t>(m)));
    for (std::size_t i = 0; i < n; ++i) slice[i] = noise[(offset + i) % m];
    rms_n = Rms(slice);
    if (rms_n > 0) break;
  }
  Require(rms_n > 0, "noise clip is silent at every sampled offset");

  NoiseMixResult result;
  result.gain = rms_s / (rms_n * std::pow(10.0, snr_db / 20.0));
  result.samples.resize(n);
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(signal[i]) + result.gain * slice[i];
    if (v > 1.0 || v < -1.0) ++clipped;
    result.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  result.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
  return result;
}

std::vector<float> NormalizeRirPeak(std::span<const float> rir) {
  Require(!rir.empty(), "empty impulse response");
  float peak = 0.0f;
  for (float v : rir) peak = std::max(peak, std::abs(v));
  Require(peak > 0, "all-zero impulse response");
  std::vector<float> out(rir.begin(), rir.end());
  for (float& v : out) v /= peak;
  return out;
}

std::vector<float> ConvolveRir(std::span<const float> signal,
                               std::span<const float> rir) {
  Require(!rir.empty(), "empty impulse response");
  const std::size_t n = signal.size();
  if (n == 0) return {};
  const std::size_t m = rir.size();
  const std::size_t full = n + m - 1;

  std::vector<double> a(full, 0.0), b(full, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i] = signal[i];
  for (std::size_t i = 0; i < m; ++i) b[i] = rir[i];
  auto sa = Rfft(std::span<const double>(a));
  const auto sb = Rfft(std::span<const double>(b));
  for (std::size_t i = 0; i < sa.size(); ++i) sa[i] *= sb[i];
  const auto y = Irfft(sa, full);

  double in_peak = 0.0, out_peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    in_peak = std::max(in_peak, std::abs(static_cast<double>(signal[i])));
    out_peak = std::max(out_peak, std::abs(y[i]));
  }
  const double scale =
      (out_peak > 1.0 && out_peak > 0.0) ? in_peak / out_peak : 1.0;
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(y[i] * scale);
  return out;
}

std::vector<float> ChunkDrop(std::span<const float> samples, Rng& rng,
                             std::pair<int, int> count_range,
                             std::pair<double, double> len_range_s,
                             int rate_hz) {
  Require(count_range.first >= 0 && count_range.first <= count_range.second,
          "bad chunk count range");
  Require(len_range_s.first > 0 && len_range_s.first <= len_range_s.second,
          "bad chunk length range");
  std::vector<float> out(samples.begin(), samples.end());
  const std::size_t n = out.size();
  if (n == 0) return out;

  const int k = static_cast<int>(
      rng.UniformInt(count_range.first, count_range.second));
  const std::size_t budget = n / 2;  // never zero more than half the clip
  std::size_t zeroed = 0;
  std::vector<std::pair<std::size_t, std::size_t>> placed;
  for (int c = 0; c < k; ++c) {
    const double len_s = rng.Uniform(len_range_s.first, len_range_s.second);
    std::size_t len = static_cast<std::size_t>(std::lround(len_s * rate_hz));
    len = std::clamp<std::size_t>(len, 1, n);
    if (zeroed + len > budget) continue;
    for (int attempt = 0; attempt < 20; ++attempt) {
      const std::size_t start = static_cast<std::size_t>(
          rng.UniformInt(static_cast<std::int64_t>(n - len + 1)));
      const bool overlaps = std::any_of(
          placed.begin(), placed.end(), [&](const auto& span) {
            return start < span.second && span.first < start + len;
          });
      if (overlaps) continue;
      std::fill(out.begin() + static_cast<long>(start),
                out.begin() + static_cast<long>(start + len), 0.0f);
      placed.emplace_back(start, start + len);
      zeroed += len;
      break;
    }
  }
  return out;
}

std::vector<float> BandStop(std::span<const float> samples, int rate_hz,
                            double lo_hz, double hi_hz) {
  Require(rate_hz > 0, "band-stop needs a positive rate");
  Require(0 <= lo_hz && lo_hz < hi_hz && hi_hz <= rate_hz / 2.0,
          "band-stop band must lie within (0, Nyquist)");
  if (samples.empty()) return {};
  auto spec = Rfft(samples);
  const double bin_hz = static_cast<double>(rate_hz) / samples.size();
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = bin_hz * static_cast<double>(k);
    if (f >= lo_hz && f <= hi_hz) spec[k] = 0.0;
  }
  return IrfftToFloat(spec, samples.size());
}

std::vector<float> FreqDrop(std::span<const float> samples, Rng& rng,
                            std::pair<int, int> count_range,
                            std::pair<double, double> band_hz_range,
                            int rate_hz) {
  Require(count_range.first >= 0 && count_range.first <= count_range.second,
          "bad band count range");
  const double nyquist = rate_hz / 2.0;
  Require(band_hz_range.first > 0 &&
              band_hz_range.first <= band_hz_range.second &&
              band_hz_range.second < nyquist,
          "band widths must lie within (0, Nyquist)");
  std::vector<float> out(samples.begin(), samples.end());
  const int k = static_cast<int>(
      rng.UniformInt(count_range.first, count_range.second));
  for (int c = 0; c < k; ++c) {
    const double width = rng.Uniform(band_hz_range.first, band_hz_range.second);
    const double lo = rng.Uniform(0.0, nyquist - width);
    out = BandStop(out, rate_hz, lo, lo + width);
  }
  return out;
}

// ---------------------------------------------------------------------------

const char* ToString(Technique t) {
  switch (t) {
    case Technique::kSpecAugmentDrop: return "SpecAugmentDrop";
    case Technique::kChunkDrop: return "ChunkDrop";
    case Technique::kSpeedPerturb: return "SpeedPerturb";
    case Technique::kReverb: return "Reverb";
    case Technique::kNoise: return "Noise";
    case Technique::kReverbNoise: return "ReverbNoise";
  }
  return "?";
}

const char* ToString(TierScope s) {
  switch (s) {
    case TierScope::kSdOnly: return "SDOnly";
    case TierScope::kVcOnly: return "VCOnly";
    case TierScope::kAll: return "All";
  }
  return "?";
}

std::optional<Technique> TechniqueFromString(const std::string& s) {
  for (int i = 0; i < kTechniqueCount; ++i) {
    const auto t = static_cast<Technique>(i);
    if (s == ToString(t)) return t;
  }
  return std::nullopt;
}

std::optional<TierScope> TierScopeFromString(const std::string& s) {
  if (s == "SDOnly") return TierScope::kSdOnly;
  if (s == "VCOnly") return TierScope::kVcOnly;
  if (s == "All") return TierScope::kAll;
  return std::nullopt;
}

windowing::TierMask ScopeMask(TierScope scope) {
  switch (scope) {
    case TierScope::kSdOnly: return {true, false, false};
    case TierScope::kVcOnly: return {false, true, true};
    case TierScope::kAll: return {true, true, true};
  }
  return {true, true, true};
}

void ValidatePolicy(const AugmentationPolicy& p) {
  Require(p.snr_db_range[0] <= p.snr_db_range[1], "SNR range inverted");
  for (double f : p.speed_factors) {
    Require(f > 0, "speed factors must be positive");
  }
  Require(p.chunk_count_range.first >= 0 &&
              p.chunk_count_range.first <= p.chunk_count_range.second,
          "bad chunk count range");
  Require(p.chunk_len_range_s.first > 0 &&
              p.chunk_len_range_s.first <= p.chunk_len_range_s.second,
          "bad chunk length range");
  Require(p.freq_count_range.first >= 0 &&
              p.freq_count_range.first <= p.freq_count_range.second,
          "bad band count range");
  Require(p.freq_band_hz_range.first > 0 &&
              p.freq_band_hz_range.first <= p.freq_band_hz_range.second,
          "bad band width range");
  for (Technique t : p.techniques) {
    if (t == Technique::kSpeedPerturb) {
      Require(!p.speed_factors.empty(), "SpeedPerturb needs speed factors");
    }
    if (t == Technique::kNoise || t == Technique::kReverbNoise) {
      Require(!p.noise_bank.empty(),
              std::string(ToString(t)) + " selected but the noise bank is empty");
    }
    if (t == Technique::kReverb || t == Technique::kReverbNoise) {
      Require(!p.rir_bank.empty(),
              std::string(ToString(t)) + " selected but the RIR bank is empty");
    }
  }
}

std::string PolicyToJson(const AugmentationPolicy& p,
                         const std::string& noise_dir,
                         const std::string& rir_dir) {
  json j;
  j["techniques"] = json::array();
  for (Technique t : p.techniques) j["techniques"].push_back(ToString(t));
  j["tier_scope"] = ToString(p.tier_scope);
  j["snr_db_range"] = p.snr_db_range;
  j["speed_factors"] = p.speed_factors;
  j["chunk_drop"] = {
      {"count_range", {p.chunk_count_range.first, p.chunk_count_range.second}},
      {"len_range_s", {p.chunk_len_range_s.first, p.chunk_len_range_s.second}}};
  j["freq_drop"] = {
      {"count_range", {p.freq_count_range.first, p.freq_count_range.second}},
      {"band_hz_range",
       {p.freq_band_hz_range.first, p.freq_band_hz_range.second}}};
  if (!noise_dir.empty()) j["noise_bank_dir"] = noise_dir;
  if (!rir_dir.empty()) j["rir_bank_dir"] = rir_dir;
  return j.dump(2);
}

AugmentationPolicy PolicyFromJsonText(const std::string& text,
                                      const std::filesystem::path& base_dir,
                                      int rate_hz) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad policy JSON: ") + e.what());
  }
  AugmentationPolicy p;
  try {
    if (j.contains("techniques")) {
      for (const auto& name : j["techniques"]) {
        const auto t = TechniqueFromString(name.get<std::string>());
        Require(t.has_value(),
                "unknown technique '" + name.get<std::string>() + "'");
        if (std::find(p.techniques.begin(), p.techniques.end(), *t) ==
            p.techniques.end()) {
          p.techniques.push_back(*t);
        }
      }
    }
    if (j.contains("tier_scope")) {
      const auto s = TierScopeFromString(j["tier_scope"].get<std::string>());
      Require(s.has_value(), "unknown tier_scope");
      p.tier_scope = *s;
    }
    if (j.contains("snr_db_range")) {
      p.snr_db_range = {j["snr_db_range"][0].get<double>(),
                        j["snr_db_range"][1].get<double>()};
    }
    if (j.contains("speed_factors")) {
      p.speed_factors = j["speed_factors"].get<std::vector<double>>();
    }
    if (j.contains("chunk_drop")) {
      const auto& c = j["chunk_drop"];
      if (c.contains("count_range")) {
        p.chunk_count_range = {c["count_range"][0].get<int>(),
                               c["count_range"][1].get<int>()};
      }
      if (c.contains("len_range_s")) {
        p.chunk_len_range_s = {c["len_range_s"][0].get<double>(),
                               c["len_range_s"][1].get<double>()};
      }
    }
    if (j.contains("freq_drop")) {
      const auto& f = j["freq_drop"];
      if (f.contains("count_range")) {
        p.freq_count_range = {f["count_range"][0].get<int>(),
                              f["count_range"][1].get<int>()};
      }
      if (f.contains("band_hz_range")) {
        p.freq_band_hz_range = {f["band_hz_range"][0].get<double>(),
                                f["band_hz_range"][1].get<double>()};
      }
    }
    auto resolve = [&base_dir](const std::string& d) {
      std::filesystem::path fp(d);
      return fp.is_absolute() ? fp : base_dir / fp;
    };
    if (j.contains("noise_bank_dir")) {
      p.noise_bank =
          LoadNoiseBankDir(resolve(j["noise_bank_dir"].get<std::string>()),
                           rate_hz);
    }
    if (j.contains("rir_bank_dir")) {
      p.rir_bank = LoadRirBankDir(resolve(j["rir_bank_dir"].get<std::string>()),
                                  rate_hz);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad policy JSON: ") + e.what());
  }
  bool needs_noise = false, needs_rir = false;
  for (Technique t : p.techniques) {
    needs_noise |= t == Technique::kNoise || t == Technique::kReverbNoise;
    needs_rir |= t == Technique::kReverb || t == Technique::kReverbNoise;
  }
  if (needs_noise && p.noise_bank.empty()) p.noise_bank = BuiltinNoiseBank(rate_hz);
  if (needs_rir && p.rir_bank.empty()) p.rir_bank = BuiltinRirBank(rate_hz);
  ValidatePolicy(p);
  return p;
}

namespace {

std::vector<std::filesystem::path> SortedWavs(
    const std::filesystem::path& dir) {
  Require(std::filesystem::is_directory(dir),
          "bank directory not found: " + dir.string());
  std::vector<std::filesystem::path> paths;
  for (const auto& ent : std::filesystem::directory_iterator(dir)) {
    if (ent.path().extension() == ".wav") paths.push_back(ent.path());
  }
  std::sort(paths.begin(), paths.end());
  return paths;
}

}  // namespace

std::vector<std::vector<float>> LoadNoiseBankDir(
    const std::filesystem::path& dir, int rate_hz) {
  std::vector<std::vector<float>> bank;
  for (const auto& path : SortedWavs(dir)) {
    const Wave w = ReadWav(path);
    bank.push_back(Resample(w.samples, w.sample_rate_hz, rate_hz));
  }
  Require(!bank.empty(), "no WAV files in noise bank " + dir.string());
  return bank;
}

std::vector<std::vector<float>> LoadRirBankDir(const std::filesystem::path& dir,
                                               int rate_hz) {
  std::vector<std::vector<float>> bank;
  for (const auto& path : SortedWavs(dir)) {
    const Wave w = ReadWav(path);
    bank.push_back(
        NormalizeRirPeak(Resample(w.samples, w.sample_rate_hz, rate_hz)));
  }
  Require(!bank.empty(), "no WAV files in RIR bank " + dir.string());
  return bank;
}

namespace {

constexpr std::uint64_t kBankSeed = 0x48454152544853ULL;  // stable bank seed

std::vector<float> WhiteNoise(int rate_hz, double seconds, Rng& rng,
                              double level) {
  std::vector<float> out(static_cast<std::size_t>(seconds * rate_hz));
  for (float& v : out) {
    v = static_cast<float>(std::clamp(level * rng.Normal(), -0.95, 0.95));
  }
  return out;
}

std::vector<float> PinkNoise(int rate_hz, double seconds, Rng& rng,
                             double level) {
  auto white = WhiteNoise(rate_hz, seconds, rng, 1.0);
  auto spec = Rfft(std::span<const float>(white));
  for (std::size_t k = 1; k < spec.size(); ++k) {
    spec[k] /= std::sqrt(static_cast<double>(k));
  }
  spec[0] = 0.0;
  auto out = IrfftToFloat(spec, white.size());
  const double r = Rms(out);
  for (float& v : out) {
    v = static_cast<float>(std::clamp(level * v / r, -0.95, 0.95));
  }
  return out;
}

// A murmur of overlapping amplitude-modulated harmonic voices; a stand-in
// for a babble noise recording.
std::vector<float> BabbleNoise(int rate_hz, double seconds, Rng& rng,
                               double level) {
  const std::size_t n = static_cast<std::size_t>(seconds * rate_hz);
  std::vector<double> mix(n, 0.0);
  const int voices = 6;
  for (int v = 0; v < voices; ++v) {
    const double f0 = rng.Uniform(120.0, 280.0);
    const double am_rate = rng.Uniform(2.0, 6.0);
    const double am_phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);
    double phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);
    const int harmonics = 5;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / rate_hz;
      const double env =
          0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * am_rate * t + am_phase));
      double s = 0.0;
      for (int h = 1; h <= harmonics; ++h) {
        if (f0 * h >= rate_hz / 2.0) break;
        s += std::sin(h * (2.0 * std::numbers::pi * f0 * t + phase)) / h;
      }
      mix[i] += env * s;
    }
  }
  std::vector<float> out(n);
  double peak = 1e-9;
  for (double m : mix) peak = std::max(peak, std::abs(m));
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<float>(level * mix[i] / peak);
  }
  return out;
}

}  // namespace

std::vector<std::vector<float>> BuiltinNoiseBank(int rate_hz) {
  Rng rng(DeriveSeed(kBankSeed, "noise", static_cast<std::uint64_t>(rate_hz)));
  std::vector<std::vector<float>> bank;
  bank.push_back(WhiteNoise(rate_hz, 4.0, rng, 0.1));
  bank.push_back(PinkNoise(rate_hz, 4.0, rng, 0.1));
  bank.push_back(BabbleNoise(rate_hz, 4.0, rng, 0.3));
  return bank;
}

std::vector<std::vector<float>> BuiltinRirBank(int rate_hz) {
  Rng rng(DeriveSeed(kBankSeed, "rir", static_cast<std::uint64_t>(rate_hz)));
  std::vector<std::vector<float>> bank;
  for (double rt60 : {0.15, 0.3, 0.5}) {
    const std::size_t len = static_cast<std::size_t>(rt60 * rate_hz);
    std::vector<float> rir(len, 0.0f);
    rir[0] = 1.0f;
    const double tau = rt60 / std::log(1000.0);  // -60 dB at rt60
    for (std::size_t i = 1; i < len; ++i) {
      const double t = static_cast<double>(i) / rate_hz;
      rir[i] = static_cast<float>(0.3 * rng.Normal() * std::exp(-t / tau));
    }
    bank.push_back(NormalizeRirPeak(rir));
  }
  return bank;
}

namespace {

std::vector<float> FitLength(std::vector<float> x, std::size_t n) {
  if (x.size() == n) return x;
  if (x.size() > n) {  // center crop
    const std::size_t off = (x.size() - n) / 2;
    return std::vector<float>(x.begin() + static_cast<long>(off),
                              x.begin() + static_cast<long>(off + n));
  }
  std::vector<float> out(n, 0.0f);  // center pad
  const std::size_t off = (n - x.size()) / 2;
  std::copy(x.begin(), x.end(), out.begin() + static_cast<long>(off));
  return out;
}

std::vector<float> CorruptSamples(const std::vector<float>& samples,
                                  int rate_hz, Technique t,
                                  const AugmentationPolicy& p, Rng& rng) {
  switch (t) {
    case Technique::kSpecAugmentDrop: {
      auto out = ChunkDrop(samples, rng, p.chunk_count_range,
                           p.chunk_len_range_s, rate_hz);
      return FreqDrop(out, rng, p.freq_count_range, p.freq_band_hz_range,
                      rate_hz);
    }
    case Technique::kChunkDrop:
      return ChunkDrop(samples, rng, p.chunk_count_range, p.chunk_len_range_s,
                       rate_hz);
    case Technique::kSpeedPerturb: {
      const std::size_t pick = static_cast<std::size_t>(
          rng.UniformInt(static_cast<std::int64_t>(p.speed_factors.size())));
      return FitLength(SpeedPerturb(samples, p.speed_factors[pick]),
                       samples.size());
    }
    case Technique::kReverb: {
      const std::size_t pick = static_cast<std::size_t>(
          rng.UniformInt(static_cast<std::int64_t>(p.rir_bank.size())));
      return ConvolveRir(samples, p.rir_bank[pick]);
    }
    case Technique::kNoise: {
      const std::size_t pick = static_cast<std::size_t>(
          rng.UniformInt(static_cast<std::int64_t>(p.noise_bank.size())));
      const double snr = rng.Uniform(p.snr_db_range[0], p.snr_db_range[1]);
      return AddNoiseSnr(samples, p.noise_bank[pick], snr, rng).samples;
    }
    case Technique::kReverbNoise: {
      const std::size_t rp = static_cast<std::size_t>(
          rng.UniformInt(static_cast<std::int64_t>(p.rir_bank.size())));
      auto rev = ConvolveRir(samples, p.rir_bank[rp]);
      const std::size_t np = static_cast<std::size_t>(
          rng.UniformInt(static_cast<std::int64_t>(p.noise_bank.size())));
      const double snr = rng.Uniform(p.snr_db_range[0], p.snr_db_range[1]);
      return AddNoiseSnr(rev, p.noise_bank[np], snr, rng).samples;
    }
  }
  throw Error("unreachable technique");
}

}  // namespace

std::vector<AugmentedCopy> ApplyPolicy(const windowing::LabeledWindow& window,
                                       const AugmentationPolicy& policy,
                                       std::uint64_t seed) {
  ValidatePolicy(policy);
  std::vector<AugmentedCopy> out;
  out.push_back({window, std::nullopt});  // original keeps its own full mask

  const windowing::TierMask scope = ScopeMask(policy.tier_scope);
  for (Technique t : policy.techniques) {
    Rng rng(DeriveSeed(seed, window.recording_id,
                       static_cast<std::uint64_t>(window.start_ms),
                       std::string(ToString(t))));
    AugmentedCopy copy;
    copy.window = window;
    copy.window.samples = CorruptSamples(window.samples, window.sample_rate_hz,
                                         t, policy, rng);
    HS_CHECK(copy.window.samples.size() == window.samples.size())
        << "corruption changed the sample count";
    // Scope mask intersected with label presence keeps the tier-mask
    // invariant: a tier is trainable only where its target exists.
    copy.window.tier_mask =
        windowing::TierMask{scope.sd && window.tier_mask.sd,
                            scope.chn && window.tier_mask.chn,
                            scope.adu && window.tier_mask.adu};
    copy.technique = t;
    out.push_back(std::move(copy));
  }
  return out;
}

}  // namespace dsp
}  // namespace hearthside
