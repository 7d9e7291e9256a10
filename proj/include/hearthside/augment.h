// hearthside/augment.h

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

#ifndef HEARTHSIDE_AUGMENT_H_
#define HEARTHSIDE_AUGMENT_H_

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hearthside/common.h"
#include "hearthside/windowing.h"

namespace hearthside {
namespace dsp {

double Rms(std::span<const float> samples);

// Band-limited windowed-sinc resampling (Blackman window). taps sets the
// kernel width in samples of the lower rate; the cutoff sits at 0.8x the
// output Nyquist so the stopband is fully developed by Nyquist itself.
// from == to returns the input bit-exactly.
std::vector<float> Resample(std::span<const float> samples, double from_hz,
                            double to_hz, int taps = 64);

// Playback-speed change by resampling: output length ~ n/factor and all
// frequencies scale by factor (factor 0.95 lowers pitch, lengthens audio).
std::vector<float> SpeedPerturb(std::span<const float> samples, double factor,
                                int taps = 64);

struct NoiseMixResult {
  std::vector<float> samples;
  double gain = 0.0;           // applied to the noise slice
  double clip_fraction = 0.0;  // fraction of samples clipped after mixing
};

// signal + g * noise with g chosen so 20*log10(rms(signal)/rms(g*slice))
// equals snr_db. The noise is cropped (looping if short) at a random offset.
// Silent signal is an error; output hard-clipped to [-1, 1].
NoiseMixResult AddNoiseSnr(std::span<const float> signal,
                           std::span<const float> noise, double snr_db,
                           Rng& rng);

// Scales so max |rir| = 1; the direct path keeps unit gain.
std::vector<float> NormalizeRirPeak(std::span<const float> rir);

// Linear convolution truncated to the input length. If the reverberant sum
// would clip, the output is scaled back to the input's peak.
std::vector<float> ConvolveRir(std::span<const float> signal,
                               std::span<const float> rir);

// Zeroes k ~ count_range random disjoint spans of length ~ len_range_s.
// Total zeroed never exceeds half the clip; length is preserved.
std::vector<float> ChunkDrop(std::span<const float> samples, Rng& rng,
                             std::pair<int, int> count_range,
                             std::pair<double, double> len_range_s, int rate_hz);

// FFT band-stop: bins whose frequency lies in [lo_hz, hi_hz] are zeroed
// (conjugate symmetry preserved by construction).
std::vector<float> BandStop(std::span<const float> samples, int rate_hz,
                            double lo_hz, double hi_hz);

// Applies k ~ count_range band-stops with widths ~ band_hz_range placed
// uniformly below Nyquist.
std::vector<float> FreqDrop(std::span<const float> samples, Rng& rng,
                            std::pair<int, int> count_range,
                            std::pair<double, double> band_hz_range,
                            int rate_hz);

// ---------------------------------------------------------------------------
// Policy: which corruptions to apply and which loss tiers see the copies.

enum class Technique {
  kSpecAugmentDrop,  // chunk drop + frequency drop combined
  kChunkDrop,
  kSpeedPerturb,
  kReverb,
  kNoise,
  kReverbNoise,
};
inline constexpr int kTechniqueCount = 6;

enum class TierScope { kSdOnly, kVcOnly, kAll };

const char* ToString(Technique t);
const char* ToString(TierScope s);
std::optional<Technique> TechniqueFromString(const std::string& s);
std::optional<TierScope> TierScopeFromString(const std::string& s);

windowing::TierMask ScopeMask(TierScope scope);

struct AugmentationPolicy {
  std::vector<Technique> techniques;
  TierScope tier_scope = TierScope::kAll;
  std::array<double, 2> snr_db_range{0.0, 15.0};
  std::vector<double> speed_factors{0.95, 1.00, 1.05};
  std::pair<int, int> chunk_count_range{1, 3};
  std::pair<double, double> chunk_len_range_s{0.05, 0.25};
  std::pair<int, int> freq_count_range{1, 2};
  std::pair<double, double> freq_band_hz_range{50.0, 200.0};
  std::vector<std::vector<float>> noise_bank;  // clips at the dataset rate
  std::vector<std::vector<float>> rir_bank;
};

// Checks ranges and that every selected technique has the bank it needs.
void ValidatePolicy(const AugmentationPolicy& policy);

// JSON round-trip of the parameter fields (banks are referenced by
// directory, not embedded). Loading resolves banks: a directory of WAVs if
// given (resampled to rate_hz), else the built-in synthetic banks.
std::string PolicyToJson(const AugmentationPolicy& policy,
                         const std::string& noise_dir,
                         const std::string& rir_dir);
AugmentationPolicy PolicyFromJsonText(const std::string& text,
                                      const std::filesystem::path& base_dir,
                                      int rate_hz);

// Directory loaders; every WAV is resampled to rate_hz and RIRs are
// peak-normalized.
std::vector<std::vector<float>> LoadNoiseBankDir(
    const std::filesystem::path& dir, int rate_hz);
std::vector<std::vector<float>> LoadRirBankDir(const std::filesystem::path& dir,
                                               int rate_hz);

// Synthetic stand-ins when no external bank is supplied: white, pink, and a
// multi-voice babble-like murmur; three exponential-tail room responses.
// Deterministic for a given rate.
std::vector<std::vector<float>> BuiltinNoiseBank(int rate_hz);
std::vector<std::vector<float>> BuiltinRirBank(int rate_hz);

struct AugmentedCopy {
  windowing::LabeledWindow window;
  // Which corruption produced this copy; empty for the pass-through original.
  std::optional<Technique> technique;
};

// Emits the original (full tier mask) plus one corrupted copy per selected
// technique. Copies keep every label and metadata field; their tier mask is
// the scope mask intersected with the window's own label presence. All
// randomness derives from (seed, recording_id, start, technique), so equal
// seeds give bit-identical output.
std::vector<AugmentedCopy> ApplyPolicy(const windowing::LabeledWindow& window,
                                       const AugmentationPolicy& policy,
                                       std::uint64_t seed);

}  // namespace dsp
}  // namespace hearthside

#endif  // HEARTHSIDE_AUGMENT_H_
