// hearthside/wav.h

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

#ifndef HEARTHSIDE_WAV_H_
#define HEARTHSIDE_WAV_H_

#include <filesystem>
#include <vector>

namespace hearthside {

// Mono audio as float samples in [-1, 1].
struct Wave {
  int sample_rate_hz = 0;
  std::vector<float> samples;

  double DurationSeconds() const {
    return sample_rate_hz > 0
               ? static_cast<double>(samples.size()) / sample_rate_hz
               : 0.0;
  }
};

// Reads a RIFF/WAVE file. Supports PCM16 and IEEE float32, mono only;
// anything else throws ValidationError.
Wave ReadWav(const std::filesystem::path& path);

// Writes PCM16 (values clipped to [-1, 1]).
void WriteWav(const std::filesystem::path& path, const Wave& wave);

// Writes IEEE float32 without quantization; used where bit-exact audio
// round-trips matter more than file size.
void WriteWavFloat(const std::filesystem::path& path, const Wave& wave);

}  // namespace hearthside

#endif  // HEARTHSIDE_WAV_H_
