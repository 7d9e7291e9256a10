// hearthside/fft.h

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

#ifndef HEARTHSIDE_FFT_H_
#define HEARTHSIDE_FFT_H_

#include <complex>
#include <span>
#include <vector>

namespace hearthside {
namespace dsp {

// Real-to-complex FFT; output has n/2 + 1 bins. Backed by FFTW in double
// precision; plans use deterministic estimation, so results are stable
// across runs.
std::vector<std::complex<double>> Rfft(std::span<const double> x);

// Inverse of Rfft, normalized by 1/n so Irfft(Rfft(x), n) == x up to
// rounding.
std::vector<double> Irfft(std::span<const std::complex<double>> spectrum,
                          std::size_t n);

// Float convenience wrappers (compute in double).
std::vector<std::complex<double>> Rfft(std::span<const float> x);
std::vector<float> IrfftToFloat(std::span<const std::complex<double>> spectrum,
                                std::size_t n);

// Power spectrum |X_k|^2 of a float signal.
std::vector<double> PowerSpectrum(std::span<const float> x);

}  // namespace dsp
}  // namespace hearthside

#endif  // HEARTHSIDE_FFT_H_
