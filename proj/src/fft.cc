// src/fft.cc

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

#include "hearthside/fft.h"

#include <fftw3.h>

#include "hearthside/common.h"

namespace hearthside {
namespace dsp {

std::vector<std::complex<double>> Rfft(std::span<const double> x) {
  Require(!x.empty(), "FFT of empty signal");
  const std::size_t n = x.size();
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(
      static_cast<int>(n), in.data(),
      reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  HS_CHECK(plan != nullptr);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  return out;
}

std::vector<double> Irfft(std::span<const std::complex<double>> spectrum,
                          std::size_t n) {
  Require(!spectrum.empty() && n > 0 && spectrum.size() == n / 2 + 1,
          "inverse FFT size mismatch");
  std::vector<std::complex<double>> in(spectrum.begin(), spectrum.end());
  std::vector<double> out(n);
  fftw_plan plan = fftw_plan_dft_c2r_1d(
      static_cast<int>(n), reinterpret_cast<fftw_complex*>(in.data()),
      out.data(), FFTW_ESTIMATE);
  HS_CHECK(plan != nullptr);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= inv;
  return out;
}

std::vector<std::complex<double>> Rfft(std::span<const float> x) {
  std::vector<double> d(x.begin(), x.end());
  return Rfft(std::span<const double>(d));
}

std::vector<float> IrfftToFloat(std::span<const std::complex<double>> spectrum,
                                std::size_t n) {
  const auto d = Irfft(spectrum, n);
  return std::vector<float>(d.begin(), d.end());
}

std::vector<double> PowerSpectrum(std::span<const float> x) {
  const auto spec = Rfft(x);
  std::vector<double> power(spec.size());
  for (std::size_t i = 0; i < spec.size(); ++i) power[i] = std::norm(spec[i]);
  return power;
}

}  // namespace dsp
}  // namespace hearthside
