// hearthside/gradcheck.h

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

#ifndef HEARTHSIDE_GRADCHECK_H_
#define HEARTHSIDE_GRADCHECK_H_

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hearthside/autodiff.h"
#include "hearthside/common.h"
#include "hearthside/nn_layers.h"

namespace hearthside {
namespace nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst;         // "param.name[i]" of the worst coordinate
  std::int64_t checked = 0;  // coordinates compared
};

// Compares reverse-mode gradients of a scalar function against central
// finite differences: rel err = |g - g_fd| / max(|g|, |g_fd|, 1e-8).
//
// |f| must rebuild its graph from the current parameter values on every call
// and be bit-deterministic across calls (fix any internal RNG seed); the
// perturbed re-evaluations run under NoGradGuard. With
// max_coords_per_param = 0 every coordinate is checked, otherwise a seeded
// subsample of that size per parameter.
//
// Coordinates where both sides sit below |zero_tol| are dead directions
// (e.g. a key-projection bias under softmax's shift invariance: the true
// derivative is identically zero and the difference quotient is pure
// floating-point noise). Relative error is meaningless there, so those
// coordinates are judged by absolute error only; max_abs_err still sees them.
inline GradCheckReport CheckGradients(
    const std::function<Var<double>()>& f,
    const std::vector<NamedParam<double>>& params, double epsilon = 1e-5,
    int max_coords_per_param = 0, std::uint64_t sample_seed = 1234,
    double zero_tol = 1e-8) {
  Require(epsilon > 0, "epsilon must be positive");
  for (const auto& p : params) {
    Require(p.var.requires_grad(), "gradcheck parameter without grad: " + p.name);
    const_cast<Var<double>&>(p.var).ZeroGrad();
  }

  Var<double> loss = f();
  Require(loss.value().numel() == 1, "gradcheck function must return a scalar");
  Backward(loss);

  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    analytic.push_back(p.var.grad().empty() ? Tensor<double>(p.var.value().shape)
                                            : p.var.grad());
  }

  GradCheckReport report;
  Rng rng(sample_seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double>& val =
        const_cast<Var<double>&>(params[pi].var).mutable_value();
    const std::int64_t n = val.numel();
    std::vector<std::int64_t> coords;
    if (max_coords_per_param <= 0 || n <= max_coords_per_param) {
      coords.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      for (int i = 0; i < max_coords_per_param; ++i) {
        coords.push_back(static_cast<std::int64_t>(rng.UniformInt(n)));
      }
    }
    for (std::int64_t i : coords) {
      const double saved = val.v[static_cast<std::size_t>(i)];
      double f_plus, f_minus;
      {
        NoGradGuard ng;
        val.v[static_cast<std::size_t>(i)] = saved + epsilon;
        f_plus = f().value().v[0];
        val.v[static_cast<std::size_t>(i)] = saved - epsilon;
        f_minus = f().value().v[0];
        val.v[static_cast<std::size_t>(i)] = saved;
      }
      Require(std::isfinite(f_plus) && std::isfinite(f_minus),
              "non-finite value during finite differences");
      const double g_fd = (f_plus - f_minus) / (2.0 * epsilon);
      const double g = analytic[pi].v[static_cast<std::size_t>(i)];
      const double abs_err = std::abs(g - g_fd);
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      ++report.checked;
      if (std::abs(g) < zero_tol && std::abs(g_fd) < zero_tol) continue;
      const double rel_err =
          abs_err / std::max({std::abs(g), std::abs(g_fd), 1e-8});
      if (rel_err > report.max_rel_err) {
        report.max_rel_err = rel_err;
        report.worst =
            params[pi].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace nn
}  // namespace hearthside

#endif  // HEARTHSIDE_GRADCHECK_H_
