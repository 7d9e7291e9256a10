// hearthside/nn_optim.h

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

#ifndef HEARTHSIDE_NN_OPTIM_H_
#define HEARTHSIDE_NN_OPTIM_H_

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hearthside/autodiff.h"
#include "hearthside/common.h"
#include "hearthside/nn_layers.h"

namespace hearthside {
namespace nn {

// Adam with per-group learning rates. Parameters keep the order they were
// registered in; a parameter with no accumulated gradient is skipped (its
// moments do not advance), and a zero gradient still advances the moments.
template <typename S>
class Adam {
 public:
  struct Entry {
    Var<S> param;
    int group = 0;
  };

  Adam(std::vector<Entry> entries, std::vector<double> group_lrs,
       double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : entries_(std::move(entries)), group_lrs_(std::move(group_lrs)),
        beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& e : entries_) {
      Require(e.group >= 0 && e.group < static_cast<int>(group_lrs_.size()),
              "optimizer group out of range");
      m_.emplace_back(e.param.value().shape);
      v_.emplace_back(e.param.value().shape);
    }
  }

  const std::vector<double>& group_lrs() const { return group_lrs_; }
  void set_group_lr(int group, double lr) {
    group_lrs_[static_cast<std::size_t>(group)] = lr;
  }
  std::int64_t step_count() const { return t_; }

  void ZeroGrad() {
    for (auto& e : entries_) e.param.ZeroGrad();
  }

  void Step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < entries_.size(); ++p) {
      auto& param = entries_[p].param;
      if (param.grad().empty()) continue;
      const double lr = group_lrs_[static_cast<std::size_t>(entries_[p].group)];
      Tensor<S>& val = param.mutable_value();
      const Tensor<S>& g = param.grad();
      for (std::int64_t i = 0; i < val.numel(); ++i) {
        const double gi = static_cast<double>(g.v[static_cast<std::size_t>(i)]);
        double& m = m_[p].v[static_cast<std::size_t>(i)];
        double& v = v_[p].v[static_cast<std::size_t>(i)];
        m = beta1_ * m + (1.0 - beta1_) * gi;
        v = beta2_ * v + (1.0 - beta2_) * gi * gi;
        const double mh = m / bc1;
        const double vh = v / bc2;
        val.v[static_cast<std::size_t>(i)] -=
            static_cast<S>(lr * mh / (std::sqrt(vh) + eps_));
      }
    }
  }

 private:
  std::vector<Entry> entries_;
  std::vector<double> group_lrs_;
  double beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  // Moments in double regardless of S; cheap next to the GEMM work and it
  // keeps the float-mode trajectory well conditioned.
  std::vector<Tensor<double>> m_, v_;
};

// Anneals learning rates when the dev metric (higher is better) stops
// improving by at least |improvement_threshold| relative to the best so far.
// The first observation only records the baseline.
struct NewBob {
  double improvement_threshold = 0.0025;
  double anneal_factor = 0.5;
  bool has_best = false;
  double best_metric = 0.0;

  // Returns true when this update annealed the rates.
  template <typename S>
  bool Update(double dev_metric, Adam<S>* optim) {
    Require(std::isfinite(dev_metric), "dev metric must be finite");
    bool annealed = false;
    if (has_best) {
      const double denom = std::max(std::abs(best_metric), 1e-12);
      const double rel = (dev_metric - best_metric) / denom;
      if (rel < improvement_threshold) {
        for (std::size_t g = 0; g < optim->group_lrs().size(); ++g) {
          optim->set_group_lr(static_cast<int>(g),
                              optim->group_lrs()[g] * anneal_factor);
        }
        annealed = true;
      }
      best_metric = std::max(best_metric, dev_metric);
    } else {
      has_best = true;
      best_metric = dev_metric;
    }
    return annealed;
  }
};

}  // namespace nn
}  // namespace hearthside

#endif  // HEARTHSIDE_NN_OPTIM_H_
