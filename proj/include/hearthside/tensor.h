// hearthside/tensor.h

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

#ifndef HEARTHSIDE_TENSOR_H_
#define HEARTHSIDE_TENSOR_H_

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "hearthside/common.h"

namespace hearthside {
namespace nn {

// Dense row-major tensor. Training runs in float; gradient verification
// re-instantiates the whole stack in double.
template <typename S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_in) : shape(std::move(shape_in)) {
    v.assign(static_cast<std::size_t>(Numel(shape)), S(0));
  }
  Tensor(std::vector<int> shape_in, std::vector<S> values)
      : shape(std::move(shape_in)), v(std::move(values)) {
    HS_CHECK(static_cast<std::int64_t>(v.size()) == Numel(shape));
  }

  static std::int64_t Numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      HS_CHECK(d >= 0);
      n *= d;
    }
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  bool empty() const { return v.empty(); }
  int dim(std::size_t i) const {
    HS_CHECK(i < shape.size());
    return shape[i];
  }
  int rank() const { return static_cast<int>(shape.size()); }

  // 2-D accessors; rows() treats any tensor as (numel/last, last).
  int rows() const {
    HS_CHECK(!shape.empty());
    return static_cast<int>(numel() / shape.back());
  }
  int cols() const {
    HS_CHECK(!shape.empty());
    return shape.back();
  }
  S& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols() + c]; }
  const S& at(int r, int c) const {
    return v[static_cast<std::size_t>(r) * cols() + c];
  }

  std::string ShapeStr() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }

  template <typename T>
  Tensor<T> Cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<T>(v[i]);
    return out;
  }
};

// C = alpha * op(A) op(B) + beta * C, row-major; dispatches to BLAS
// {s,d}gemm. A is (m,k) after op, B is (k,n) after op, C is (m,n).
void Gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);
void Gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

// Pins BLAS to one thread; call once before deterministic work.
void UseSingleThreadedBlas();

// Throws if any element is NaN/Inf. |what| names the operation for the error.
template <typename S>
void CheckFinite(const Tensor<S>& t, const char* what) {
  for (S x : t.v) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw Error(std::string("non-finite value produced by ") + what);
    }
  }
}

}  // namespace nn
}  // namespace hearthside

#endif  // HEARTHSIDE_TENSOR_H_
