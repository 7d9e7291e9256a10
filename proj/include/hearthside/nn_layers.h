// hearthside/nn_layers.h

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

// Small layer library over the autodiff ops. Layers own their parameters as
// Var<S> and register them under hierarchical names ("encoder.conv0.w") so
// the optimizer and checkpoint code can address every tensor by name.

#ifndef HEARTHSIDE_NN_LAYERS_H_
#define HEARTHSIDE_NN_LAYERS_H_

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "hearthside/autodiff.h"
#include "hearthside/common.h"
#include "hearthside/tensor.h"

namespace hearthside {
namespace nn {

template <typename S>
struct NamedParam {
  std::string name;
  Var<S> var;
};

// Non-learned state that still belongs in a checkpoint (running statistics).
template <typename S>
struct NamedBuffer {
  std::string name;
  Tensor<S>* tensor;
};

template <typename S>
Tensor<S> XavierUniform(std::vector<int> shape, int fan_in, int fan_out,
                        Rng& rng) {
  Tensor<S> t(std::move(shape));
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : t.v) v = static_cast<S>(rng.Uniform(-bound, bound));
  return t;
}

// y = x W + b with W stored (in, out).
template <typename S>
struct Linear {
  Var<S> w, b;
  int in = 0, out = 0;

  Linear() = default;
  Linear(int in_dim, int out_dim, Rng& rng) : in(in_dim), out(out_dim) {
    w = Param(XavierUniform<S>({in_dim, out_dim}, in_dim, out_dim, rng));
    b = Param(Tensor<S>({out_dim}));
  }

  Var<S> Forward(const Var<S>& x) const {
    return AddRowVec(MatMul(x, w), b);
  }

  void Collect(const std::string& prefix, std::vector<NamedParam<S>>* params,
               std::vector<NamedBuffer<S>>* /*buffers*/) {
    params->push_back({prefix + ".w", w});
    params->push_back({prefix + ".b", b});
  }
};

template <typename S>
struct Conv1dLayer {
  Var<S> w, b;  // w is (cout, cin, k)
  int stride = 1, pad_left = 0, pad_right = 0;

  Conv1dLayer() = default;
  Conv1dLayer(int cin, int cout, int kernel, int stride_in, int pad_l,
              int pad_r, Rng& rng)
      : stride(stride_in), pad_left(pad_l), pad_right(pad_r) {
    w = Param(
        XavierUniform<S>({cout, cin, kernel}, cin * kernel, cout * kernel, rng));
    b = Param(Tensor<S>({cout}));
  }

  Var<S> Forward(const Var<S>& x) const {
    return Conv1d(x, w, b, stride, pad_left, pad_right);
  }

  void Collect(const std::string& prefix, std::vector<NamedParam<S>>* params,
               std::vector<NamedBuffer<S>>* /*buffers*/) {
    params->push_back({prefix + ".w", w});
    params->push_back({prefix + ".b", b});
  }
};

template <typename S>
struct LayerNorm {
  Var<S> gamma, beta;
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(int dim) {
    Tensor<S> g({dim});
    for (auto& v : g.v) v = S(1);
    gamma = Param(std::move(g));
    beta = Param(Tensor<S>({dim}));
  }

  Var<S> Forward(const Var<S>& x) const {
    return LayerNormOp(x, gamma, beta, eps);
  }

  void Collect(const std::string& prefix, std::vector<NamedParam<S>>* params,
               std::vector<NamedBuffer<S>>* /*buffers*/) {
    params->push_back({prefix + ".gamma", gamma});
    params->push_back({prefix + ".beta", beta});
  }
};

template <typename S>
struct BatchNorm1d {
  Var<S> gamma, beta;
  Tensor<S> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm1d() = default;
  explicit BatchNorm1d(int dim) {
    Tensor<S> g({dim});
    for (auto& v : g.v) v = S(1);
    gamma = Param(std::move(g));
    beta = Param(Tensor<S>({dim}));
    running_mean = Tensor<S>({dim});
    running_var = Tensor<S>({dim});
    for (auto& v : running_var.v) v = S(1);
  }

  Var<S> Forward(const Var<S>& x, bool train) {
    return BatchNorm1dOp(x, gamma, beta, &running_mean, &running_var, momentum,
                         eps, train);
  }

  void Collect(const std::string& prefix, std::vector<NamedParam<S>>* params,
               std::vector<NamedBuffer<S>>* buffers) {
    params->push_back({prefix + ".gamma", gamma});
    params->push_back({prefix + ".beta", beta});
    if (buffers) {
      buffers->push_back({prefix + ".running_mean", &running_mean});
      buffers->push_back({prefix + ".running_var", &running_var});
    }
  }
};

template <typename S>
struct EmbeddingTable {
  Var<S> table;  // (num_embeddings, dim)

  EmbeddingTable() = default;
  EmbeddingTable(int num, int dim, Rng& rng) {
    table = Param(XavierUniform<S>({num, dim}, num, dim, rng));
  }

  Var<S> Lookup(const std::vector<int>& indices) const {
    return GatherRows(table, indices);
  }

  void Collect(const std::string& prefix, std::vector<NamedParam<S>>* params,
               std::vector<NamedBuffer<S>>* /*buffers*/) {
    params->push_back({prefix + ".table", table});
  }
};

// Standard scaled dot-product self-attention over (B*T, d) rows grouped by
// segment. All heads are computed in one batched product.
template <typename S>
struct MultiHeadSelfAttention {
  Linear<S> wq, wk, wv, wo;
  int dim = 0, heads = 0;

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(int d, int n_heads, Rng& rng)
      : wq(d, d, rng), wk(d, d, rng), wv(d, d, rng), wo(d, d, rng),
        dim(d), heads(n_heads) {
    HS_CHECK(d % n_heads == 0) << "dim " << d << " not divisible by heads";
  }

  Var<S> Forward(const Var<S>& x, int batch, int time) const {
    const int dh = dim / heads;
    auto split = [&](const Var<S>& t) {
      // (B*T, d) -> (B, H, T, dh) -> (B*H, T, dh)
      return Reshape(Permute0213(Reshape(t, {batch, time, heads, dh})),
                     {batch * heads, time, dh});
    };
    Var<S> q = split(wq.Forward(x));
    Var<S> k = split(wk.Forward(x));
    Var<S> v = split(wv.Forward(x));
    Var<S> scores = Scale(Bmm(q, k, /*trans_b=*/true),
                          1.0 / std::sqrt(static_cast<double>(dh)));
    Var<S> attn = Reshape(
        SoftmaxLastDim(Reshape(scores, {batch * heads * time, time})),
        {batch * heads, time, time});
    Var<S> ctx = Bmm(attn, v);  // (B*H, T, dh)
    Var<S> merged = Reshape(
        Permute0213(Reshape(ctx, {batch, heads, time, dh})),
        {batch * time, dim});
    return wo.Forward(merged);
  }

  void Collect(const std::string& prefix, std::vector<NamedParam<S>>* params,
               std::vector<NamedBuffer<S>>* buffers) {
    wq.Collect(prefix + ".wq", params, buffers);
    wk.Collect(prefix + ".wk", params, buffers);
    wv.Collect(prefix + ".wv", params, buffers);
    wo.Collect(prefix + ".wo", params, buffers);
  }
};

// Pre-norm transformer block: x + attn(ln1(x)), then x + ffn(ln2(x)).
template <typename S>
struct TransformerLayer {
  LayerNorm<S> ln1, ln2;
  MultiHeadSelfAttention<S> attn;
  Linear<S> ff1, ff2;
  double dropout_p = 0.0;

  TransformerLayer() = default;
  TransformerLayer(int d, int n_heads, int ffn_dim, double dropout, Rng& rng)
      : ln1(d), ln2(d), attn(d, n_heads, rng), ff1(d, ffn_dim, rng),
        ff2(ffn_dim, d, rng), dropout_p(dropout) {}

  Var<S> Forward(const Var<S>& x, int batch, int time, Rng& rng,
                 bool train) {
    Var<S> h = Add(x, Dropout(attn.Forward(ln1.Forward(x), batch, time),
                              dropout_p, rng, train));
    Var<S> f = ff2.Forward(LeakyRelu(ff1.Forward(ln2.Forward(h))));
    return Add(h, Dropout(f, dropout_p, rng, train));
  }

  void Collect(const std::string& prefix, std::vector<NamedParam<S>>* params,
               std::vector<NamedBuffer<S>>* buffers) {
    ln1.Collect(prefix + ".ln1", params, buffers);
    ln2.Collect(prefix + ".ln2", params, buffers);
    attn.Collect(prefix + ".attn", params, buffers);
    ff1.Collect(prefix + ".ff1", params, buffers);
    ff2.Collect(prefix + ".ff2", params, buffers);
  }
};

}  // namespace nn
}  // namespace hearthside

#endif  // HEARTHSIDE_NN_LAYERS_H_
