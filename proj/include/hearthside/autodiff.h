// hearthside/autodiff.h

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

// Reverse-mode automatic differentiation over Tensor<S>. Each operation
// builds one graph node whose backward closure adds into its parents'
// gradients; Backward() walks the graph in reverse topological order.
// Everything is single-threaded and reduction order is fixed, so a given
// (seed, input) pair reproduces losses bit-exactly.

#ifndef HEARTHSIDE_AUTODIFF_H_
#define HEARTHSIDE_AUTODIFF_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hearthside/common.h"
#include "hearthside/tensor.h"

namespace hearthside {
namespace nn {

inline thread_local bool g_no_grad = false;
inline thread_local bool g_finite_checks = true;

// Disables graph construction inside its scope (inference passes).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(g_no_grad) { g_no_grad = true; }
  ~NoGradGuard() { g_no_grad = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline void SetFiniteChecks(bool on) { g_finite_checks = on; }

template <typename S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void()> backward;
};

template <typename S>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<S> value, bool requires_grad = false)
      : node_(std::make_shared<Node<S>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad && !g_no_grad;
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<S>& value() const { return node_->value; }
  Tensor<S>& mutable_value() { return node_->value; }
  Tensor<S>& grad() { return node_->grad; }
  const Tensor<S>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::shared_ptr<Node<S>>& node() const { return node_; }

  void ZeroGrad() {
    if (node_) node_->grad = Tensor<S>();
  }

 private:
  std::shared_ptr<Node<S>> node_;
};

template <typename S>
Var<S> Constant(Tensor<S> value) {
  return Var<S>(std::move(value), false);
}

template <typename S>
Var<S> Param(Tensor<S> value) {
  return Var<S>(std::move(value), true);
}

namespace detail {

template <typename S>
void AccumGrad(Node<S>& node, const Tensor<S>& contribution) {
  if (!node.requires_grad) return;
  if (node.grad.empty()) {
    node.grad = Tensor<S>(node.value.shape);
  }
  HS_CHECK(node.grad.numel() == contribution.numel());
  for (std::int64_t i = 0; i < contribution.numel(); ++i) {
    node.grad.v[static_cast<std::size_t>(i)] +=
        contribution.v[static_cast<std::size_t>(i)];
  }
}

// Ensures a grad buffer exists so backward closures may write in place.
template <typename S>
Tensor<S>& GradBuffer(Node<S>& node) {
  if (node.grad.empty()) node.grad = Tensor<S>(node.value.shape);
  return node.grad;
}

template <typename S>
Var<S> MakeResult(Tensor<S> value, const char* op_name,
                  std::vector<Var<S>> parents) {
  if (g_finite_checks) CheckFinite(value, op_name);
  bool rg = false;
  if (!g_no_grad) {
    for (const auto& p : parents) rg = rg || p.requires_grad();
  }
  Var<S> out(std::move(value), rg);
  if (rg) {
    for (auto& p : parents) out.node()->parents.push_back(p.node());
  }
  return out;
}

}  // namespace detail

// Runs reverse-mode accumulation from a scalar root. Parameter gradients
// accumulate across calls until ZeroGrad.
template <typename S>
void Backward(const Var<S>& root) {
  Require(root.defined() && root.value().numel() == 1,
          "backward needs a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order over parents gives reverse-topological order.
  std::vector<Node<S>*> topo;
  std::unordered_set<Node<S>*> visited;
  struct Frame {
    Node<S>* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node<S>* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  Tensor<S> one({1});
  one.v[0] = S(1);
  detail::AccumGrad(*root.node(), one);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    if ((*it)->backward && !(*it)->grad.empty()) (*it)->backward();
  }
}

// ---------------------------------------------------------------------------
// Elementwise and scalar ops.

template <typename S>
Var<S> Add(const Var<S>& a, const Var<S>& b) {
  HS_CHECK(a.value().numel() == b.value().numel())
      << a.value().ShapeStr() << " vs " << b.value().ShapeStr();
  Tensor<S> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out.v[i] += b.value().v[i];
  }
  Var<S> r = detail::MakeResult(std::move(out), "add", {a, b});
  if (r.requires_grad()) {
    auto an = a.node(), bn = b.node();
    auto on = r.node().get();
    r.node()->backward = [an, bn, on]() {
      detail::AccumGrad(*an, on->grad);
      detail::AccumGrad(*bn, on->grad);
    };
  }
  return r;
}

template <typename S>
Var<S> Sub(const Var<S>& a, const Var<S>& b) {
  HS_CHECK(a.value().numel() == b.value().numel());
  Tensor<S> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out.v[i] -= b.value().v[i];
  Var<S> r = detail::MakeResult(std::move(out), "sub", {a, b});
  if (r.requires_grad()) {
    auto an = a.node(), bn = b.node();
    auto on = r.node().get();
    r.node()->backward = [an, bn, on]() {
      detail::AccumGrad(*an, on->grad);
      if (bn->requires_grad) {
        Tensor<S> neg = on->grad;
        for (auto& x : neg.v) x = -x;
        detail::AccumGrad(*bn, neg);
      }
    };
  }
  return r;
}

template <typename S>
Var<S> Mul(const Var<S>& a, const Var<S>& b) {
  HS_CHECK(a.value().numel() == b.value().numel());
  Tensor<S> out = a.value();
  for (std::int64_t i = 0; i < out.numel(); ++i) out.v[i] *= b.value().v[i];
  Var<S> r = detail::MakeResult(std::move(out), "mul", {a, b});
  if (r.requires_grad()) {
    auto an = a.node(), bn = b.node();
    auto on = r.node().get();
    r.node()->backward = [an, bn, on]() {
      if (an->requires_grad) {
        Tensor<S> da = on->grad;
        for (std::int64_t i = 0; i < da.numel(); ++i) da.v[i] *= bn->value.v[i];
        detail::AccumGrad(*an, da);
      }
      if (bn->requires_grad) {
        Tensor<S> db = on->grad;
        for (std::int64_t i = 0; i < db.numel(); ++i) db.v[i] *= an->value.v[i];
        detail::AccumGrad(*bn, db);
      }
    };
  }
  return r;
}

template <typename S>
Var<S> Scale(const Var<S>& x, double c) {
  Tensor<S> out = x.value();
  for (auto& v : out.v) v = static_cast<S>(v * c);
  Var<S> r = detail::MakeResult(std::move(out), "scale", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on, c]() {
      Tensor<S> dx = on->grad;
      for (auto& v : dx.v) v = static_cast<S>(v * c);
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

template <typename S>
Var<S> AddScalar(const Var<S>& x, double c) {
  Tensor<S> out = x.value();
  for (auto& v : out.v) v = static_cast<S>(v + c);
  Var<S> r = detail::MakeResult(std::move(out), "add_scalar", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on]() { detail::AccumGrad(*xn, on->grad); };
  }
  return r;
}

template <typename S>
Var<S> Log(const Var<S>& x) {
  Tensor<S> out = x.value();
  for (auto& v : out.v) v = std::log(v);
  Var<S> r = detail::MakeResult(std::move(out), "log", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on]() {
      Tensor<S> dx = on->grad;
      for (std::int64_t i = 0; i < dx.numel(); ++i) dx.v[i] /= xn->value.v[i];
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

template <typename S>
Var<S> Exp(const Var<S>& x) {
  Tensor<S> out = x.value();
  for (auto& v : out.v) v = std::exp(v);
  Var<S> r = detail::MakeResult(std::move(out), "exp", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on]() {
      Tensor<S> dx = on->grad;
      for (std::int64_t i = 0; i < dx.numel(); ++i) dx.v[i] *= on->value.v[i];
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

// Elementwise square root. Inputs must be non-negative; callers that may hit
// exact zeros add a small epsilon first, since the derivative blows up there.
template <typename S>
Var<S> Sqrt(const Var<S>& x) {
  Tensor<S> out = x.value();
  for (auto& v : out.v) v = std::sqrt(v);
  Var<S> r = detail::MakeResult(std::move(out), "sqrt", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on]() {
      Tensor<S> dx = on->grad;
      for (std::int64_t i = 0; i < dx.numel(); ++i) {
        dx.v[i] *= S(0.5) / on->value.v[i];
      }
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

// Cuts the graph: value passes through, gradient does not.
template <typename S>
Var<S> Detach(const Var<S>& x) {
  return Constant(x.value());
}

// ---------------------------------------------------------------------------
// Row-broadcast ops: x is (N, d), vec has d elements.

template <typename S>
Var<S> AddRowVec(const Var<S>& x, const Var<S>& b) {
  const int n = x.value().rows(), d = x.value().cols();
  HS_CHECK(b.value().numel() == d);
  Tensor<S> out = x.value();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out.at(i, j) += b.value().v[j];
  }
  Var<S> r = detail::MakeResult(std::move(out), "add_rowvec", {x, b});
  if (r.requires_grad()) {
    auto xn = x.node(), bn = b.node();
    auto on = r.node().get();
    r.node()->backward = [xn, bn, on, n, d]() {
      detail::AccumGrad(*xn, on->grad);
      if (bn->requires_grad) {
        Tensor<S> db(bn->value.shape);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) db.v[j] += on->grad.at(i, j);
        }
        detail::AccumGrad(*bn, db);
      }
    };
  }
  return r;
}

template <typename S>
Var<S> MulRowVec(const Var<S>& x, const Var<S>& g) {
  const int n = x.value().rows(), d = x.value().cols();
  HS_CHECK(g.value().numel() == d);
  Tensor<S> out = x.value();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) out.at(i, j) *= g.value().v[j];
  }
  Var<S> r = detail::MakeResult(std::move(out), "mul_rowvec", {x, g});
  if (r.requires_grad()) {
    auto xn = x.node(), gn = g.node();
    auto on = r.node().get();
    r.node()->backward = [xn, gn, on, n, d]() {
      if (xn->requires_grad) {
        Tensor<S> dx = on->grad;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) dx.at(i, j) *= gn->value.v[j];
        }
        detail::AccumGrad(*xn, dx);
      }
      if (gn->requires_grad) {
        Tensor<S> dg(gn->value.shape);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) {
            dg.v[j] += on->grad.at(i, j) * xn->value.at(i, j);
          }
        }
        detail::AccumGrad(*gn, dg);
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// Matrix products.

template <typename S>
Var<S> MatMul(const Var<S>& a, const Var<S>& b, bool trans_a = false,
              bool trans_b = false) {
  const auto& av = a.value();
  const auto& bv = b.value();
  HS_CHECK(av.rank() == 2 && bv.rank() == 2);
  const int m = trans_a ? av.dim(1) : av.dim(0);
  const int k = trans_a ? av.dim(0) : av.dim(1);
  const int kb = trans_b ? bv.dim(1) : bv.dim(0);
  const int n = trans_b ? bv.dim(0) : bv.dim(1);
  HS_CHECK(k == kb) << "matmul inner dims " << k << " vs " << kb;

  Tensor<S> out({m, n});
  Gemm(trans_a, trans_b, m, n, k, S(1), av.v.data(), av.dim(1), bv.v.data(),
       bv.dim(1), S(0), out.v.data(), n);
  Var<S> r = detail::MakeResult(std::move(out), "matmul", {a, b});
  if (r.requires_grad()) {
    auto an = a.node(), bn = b.node();
    auto on = r.node().get();
    r.node()->backward = [an, bn, on, m, n, k, trans_a, trans_b]() {
      const Tensor<S>& g = on->grad;
      if (an->requires_grad) {
        Tensor<S>& da = detail::GradBuffer(*an);
        // dA accumulated straight into the buffer with beta = 1.
        if (!trans_a) {
          // A (m,k): dA = g(m,n) x op(B) with op(B) shaped (n,k)
          Gemm(false, !trans_b, m, k, n, S(1), g.v.data(), n,
               bn->value.v.data(), bn->value.dim(1), S(1), da.v.data(), k);
        } else {
          // A stored (k,m): dA = op(B)(k,n) x gT(n,m)
          Gemm(trans_b, true, k, m, n, S(1), bn->value.v.data(),
               bn->value.dim(1), g.v.data(), n, S(1), da.v.data(), m);
        }
      }
      if (bn->requires_grad) {
        Tensor<S>& db = detail::GradBuffer(*bn);
        if (!trans_b) {
          // B (k,n): dB = op(A)T(k,m) x g(m,n)
          Gemm(!trans_a, false, k, n, m, S(1), an->value.v.data(),
               an->value.dim(1), g.v.data(), n, S(1), db.v.data(), n);
        } else {
          // B stored (n,k): dB = gT(n,m) x op(A)(m,k)
          Gemm(true, trans_a, n, k, m, S(1), g.v.data(), n, an->value.v.data(),
               an->value.dim(1), S(1), db.v.data(), k);
        }
      }
    };
  }
  return r;
}

// Batched (N, m, k) x (N, k, n); trans_b treats b as (N, n, k).
template <typename S>
Var<S> Bmm(const Var<S>& a, const Var<S>& b, bool trans_b = false) {
  const auto& av = a.value();
  const auto& bv = b.value();
  HS_CHECK(av.rank() == 3 && bv.rank() == 3 && av.dim(0) == bv.dim(0));
  const int nb = av.dim(0);
  const int m = av.dim(1);
  const int k = av.dim(2);
  const int n = trans_b ? bv.dim(1) : bv.dim(2);
  HS_CHECK((trans_b ? bv.dim(2) : bv.dim(1)) == k);

  Tensor<S> out({nb, m, n});
  const std::size_t sa = static_cast<std::size_t>(m) * k;
  const std::size_t sb = static_cast<std::size_t>(bv.dim(1)) * bv.dim(2);
  const std::size_t so = static_cast<std::size_t>(m) * n;
  for (int i = 0; i < nb; ++i) {
    Gemm(false, trans_b, m, n, k, S(1), av.v.data() + i * sa, k,
         bv.v.data() + i * sb, bv.dim(2), S(0), out.v.data() + i * so, n);
  }
  Var<S> r = detail::MakeResult(std::move(out), "bmm", {a, b});
  if (r.requires_grad()) {
    auto an = a.node(), bn = b.node();
    auto on = r.node().get();
    r.node()->backward = [an, bn, on, nb, m, n, k, sa, sb, so, trans_b]() {
      const Tensor<S>& g = on->grad;
      if (an->requires_grad) {
        Tensor<S>& da = detail::GradBuffer(*an);
        for (int i = 0; i < nb; ++i) {
          // da_i = g_i x op(b_i) with op(b_i) shaped (n,k)
          Gemm(false, !trans_b, m, k, n, S(1), g.v.data() + i * so, n,
               bn->value.v.data() + i * sb, bn->value.dim(2), S(1),
               da.v.data() + i * sa, k);
        }
      }
      if (bn->requires_grad) {
        Tensor<S>& db = detail::GradBuffer(*bn);
        for (int i = 0; i < nb; ++i) {
          if (!trans_b) {
            // db_i (k,n) = a_iT x g_i
            Gemm(true, false, k, n, m, S(1), an->value.v.data() + i * sa, k,
                 g.v.data() + i * so, n, S(1), db.v.data() + i * sb, n);
          } else {
            // db_i (n,k) = g_iT x a_i
            Gemm(true, false, n, k, m, S(1), g.v.data() + i * so, n,
                 an->value.v.data() + i * sa, k, S(1), db.v.data() + i * sb, k);
          }
        }
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// 1-D convolution via im2col. x is (B, Cin, L), w is (Cout, Cin, K),
// bias has Cout elements. Output (B, Cout, Lout).

template <typename S>
Var<S> Conv1d(const Var<S>& x, const Var<S>& w, const Var<S>& bias, int stride,
              int pad_left, int pad_right) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  HS_CHECK(xv.rank() == 3 && wv.rank() == 3);
  const int batch = xv.dim(0), cin = xv.dim(1), len = xv.dim(2);
  const int cout = wv.dim(0), kw = wv.dim(2);
  HS_CHECK(wv.dim(1) == cin);
  HS_CHECK(bias.value().numel() == cout);
  HS_CHECK(stride > 0 && pad_left >= 0 && pad_right >= 0);
  const int padded = len + pad_left + pad_right;
  HS_CHECK(padded >= kw) << "conv input shorter than kernel";
  const int lout = (padded - kw) / stride + 1;

  const int ck = cin * kw;
  // im2col buffers are kept for the backward pass.
  auto cols = std::make_shared<std::vector<Tensor<S>>>();
  cols->reserve(static_cast<std::size_t>(batch));
  Tensor<S> out({batch, cout, lout});
  for (int b = 0; b < batch; ++b) {
    Tensor<S> col({ck, lout});
    for (int c = 0; c < cin; ++c) {
      for (int t = 0; t < kw; ++t) {
        const int row = c * kw + t;
        for (int o = 0; o < lout; ++o) {
          const int src = o * stride + t - pad_left;
          col.v[static_cast<std::size_t>(row) * lout + o] =
              (src >= 0 && src < len)
                  ? xv.v[(static_cast<std::size_t>(b) * cin + c) * len + src]
                  : S(0);
        }
      }
    }
    // out_b (cout, lout) = W (cout, ck) x col (ck, lout)
    Gemm(false, false, cout, lout, ck, S(1), wv.v.data(), ck, col.v.data(),
         lout, S(0),
         out.v.data() + static_cast<std::size_t>(b) * cout * lout, lout);
    cols->push_back(std::move(col));
  }
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < cout; ++c) {
      S* row = out.v.data() + (static_cast<std::size_t>(b) * cout + c) * lout;
      const S bv = bias.value().v[static_cast<std::size_t>(c)];
      for (int o = 0; o < lout; ++o) row[o] += bv;
    }
  }

  Var<S> r = detail::MakeResult(std::move(out), "conv1d", {x, w, bias});
  if (r.requires_grad()) {
    auto xn = x.node(), wn = w.node(), bn = bias.node();
    auto on = r.node().get();
    r.node()->backward = [xn, wn, bn, on, cols, batch, cin, len, cout, kw,
                          lout, stride, pad_left, ck]() {
      const Tensor<S>& g = on->grad;
      if (bn->requires_grad) {
        Tensor<S> db(bn->value.shape);
        for (int b = 0; b < batch; ++b) {
          for (int c = 0; c < cout; ++c) {
            const S* row =
                g.v.data() + (static_cast<std::size_t>(b) * cout + c) * lout;
            for (int o = 0; o < lout; ++o) {
              db.v[static_cast<std::size_t>(c)] += row[o];
            }
          }
        }
        detail::AccumGrad(*bn, db);
      }
      if (wn->requires_grad) {
        Tensor<S>& dw = detail::GradBuffer(*wn);
        for (int b = 0; b < batch; ++b) {
          // dW (cout, ck) += g_b (cout, lout) x col_bT (lout, ck)
          Gemm(false, true, cout, ck, lout, S(1),
               g.v.data() + static_cast<std::size_t>(b) * cout * lout, lout,
               (*cols)[static_cast<std::size_t>(b)].v.data(), lout, S(1),
               dw.v.data(), ck);
        }
      }
      if (xn->requires_grad) {
        Tensor<S>& dx = detail::GradBuffer(*xn);
        Tensor<S> dcol({ck, lout});
        for (int b = 0; b < batch; ++b) {
          // dcol = WT (ck, cout) x g_b (cout, lout)
          Gemm(true, false, ck, lout, cout, S(1), wn->value.v.data(), ck,
               g.v.data() + static_cast<std::size_t>(b) * cout * lout, lout,
               S(0), dcol.v.data(), lout);
          for (int c = 0; c < cin; ++c) {
            for (int t = 0; t < kw; ++t) {
              const int row = c * kw + t;
              for (int o = 0; o < lout; ++o) {
                const int src = o * stride + t - pad_left;
                if (src >= 0 && src < len) {
                  dx.v[(static_cast<std::size_t>(b) * cin + c) * len + src] +=
                      dcol.v[static_cast<std::size_t>(row) * lout + o];
                }
              }
            }
          }
        }
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// Nonlinearities, dropout, softmax.

template <typename S>
Var<S> LeakyRelu(const Var<S>& x, double slope = 0.01) {
  Tensor<S> out = x.value();
  for (auto& v : out.v) {
    if (v < S(0)) v = static_cast<S>(v * slope);
  }
  Var<S> r = detail::MakeResult(std::move(out), "leaky_relu", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on, slope]() {
      Tensor<S> dx = on->grad;
      for (std::int64_t i = 0; i < dx.numel(); ++i) {
        if (xn->value.v[i] < S(0)) dx.v[i] = static_cast<S>(dx.v[i] * slope);
      }
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

// Inverted dropout; identity when !train. The mask is drawn from |rng| in
// element order, so a fixed seed reproduces it.
template <typename S>
Var<S> Dropout(const Var<S>& x, double p, Rng& rng, bool train) {
  Require(p >= 0 && p < 1, "dropout probability must lie in [0, 1)");
  if (!train || p == 0.0) return x;
  auto mask = std::make_shared<std::vector<S>>(x.value().v.size());
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  Tensor<S> out = x.value();
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    const S m = rng.Uniform() < p ? S(0) : keep_scale;
    (*mask)[i] = m;
    out.v[i] *= m;
  }
  Var<S> r = detail::MakeResult(std::move(out), "dropout", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on, mask]() {
      Tensor<S> dx = on->grad;
      for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= (*mask)[i];
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

template <typename S>
Var<S> SoftmaxLastDim(const Var<S>& x) {
  const int n = x.value().rows(), d = x.value().cols();
  Tensor<S> out = x.value();
  for (int i = 0; i < n; ++i) {
    S mx = out.at(i, 0);
    for (int j = 1; j < d; ++j) mx = std::max(mx, out.at(i, j));
    S sum = S(0);
    for (int j = 0; j < d; ++j) {
      out.at(i, j) = std::exp(out.at(i, j) - mx);
      sum += out.at(i, j);
    }
    for (int j = 0; j < d; ++j) out.at(i, j) /= sum;
  }
  Var<S> r = detail::MakeResult(std::move(out), "softmax", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on, n, d]() {
      Tensor<S> dx = on->grad;
      for (int i = 0; i < n; ++i) {
        S dot = S(0);
        for (int j = 0; j < d; ++j) dot += on->grad.at(i, j) * on->value.at(i, j);
        for (int j = 0; j < d; ++j) {
          dx.at(i, j) = on->value.at(i, j) * (on->grad.at(i, j) - dot);
        }
      }
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// Shape plumbing.

template <typename S>
Var<S> Reshape(const Var<S>& x, std::vector<int> shape) {
  HS_CHECK(Tensor<S>::Numel(shape) == x.value().numel());
  Tensor<S> out(std::move(shape), x.value().v);
  Var<S> r = detail::MakeResult(std::move(out), "reshape", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on]() {
      Tensor<S> dx(xn->value.shape, on->grad.v);
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

// (a, b, c, d) -> (a, c, b, d); the attention head split/merge step.
template <typename S>
Var<S> Permute0213(const Var<S>& x) {
  const auto& xv = x.value();
  HS_CHECK(xv.rank() == 4);
  const int a = xv.dim(0), b = xv.dim(1), c = xv.dim(2), d = xv.dim(3);
  Tensor<S> out({a, c, b, d});
  for (int i = 0; i < a; ++i) {
    for (int j = 0; j < b; ++j) {
      for (int k = 0; k < c; ++k) {
        const S* src = xv.v.data() +
                       ((static_cast<std::size_t>(i) * b + j) * c + k) * d;
        S* dst = out.v.data() +
                 ((static_cast<std::size_t>(i) * c + k) * b + j) * d;
        std::copy(src, src + d, dst);
      }
    }
  }
  Var<S> r = detail::MakeResult(std::move(out), "permute0213", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on, a, b, c, d]() {
      Tensor<S> dx(xn->value.shape);
      for (int i = 0; i < a; ++i) {
        for (int k = 0; k < c; ++k) {
          for (int j = 0; j < b; ++j) {
            const S* src = on->grad.v.data() +
                           ((static_cast<std::size_t>(i) * c + k) * b + j) * d;
            S* dst = dx.v.data() +
                     ((static_cast<std::size_t>(i) * b + j) * c + k) * d;
            std::copy(src, src + d, dst);
          }
        }
      }
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

template <typename S>
Var<S> ConcatCols(const std::vector<Var<S>>& xs) {
  HS_CHECK(!xs.empty());
  const int n = xs[0].value().rows();
  int total = 0;
  for (const auto& x : xs) {
    HS_CHECK(x.value().rows() == n);
    total += x.value().cols();
  }
  Tensor<S> out({n, total});
  int off = 0;
  for (const auto& x : xs) {
    const int d = x.value().cols();
    for (int i = 0; i < n; ++i) {
      std::copy(x.value().v.data() + static_cast<std::size_t>(i) * d,
                x.value().v.data() + static_cast<std::size_t>(i) * d + d,
                out.v.data() + static_cast<std::size_t>(i) * total + off);
    }
    off += d;
  }
  Var<S> r = detail::MakeResult(std::move(out), "concat_cols", xs);
  if (r.requires_grad()) {
    std::vector<std::shared_ptr<Node<S>>> nodes;
    std::vector<int> widths;
    for (const auto& x : xs) {
      nodes.push_back(x.node());
      widths.push_back(x.value().cols());
    }
    auto on = r.node().get();
    r.node()->backward = [nodes, widths, on, n, total]() {
      int off = 0;
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        const int d = widths[p];
        if (nodes[p]->requires_grad) {
          Tensor<S> dx({n, d});
          for (int i = 0; i < n; ++i) {
            std::copy(
                on->grad.v.data() + static_cast<std::size_t>(i) * total + off,
                on->grad.v.data() + static_cast<std::size_t>(i) * total + off + d,
                dx.v.data() + static_cast<std::size_t>(i) * d);
          }
          detail::AccumGrad(*nodes[p], dx);
        }
        off += d;
      }
    };
  }
  return r;
}

template <typename S>
Var<S> SliceCols(const Var<S>& x, int start, int len) {
  const int n = x.value().rows(), d = x.value().cols();
  HS_CHECK(start >= 0 && len > 0 && start + len <= d);
  Tensor<S> out({n, len});
  for (int i = 0; i < n; ++i) {
    std::copy(x.value().v.data() + static_cast<std::size_t>(i) * d + start,
              x.value().v.data() + static_cast<std::size_t>(i) * d + start + len,
              out.v.data() + static_cast<std::size_t>(i) * len);
  }
  Var<S> r = detail::MakeResult(std::move(out), "slice_cols", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on, n, d, start, len]() {
      Tensor<S> dx({n, d});
      for (int i = 0; i < n; ++i) {
        std::copy(on->grad.v.data() + static_cast<std::size_t>(i) * len,
                  on->grad.v.data() + static_cast<std::size_t>(i) * len + len,
                  dx.v.data() + static_cast<std::size_t>(i) * d + start);
      }
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

template <typename S>
Var<S> GatherRows(const Var<S>& x, std::vector<int> idx) {
  const int n = x.value().rows(), d = x.value().cols();
  for (int i : idx) HS_CHECK(i >= 0 && i < n);
  Tensor<S> out({static_cast<int>(idx.size()), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(x.value().v.data() + static_cast<std::size_t>(idx[r]) * d,
              x.value().v.data() + static_cast<std::size_t>(idx[r]) * d + d,
              out.v.data() + r * d);
  }
  Var<S> res = detail::MakeResult(std::move(out), "gather_rows", {x});
  if (res.requires_grad()) {
    auto xn = x.node();
    auto on = res.node().get();
    auto ids = std::make_shared<std::vector<int>>(std::move(idx));
    res.node()->backward = [xn, on, ids, n, d]() {
      Tensor<S> dx({n, d});
      for (std::size_t r = 0; r < ids->size(); ++r) {
        const S* src = on->grad.v.data() + r * d;
        S* dst = dx.v.data() + static_cast<std::size_t>((*ids)[r]) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
      detail::AccumGrad(*xn, dx);
    };
  }
  return res;
}

// y[r, k] = x[r, idx[r][k]]; used to pull target/distractor scores out of a
// similarity matrix.
template <typename S>
Var<S> GatherColsPerRow(const Var<S>& x, std::vector<std::vector<int>> idx) {
  const int n = x.value().rows(), d = x.value().cols();
  HS_CHECK(static_cast<int>(idx.size()) == n);
  const int k = idx.empty() ? 0 : static_cast<int>(idx[0].size());
  for (const auto& row : idx) {
    HS_CHECK(static_cast<int>(row.size()) == k);
    for (int c : row) HS_CHECK(c >= 0 && c < d);
  }
  Tensor<S> out({n, k});
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < k; ++c) out.at(r, c) = x.value().at(r, idx[r][c]);
  }
  Var<S> res = detail::MakeResult(std::move(out), "gather_cols", {x});
  if (res.requires_grad()) {
    auto xn = x.node();
    auto on = res.node().get();
    auto ids = std::make_shared<std::vector<std::vector<int>>>(std::move(idx));
    res.node()->backward = [xn, on, ids, n, d, k]() {
      Tensor<S> dx({n, d});
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < k; ++c) {
          dx.at(r, (*ids)[r][c]) += on->grad.at(r, c);
        }
      }
      detail::AccumGrad(*xn, dx);
    };
  }
  return res;
}

template <typename S>
Var<S> NormalizeRows(const Var<S>& x, double eps = 1e-8) {
  const int n = x.value().rows(), d = x.value().cols();
  auto norms = std::make_shared<std::vector<S>>(static_cast<std::size_t>(n));
  Tensor<S> out = x.value();
  for (int i = 0; i < n; ++i) {
    S acc = S(0);
    for (int j = 0; j < d; ++j) acc += out.at(i, j) * out.at(i, j);
    const S norm = static_cast<S>(std::sqrt(static_cast<double>(acc)) + eps);
    (*norms)[static_cast<std::size_t>(i)] = norm;
    for (int j = 0; j < d; ++j) out.at(i, j) /= norm;
  }
  Var<S> r = detail::MakeResult(std::move(out), "normalize_rows", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on, norms, n, d]() {
      Tensor<S> dx({n, d});
      for (int i = 0; i < n; ++i) {
        S dot = S(0);
        for (int j = 0; j < d; ++j) dot += on->grad.at(i, j) * on->value.at(i, j);
        const S inv = S(1) / (*norms)[static_cast<std::size_t>(i)];
        for (int j = 0; j < d; ++j) {
          dx.at(i, j) = (on->grad.at(i, j) - on->value.at(i, j) * dot) * inv;
        }
      }
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

// Replaces rows where mask is true with the learned embedding row.
template <typename S>
Var<S> MaskRowsReplace(const Var<S>& x, std::vector<char> mask,
                       const Var<S>& emb) {
  const int n = x.value().rows(), d = x.value().cols();
  HS_CHECK(static_cast<int>(mask.size()) == n);
  HS_CHECK(emb.value().numel() == d);
  Tensor<S> out = x.value();
  for (int i = 0; i < n; ++i) {
    if (mask[static_cast<std::size_t>(i)]) {
      for (int j = 0; j < d; ++j) out.at(i, j) = emb.value().v[j];
    }
  }
  Var<S> r = detail::MakeResult(std::move(out), "mask_rows", {x, emb});
  if (r.requires_grad()) {
    auto xn = x.node(), en = emb.node();
    auto on = r.node().get();
    auto m = std::make_shared<std::vector<char>>(std::move(mask));
    r.node()->backward = [xn, en, on, m, n, d]() {
      if (xn->requires_grad) {
        Tensor<S> dx = on->grad;
        for (int i = 0; i < n; ++i) {
          if ((*m)[static_cast<std::size_t>(i)]) {
            for (int j = 0; j < d; ++j) dx.at(i, j) = S(0);
          }
        }
        detail::AccumGrad(*xn, dx);
      }
      if (en->requires_grad) {
        Tensor<S> de(en->value.shape);
        for (int i = 0; i < n; ++i) {
          if ((*m)[static_cast<std::size_t>(i)]) {
            for (int j = 0; j < d; ++j) de.v[j] += on->grad.at(i, j);
          }
        }
        detail::AccumGrad(*en, de);
      }
    };
  }
  return r;
}

// ---------------------------------------------------------------------------
// Reductions.

// x is (B*T, d) with rows grouped by segment: output row b is the mean over
// rows [b*T, (b+1)*T).
template <typename S>
Var<S> MeanPoolTime(const Var<S>& x, int b, int t) {
  const int n = x.value().rows(), d = x.value().cols();
  HS_CHECK(n == b * t);
  Tensor<S> out({b, d});
  for (int i = 0; i < b; ++i) {
    for (int s = 0; s < t; ++s) {
      const S* row = x.value().v.data() +
                     (static_cast<std::size_t>(i) * t + s) * d;
      for (int j = 0; j < d; ++j) out.at(i, j) += row[j];
    }
    for (int j = 0; j < d; ++j) out.at(i, j) /= static_cast<S>(t);
  }
  Var<S> r = detail::MakeResult(std::move(out), "mean_pool_time", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on, b, t, d]() {
      Tensor<S> dx({b * t, d});
      for (int i = 0; i < b; ++i) {
        for (int s = 0; s < t; ++s) {
          S* row = dx.v.data() + (static_cast<std::size_t>(i) * t + s) * d;
          for (int j = 0; j < d; ++j) {
            row[j] = on->grad.at(i, j) / static_cast<S>(t);
          }
        }
      }
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

template <typename S>
Var<S> SumAll(const Var<S>& x) {
  Tensor<S> out({1});
  for (S v : x.value().v) out.v[0] += v;
  Var<S> r = detail::MakeResult(std::move(out), "sum_all", {x});
  if (r.requires_grad()) {
    auto xn = x.node();
    auto on = r.node().get();
    r.node()->backward = [xn, on]() {
      Tensor<S> dx(xn->value.shape);
      for (auto& v : dx.v) v = on->grad.v[0];
      detail::AccumGrad(*xn, dx);
    };
  }
  return r;
}

template <typename S>
Var<S> MeanAll(const Var<S>& x) {
  return Scale(SumAll(x), 1.0 / static_cast<double>(x.value().numel()));
}

// Weighted sum of scalar Vars: sum_i w_i s_i.
template <typename S>
Var<S> LinComb(const std::vector<Var<S>>& scalars,
               const std::vector<double>& weights) {
  HS_CHECK(scalars.size() == weights.size() && !scalars.empty());
  Var<S> acc = Scale(scalars[0], weights[0]);
  for (std::size_t i = 1; i < scalars.size(); ++i) {
    acc = Add(acc, Scale(scalars[i], weights[i]));
  }
  return acc;
}

// Mean cross-entropy over a subset of rows (all rows when subset is empty is
// NOT implied; pass the full index list explicitly). Stable log-softmax.
template <typename S>
Var<S> CeMeanRows(const Var<S>& logits, const std::vector<int>& targets,
                  const std::vector<int>& rows) {
  const int n = logits.value().rows(), c = logits.value().cols();
  HS_CHECK(static_cast<int>(targets.size()) == n);
  Require(!rows.empty(), "cross-entropy over an empty row subset");
  for (int r : rows) HS_CHECK(r >= 0 && r < n);
  for (int r : rows) HS_CHECK(targets[static_cast<std::size_t>(r)] >= 0 &&
                              targets[static_cast<std::size_t>(r)] < c);

  Tensor<S> out({1});
  double acc = 0.0;
  for (int r : rows) {
    const S* row = logits.value().v.data() + static_cast<std::size_t>(r) * c;
    S mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
    const double lse = static_cast<double>(mx) + std::log(sum);
    acc += lse - static_cast<double>(row[targets[static_cast<std::size_t>(r)]]);
  }
  out.v[0] = static_cast<S>(acc / static_cast<double>(rows.size()));

  Var<S> res = detail::MakeResult(std::move(out), "ce_mean", {logits});
  if (res.requires_grad()) {
    auto ln = logits.node();
    auto on = res.node().get();
    auto tgt = std::make_shared<std::vector<int>>(targets);
    auto sel = std::make_shared<std::vector<int>>(rows);
    res.node()->backward = [ln, on, tgt, sel, n, c]() {
      const S g = on->grad.v[0] / static_cast<S>(sel->size());
      Tensor<S> dx({n, c});
      for (int r : *sel) {
        const S* row = ln->value.v.data() + static_cast<std::size_t>(r) * c;
        S mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
          sum += std::exp(static_cast<double>(row[j] - mx));
        }
        for (int j = 0; j < c; ++j) {
          const double p = std::exp(static_cast<double>(row[j] - mx)) / sum;
          dx.at(r, j) =
              g * static_cast<S>(
                      p - (j == (*tgt)[static_cast<std::size_t>(r)] ? 1.0 : 0.0));
        }
      }
      detail::AccumGrad(*ln, dx);
    };
  }
  return res;
}

// ---------------------------------------------------------------------------
// Normalization layers (fused ops; statistics backward included).

template <typename S>
Var<S> LayerNormOp(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                   double eps = 1e-5) {
  const int n = x.value().rows(), d = x.value().cols();
  HS_CHECK(gamma.value().numel() == d && beta.value().numel() == d);
  auto xhat = std::make_shared<Tensor<S>>(std::vector<int>{n, d});
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<std::size_t>(n));
  Tensor<S> out({n, d});
  for (int i = 0; i < n; ++i) {
    const S* row = x.value().v.data() + static_cast<std::size_t>(i) * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += static_cast<double>(row[j]);
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = static_cast<double>(row[j]) - mean;
      var += c * c;
    }
    var /= d;
    const S istd = static_cast<S>(1.0 / std::sqrt(var + eps));
    (*inv_std)[static_cast<std::size_t>(i)] = istd;
    for (int j = 0; j < d; ++j) {
      const S xh = static_cast<S>((static_cast<double>(row[j]) - mean)) * istd;
      xhat->at(i, j) = xh;
      out.at(i, j) = xh * gamma.value().v[static_cast<std::size_t>(j)] +
                     beta.value().v[static_cast<std::size_t>(j)];
    }
  }
  Var<S> r = detail::MakeResult(std::move(out), "layer_norm", {x, gamma, beta});
  if (r.requires_grad()) {
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    auto on = r.node().get();
    r.node()->backward = [xn, gn, bn, on, xhat, inv_std, n, d]() {
      const Tensor<S>& g = on->grad;
      if (gn->requires_grad || bn->requires_grad) {
        Tensor<S> dg(gn->value.shape), db(bn->value.shape);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) {
            dg.v[static_cast<std::size_t>(j)] += g.at(i, j) * xhat->at(i, j);
            db.v[static_cast<std::size_t>(j)] += g.at(i, j);
          }
        }
        detail::AccumGrad(*gn, dg);
        detail::AccumGrad(*bn, db);
      }
      if (xn->requires_grad) {
        Tensor<S> dx({n, d});
        for (int i = 0; i < n; ++i) {
          double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat * xhat)
          for (int j = 0; j < d; ++j) {
            const double dxh = static_cast<double>(
                g.at(i, j) * gn->value.v[static_cast<std::size_t>(j)]);
            m1 += dxh;
            m2 += dxh * static_cast<double>(xhat->at(i, j));
          }
          m1 /= d;
          m2 /= d;
          for (int j = 0; j < d; ++j) {
            const double dxh = static_cast<double>(
                g.at(i, j) * gn->value.v[static_cast<std::size_t>(j)]);
            dx.at(i, j) = static_cast<S>(
                (dxh - m1 - static_cast<double>(xhat->at(i, j)) * m2) *
                static_cast<double>((*inv_std)[static_cast<std::size_t>(i)]));
          }
        }
        detail::AccumGrad(*xn, dx);
      }
    };
  }
  return r;
}

// 1-D batch norm over the batch dimension of (N, C). In train mode the
// batch statistics normalize and the running stats update as a side effect;
// in eval mode the running stats normalize and nothing mutates.
template <typename S>
Var<S> BatchNorm1dOp(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                     Tensor<S>* running_mean, Tensor<S>* running_var,
                     double momentum, double eps, bool train) {
  const int n = x.value().rows(), c = x.value().cols();
  HS_CHECK(gamma.value().numel() == c && beta.value().numel() == c);
  HS_CHECK(running_mean->numel() == c && running_var->numel() == c);

  auto xhat = std::make_shared<Tensor<S>>(std::vector<int>{n, c});
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<std::size_t>(c));
  Tensor<S> out({n, c});
  if (train) {
    for (int j = 0; j < c; ++j) {
      double mean = 0.0;
      for (int i = 0; i < n; ++i) mean += static_cast<double>(x.value().at(i, j));
      mean /= n;
      double var = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d = static_cast<double>(x.value().at(i, j)) - mean;
        var += d * d;
      }
      var /= n;  // biased variance normalizes the batch
      const S istd = static_cast<S>(1.0 / std::sqrt(var + eps));
      (*inv_std)[static_cast<std::size_t>(j)] = istd;
      for (int i = 0; i < n; ++i) {
        const S xh =
            static_cast<S>(static_cast<double>(x.value().at(i, j)) - mean) *
            istd;
        xhat->at(i, j) = xh;
        out.at(i, j) = xh * gamma.value().v[static_cast<std::size_t>(j)] +
                       beta.value().v[static_cast<std::size_t>(j)];
      }
      const double unbiased = n > 1 ? var * n / (n - 1) : var;
      running_mean->v[static_cast<std::size_t>(j)] = static_cast<S>(
          (1.0 - momentum) *
              static_cast<double>(running_mean->v[static_cast<std::size_t>(j)]) +
          momentum * mean);
      running_var->v[static_cast<std::size_t>(j)] = static_cast<S>(
          (1.0 - momentum) *
              static_cast<double>(running_var->v[static_cast<std::size_t>(j)]) +
          momentum * unbiased);
    }
  } else {
    for (int j = 0; j < c; ++j) {
      const double mean =
          static_cast<double>(running_mean->v[static_cast<std::size_t>(j)]);
      const double var =
          static_cast<double>(running_var->v[static_cast<std::size_t>(j)]);
      const S istd = static_cast<S>(1.0 / std::sqrt(var + eps));
      (*inv_std)[static_cast<std::size_t>(j)] = istd;
      for (int i = 0; i < n; ++i) {
        const S xh =
            static_cast<S>(static_cast<double>(x.value().at(i, j)) - mean) *
            istd;
        xhat->at(i, j) = xh;
        out.at(i, j) = xh * gamma.value().v[static_cast<std::size_t>(j)] +
                       beta.value().v[static_cast<std::size_t>(j)];
      }
    }
  }

  Var<S> r = detail::MakeResult(std::move(out), "batch_norm", {x, gamma, beta});
  if (r.requires_grad()) {
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    auto on = r.node().get();
    r.node()->backward = [xn, gn, bn, on, xhat, inv_std, n, c, train]() {
      const Tensor<S>& g = on->grad;
      if (gn->requires_grad || bn->requires_grad) {
        Tensor<S> dg(gn->value.shape), db(bn->value.shape);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < c; ++j) {
            dg.v[static_cast<std::size_t>(j)] += g.at(i, j) * xhat->at(i, j);
            db.v[static_cast<std::size_t>(j)] += g.at(i, j);
          }
        }
        detail::AccumGrad(*gn, dg);
        detail::AccumGrad(*bn, db);
      }
      if (xn->requires_grad) {
        Tensor<S> dx({n, c});
        if (train) {
          // Batch statistics depend on x, so the mean/var paths contribute.
          for (int j = 0; j < c; ++j) {
            double m1 = 0.0, m2 = 0.0;
            for (int i = 0; i < n; ++i) {
              const double dxh = static_cast<double>(
                  g.at(i, j) * gn->value.v[static_cast<std::size_t>(j)]);
              m1 += dxh;
              m2 += dxh * static_cast<double>(xhat->at(i, j));
            }
            m1 /= n;
            m2 /= n;
            for (int i = 0; i < n; ++i) {
              const double dxh = static_cast<double>(
                  g.at(i, j) * gn->value.v[static_cast<std::size_t>(j)]);
              dx.at(i, j) = static_cast<S>(
                  (dxh - m1 - static_cast<double>(xhat->at(i, j)) * m2) *
                  static_cast<double>((*inv_std)[static_cast<std::size_t>(j)]));
            }
          }
        } else {
          for (int j = 0; j < c; ++j) {
            for (int i = 0; i < n; ++i) {
              dx.at(i, j) = g.at(i, j) *
                            gn->value.v[static_cast<std::size_t>(j)] *
                            (*inv_std)[static_cast<std::size_t>(j)];
            }
          }
        }
        detail::AccumGrad(*xn, dx);
      }
    };
  }
  return r;
}

}  // namespace nn
}  // namespace hearthside

#endif  // HEARTHSIDE_AUTODIFF_H_
