// tests/test_nn.cc

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

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "hearthside/autodiff.h"
#include "hearthside/checkpoint.h"
#include "hearthside/common.h"
#include "hearthside/gradcheck.h"
#include "hearthside/nn_layers.h"
#include "hearthside/nn_optim.h"
#include "hearthside/tensor.h"

using namespace hearthside;
using namespace hearthside::nn;

namespace {

Tensor<double> RandT(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.v) v = rng.Uniform(-scale, scale);
  return t;
}

// Projects a tensor to a scalar with fixed random weights, so gradients of
// every output coordinate are exercised without symmetry cancellation.
Var<double> ScalarOf(const Var<double>& x, Rng& rng) {
  Tensor<double> w(x.value().shape);
  for (auto& v : w.v) v = rng.Uniform(-1.0, 1.0);
  return SumAll(Mul(x, Constant(std::move(w))));
}

}  // namespace

TEST_CASE("gradient of sum of squares is analytic") {
  Rng rng(1);
  auto x = Param(RandT({4, 5}, rng));
  auto f = [&]() { return SumAll(Mul(x, x)); };
  const auto report = CheckGradients(f, {{"x", x}});
  CHECK(report.max_rel_err < 1e-9);
  // And the reverse-mode gradient equals 2x exactly.
  x.ZeroGrad();
  Backward(f());
  for (std::int64_t i = 0; i < x.value().numel(); ++i) {
    CHECK(x.grad().v[static_cast<std::size_t>(i)] ==
          doctest::Approx(2.0 * x.value().v[static_cast<std::size_t>(i)])
              .epsilon(1e-12));
  }
}

TEST_CASE("linear plus leaky-relu plus cross-entropy checks out") {
  Rng rng(2);
  Linear<double> lin(6, 4, rng);
  auto x = Param(RandT({5, 6}, rng));
  const std::vector<int> targets = {0, 3, 1, 2, 0};
  const std::vector<int> rows = {0, 1, 2, 3, 4};
  auto f = [&]() {
    return CeMeanRows(LeakyRelu(lin.Forward(x)), targets, rows);
  };
  std::vector<NamedParam<double>> params = {{"x", x}};
  lin.Collect("lin", &params, nullptr);
  const auto report = CheckGradients(f, params);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("elementwise and scalar ops pass gradient checks") {
  Rng rng(3);
  auto a = Param(RandT({3, 4}, rng));
  auto b = Param(RandT({3, 4}, rng));
  Rng wr(30);
  auto f = [&]() {
    Var<double> sum = Add(a, b);
    Var<double> diff = Sub(a, b);
    Var<double> prod = Mul(sum, diff);
    Var<double> scaled = Scale(prod, 0.7);
    Var<double> logd = Log(AddScalar(Mul(a, a), 1.5));
    Var<double> expd = Exp(Scale(b, 0.3));
    Var<double> rooted = Sqrt(AddScalar(Mul(b, b), 0.5));
    Rng local(30);
    return Add(Add(Add(ScalarOf(scaled, local), ScalarOf(logd, local)),
                   ScalarOf(expd, local)),
               ScalarOf(rooted, local));
  };
  const auto report = CheckGradients(f, {{"a", a}, {"b", b}});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("sqrt values match the reference function") {
  Tensor<double> t({3});
  t.v = {0.25, 4.0, 9.0};
  auto x = Param(std::move(t));
  Var<double> y = Sqrt(x);
  CHECK(y.value().v[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y.value().v[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(y.value().v[2] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("matmul gradients hold for all transpose combinations") {
  Rng rng(4);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      auto a = Param(RandT(ta ? std::vector<int>{4, 3} : std::vector<int>{3, 4},
                           rng));
      auto b = Param(RandT(tb ? std::vector<int>{5, 4} : std::vector<int>{4, 5},
                           rng));
      auto f = [&]() {
        Rng local(40);
        return ScalarOf(MatMul(a, b, ta, tb), local);
      };
      const auto report = CheckGradients(f, {{"a", a}, {"b", b}});
      CAPTURE(ta);
      CAPTURE(tb);
      CHECK(report.max_rel_err < 1e-6);
    }
  }
}

TEST_CASE("batched matmul gradients hold with and without transpose") {
  Rng rng(5);
  for (bool tb : {false, true}) {
    auto a = Param(RandT({2, 3, 4}, rng));
    auto b = Param(RandT(tb ? std::vector<int>{2, 5, 4}
                            : std::vector<int>{2, 4, 5},
                         rng));
    auto f = [&]() {
      Rng local(50);
      return ScalarOf(Bmm(a, b, tb), local);
    };
    const auto report = CheckGradients(f, {{"a", a}, {"b", b}});
    CAPTURE(tb);
    CHECK(report.max_rel_err < 1e-6);
  }
}

TEST_CASE("convolution gradients hold with stride and asymmetric padding") {
  Rng rng(6);
  auto x = Param(RandT({2, 3, 11}, rng));
  auto w = Param(RandT({4, 3, 3}, rng, 0.5));
  auto b = Param(RandT({4}, rng, 0.1));
  auto f = [&]() {
    Rng local(60);
    return ScalarOf(Conv1d(x, w, b, /*stride=*/2, /*pad_left=*/1,
                           /*pad_right=*/2),
                    local);
  };
  const auto report = CheckGradients(f, {{"x", x}, {"w", w}, {"b", b}});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("shape and selection ops pass gradient checks") {
  Rng rng(7);
  auto x = Param(RandT({4, 6}, rng));
  auto table = Param(RandT({5, 3}, rng));
  auto f = [&]() {
    Rng local(70);
    Var<double> sliced = SliceCols(x, 1, 3);
    Var<double> cat = ConcatCols<double>({sliced, GatherRows(table, {0, 2, 4, 2})});
    Var<double> perm = Reshape(
        Permute0213(Reshape(cat, {2, 2, 2, 3})), {4, 6});
    Var<double> picked = GatherColsPerRow(
        perm, {{0, 2}, {1, 1}, {5, 3}, {4, 0}});
    Var<double> pooled = MeanPoolTime(perm, 2, 2);
    return Add(ScalarOf(picked, local), ScalarOf(pooled, local));
  };
  const auto report = CheckGradients(f, {{"x", x}, {"table", table}});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("row broadcast ops pass gradient checks") {
  Rng rng(8);
  auto x = Param(RandT({5, 4}, rng));
  auto bias = Param(RandT({4}, rng));
  auto gain = Param(RandT({4}, rng));
  auto f = [&]() {
    Rng local(80);
    return ScalarOf(MulRowVec(AddRowVec(x, bias), gain), local);
  };
  const auto report =
      CheckGradients(f, {{"x", x}, {"bias", bias}, {"gain", gain}});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("softmax normalize and mask ops pass gradient checks") {
  Rng rng(9);
  auto x = Param(RandT({4, 5}, rng));
  auto emb = Param(RandT({5}, rng));
  auto f = [&]() {
    Rng local(90);
    Var<double> sm = SoftmaxLastDim(x);
    Var<double> nr = NormalizeRows(AddScalar(x, 0.1));
    Var<double> masked = MaskRowsReplace(x, {1, 0, 1, 0}, emb);
    return Add(Add(ScalarOf(sm, local), ScalarOf(nr, local)),
               ScalarOf(masked, local));
  };
  const auto report = CheckGradients(f, {{"x", x}, {"emb", emb}});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(10);
  auto x = Constant(RandT({7, 9}, rng, 3.0));
  const auto y = SoftmaxLastDim(x);
  for (int i = 0; i < 7; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 9; ++j) sum += y.value().at(i, j);
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("cross-entropy over a row subset checks out") {
  Rng rng(11);
  auto logits = Param(RandT({6, 4}, rng, 2.0));
  const std::vector<int> targets = {1, 0, 3, 2, 1, 0};
  auto f = [&]() { return CeMeanRows(logits, targets, {0, 2, 5}); };
  const auto report = CheckGradients(f, {{"logits", logits}});
  CHECK(report.max_rel_err < 1e-6);
  // Unselected rows receive zero gradient.
  logits.ZeroGrad();
  Backward(f());
  for (int j = 0; j < 4; ++j) {
    CHECK(logits.grad().at(1, j) == 0.0);
    CHECK(logits.grad().at(3, j) == 0.0);
    CHECK(logits.grad().at(4, j) == 0.0);
  }
  CHECK_THROWS_AS(CeMeanRows(logits, targets, {}), Error);
}

TEST_CASE("dropout gradients hold under a fixed mask seed") {
  Rng rng(12);
  auto x = Param(RandT({6, 5}, rng));
  auto f = [&]() {
    Rng mask_rng(120);  // recreated every call: identical mask
    Rng local(121);
    return ScalarOf(Dropout(x, 0.3, mask_rng, /*train=*/true), local);
  };
  const auto report = CheckGradients(f, {{"x", x}});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("dropout in eval mode is the identity") {
  Rng rng(13);
  auto x = Constant(RandT({3, 3}, rng));
  Rng unused(0);
  const auto y = Dropout(x, 0.5, unused, /*train=*/false);
  CHECK(y.value().v == x.value().v);
}

TEST_CASE("layer norm gradients hold") {
  Rng rng(14);
  auto x = Param(RandT({4, 6}, rng, 2.0));
  LayerNorm<double> ln(6);
  auto f = [&]() {
    Rng local(140);
    return ScalarOf(ln.Forward(x), local);
  };
  std::vector<NamedParam<double>> params = {{"x", x}};
  ln.Collect("ln", &params, nullptr);
  const auto report = CheckGradients(f, params);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("batch norm gradients hold in both modes") {
  Rng rng(15);
  auto x = Param(RandT({8, 3}, rng, 2.0));
  BatchNorm1d<double> bn(3);

  SUBCASE("train mode differentiates through batch statistics") {
    auto f = [&]() {
      Rng local(150);
      return ScalarOf(bn.Forward(x, /*train=*/true), local);
    };
    std::vector<NamedParam<double>> params = {{"x", x}};
    bn.Collect("bn", &params, nullptr);
    const auto report = CheckGradients(f, params);
    CHECK(report.max_rel_err < 1e-4);
  }

  SUBCASE("eval mode uses running statistics") {
    // Prime the running stats, then check the eval path.
    {
      NoGradGuard ng;
      bn.Forward(x, /*train=*/true);
    }
    auto f = [&]() {
      Rng local(151);
      return ScalarOf(bn.Forward(x, /*train=*/false), local);
    };
    std::vector<NamedParam<double>> params = {{"x", x}};
    bn.Collect("bn", &params, nullptr);
    const auto report = CheckGradients(f, params);
    CHECK(report.max_rel_err < 1e-6);

    // Eval output is deterministic and independent of batch composition.
    NoGradGuard ng;
    const auto y1 = bn.Forward(x, false);
    const auto y2 = bn.Forward(x, false);
    CHECK(y1.value().v == y2.value().v);
  }
}

TEST_CASE("self-attention and transformer blocks pass gradient checks") {
  Rng rng(16);
  const int d = 8, heads = 2, batch = 2, time = 3;
  auto x = Param(RandT({batch * time, d}, rng));

  SUBCASE("attention") {
    MultiHeadSelfAttention<double> attn(d, heads, rng);
    auto f = [&]() {
      Rng local(160);
      return ScalarOf(attn.Forward(x, batch, time), local);
    };
    std::vector<NamedParam<double>> params = {{"x", x}};
    attn.Collect("attn", &params, nullptr);
    const auto report = CheckGradients(f, params);
    CHECK(report.max_rel_err < 1e-6);
  }

  SUBCASE("full block with dropout active") {
    TransformerLayer<double> layer(d, heads, 2 * d, /*dropout=*/0.1, rng);
    auto f = [&]() {
      Rng drop_rng(161);
      Rng local(162);
      return ScalarOf(layer.Forward(x, batch, time, drop_rng, /*train=*/true),
                      local);
    };
    std::vector<NamedParam<double>> params = {{"x", x}};
    layer.Collect("layer", &params, nullptr);
    // Through the composed block some weight coordinates carry gradients
    // around 3e-5 while evaluation roundoff puts a ~1e-10 absolute noise
    // floor on the difference quotient, so the per-coordinate relative
    // error bottoms out near 2e-6 no matter the step size. The bound here
    // is therefore looser than the single-layer ones.
    const auto report = CheckGradients(f, params);
    CHECK(report.max_rel_err < 1e-5);
  }
}

TEST_CASE("a variable used twice accumulates both contributions") {
  Tensor<double> t({2});
  t.v = {3.0, -2.0};
  auto x = Param(std::move(t));
  // y = sum(x*x + x) so dy/dx = 2x + 1.
  Backward(SumAll(Add(Mul(x, x), x)));
  CHECK(x.grad().v[0] == doctest::Approx(7.0));
  CHECK(x.grad().v[1] == doctest::Approx(-3.0));
}

TEST_CASE("no-grad scope builds constants") {
  Rng rng(17);
  auto x = Param(RandT({2, 2}, rng));
  NoGradGuard ng;
  const auto y = Mul(x, x);
  CHECK(!y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("non-finite op outputs trip the checked error") {
  Tensor<double> z({2});
  z.v = {0.0, 1.0};
  auto x = Constant(std::move(z));
  CHECK_THROWS_AS(Log(x), Error);  // log(0) = -inf
  SetFiniteChecks(false);
  CHECK_NOTHROW(Log(x));
  SetFiniteChecks(true);
}

TEST_CASE("adam follows the closed form at the first step") {
  Tensor<float> t({3});
  t.v = {1.0f, 2.0f, 3.0f};
  auto p = Param(std::move(t));
  Adam<float> adam({{p, 0}}, {1e-2});

  SUBCASE("zero gradient leaves parameters unchanged") {
    Backward(Scale(SumAll(p), 0.0));  // gradient identically zero
    adam.Step();
    CHECK(adam.step_count() == 1);
    CHECK(p.value().v[0] == 1.0f);
    CHECK(p.value().v[1] == 2.0f);
  }

  SUBCASE("first update has magnitude lr in each coordinate") {
    Tensor<float> g({3});
    g.v = {0.5f, -0.25f, 2.0f};
    Backward(SumAll(Mul(p, Constant(g))));
    adam.Step();
    // Delta = -lr * g / (|g| + eps) = -lr * sign(g) up to eps terms.
    CHECK(p.value().v[0] == doctest::Approx(1.0 - 1e-2).epsilon(1e-6));
    CHECK(p.value().v[1] == doctest::Approx(2.0 + 1e-2).epsilon(1e-6));
    CHECK(p.value().v[2] == doctest::Approx(3.0 - 1e-2).epsilon(1e-6));
  }
}

TEST_CASE("parameter groups keep independent learning rates") {
  Tensor<float> ta({1}), tb({1});
  ta.v = {0.0f};
  tb.v = {0.0f};
  auto a = Param(std::move(ta));
  auto b = Param(std::move(tb));
  Adam<float> adam({{a, 0}, {b, 1}}, {1e-4, 1e-5});
  Tensor<float> one({1});
  one.v = {1.0f};
  Backward(Add(SumAll(Mul(a, Constant(one))), SumAll(Mul(b, Constant(one)))));
  adam.Step();
  CHECK(a.value().v[0] == doctest::Approx(-1e-4).epsilon(1e-6));
  CHECK(b.value().v[0] == doctest::Approx(-1e-5).epsilon(1e-6));
}

TEST_CASE("new-bob anneals on stalled improvement") {
  Tensor<float> t({1});
  auto p = Param(std::move(t));
  Adam<float> adam({{p, 0}, {p, 1}}, {1e-4, 1e-5});
  NewBob nb;

  CHECK(!nb.Update(0.50, &adam));  // baseline
  CHECK(adam.group_lrs()[0] == doctest::Approx(1e-4));

  CHECK(!nb.Update(0.55, &adam));  // +10 percent, no anneal
  CHECK(adam.group_lrs()[0] == doctest::Approx(1e-4));
  CHECK(nb.best_metric == doctest::Approx(0.55));

  CHECK(nb.Update(0.55, &adam));  // flat: both groups halve
  CHECK(adam.group_lrs()[0] == doctest::Approx(5e-5));
  CHECK(adam.group_lrs()[1] == doctest::Approx(5e-6));
}

TEST_CASE("new-bob halves twice over a flat sequence") {
  Tensor<float> t({1});
  auto p = Param(std::move(t));
  Adam<float> adam({{p, 0}}, {1e-4});
  NewBob nb;
  nb.Update(0.50, &adam);
  nb.Update(0.50, &adam);
  nb.Update(0.50, &adam);
  CHECK(adam.group_lrs()[0] == doctest::Approx(2.5e-5));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "hearthside_nn_test";
  fs::remove_all(dir);

  Rng rng(18);
  Linear<float> lin(3, 2, rng);
  BatchNorm1d<float> bn(2);
  bn.running_mean.v = {0.25f, -0.75f};
  std::vector<NamedParam<float>> params;
  std::vector<NamedBuffer<float>> buffers;
  lin.Collect("lin", &params, &buffers);
  bn.Collect("bn", &params, &buffers);

  nlohmann::json config = {{"purpose", "test"}, {"dim", 3}};
  const std::string path = (dir / "ck" / "model.ckpt").string();
  SaveCheckpoint(path, config, params, buffers);

  const auto loaded = LoadCheckpoint(path);
  CHECK(loaded.config.at("purpose") == "test");
  CHECK(loaded.config.at("dim") == 3);
  CHECK(loaded.tensors.size() == params.size() + buffers.size());

  // Fresh layers, then restore: every tensor matches bit for bit.
  Rng rng2(19);
  Linear<float> lin2(3, 2, rng2);
  BatchNorm1d<float> bn2(2);
  std::vector<NamedParam<float>> params2;
  std::vector<NamedBuffer<float>> buffers2;
  lin2.Collect("lin", &params2, &buffers2);
  bn2.Collect("bn", &params2, &buffers2);
  AssignAll(loaded, params2, buffers2);
  CHECK(lin2.w.value().v == lin.w.value().v);
  CHECK(lin2.b.value().v == lin.b.value().v);
  CHECK(bn2.running_mean.v == bn.running_mean.v);

  // Partial restore by intersection.
  Rng rng3(20);
  Linear<float> lin3(3, 2, rng3);
  std::vector<NamedParam<float>> params3;
  lin3.Collect("lin", &params3, nullptr);
  CHECK(AssignIntersection(loaded, params3, {}) == 2);
  CHECK(lin3.w.value().v == lin.w.value().v);

  // Strict restore into a smaller model rejects the extras...
  CHECK_THROWS_AS(AssignAll(loaded, params3, {}), Error);
  // ...unless extras are allowed.
  CHECK_NOTHROW(AssignAll(loaded, params3, {}, /*allow_extra=*/true));

  // Missing tensors are always an error.
  std::vector<NamedParam<float>> params4 = params3;
  Rng rng4(21);
  Linear<float> other(4, 4, rng4);
  other.Collect("other", &params4, nullptr);
  CHECK_THROWS_AS(AssignAll(loaded, params4, {}, true), Error);

  fs::remove_all(dir);
}

TEST_CASE("single threaded blas multiplies correctly") {
  UseSingleThreadedBlas();
  // 2x3 times 3x2 with known values.
  Tensor<float> a({2, 3});
  a.v = {1, 2, 3, 4, 5, 6};
  Tensor<float> b({3, 2});
  b.v = {7, 8, 9, 10, 11, 12};
  Tensor<float> c({2, 2});
  Gemm(false, false, 2, 2, 3, 1.0f, a.v.data(), 3, b.v.data(), 2, 0.0f,
       c.v.data(), 2);
  CHECK(c.v[0] == 58.0f);
  CHECK(c.v[1] == 64.0f);
  CHECK(c.v[2] == 139.0f);
  CHECK(c.v[3] == 154.0f);
}
