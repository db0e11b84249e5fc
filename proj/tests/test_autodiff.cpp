#include <gtest/gtest.h>

#include "support.hpp"
#include "tailbalance/autodiff.hpp"
#include "tailbalance/error.hpp"
#include "tailbalance/losses.hpp"

namespace tailbalance {
namespace {

using testing::random_labels;
using testing::random_mlp;
using testing::random_tensor;

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kIo;
}

// Sum of per-row losses: used where an unreduced loss is easier to reason about.
LossValue sum_ce(const Tensor2& logits, std::span<const int> labels) {
  LossValue v = cross_entropy(logits, labels);
  const double n = static_cast<double>(labels.size());
  v.loss *= n;
  for (double& g : v.grad_logits.values()) g *= n;
  return v;
}

// Squared-error "loss" on the raw outputs; lets tape tests seed arbitrary grads.
double dot(const Tensor2& a, const Tensor2& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

TEST(Tape, AffineIdentityAndBiasOnly) {
  Rng rng(1);
  Tape t;
  const Tensor2 x = random_tensor(3, 4, rng);
  const auto xi = t.constant(x);
  const auto out = t.affine(xi, t.constant(Tensor2::identity(4)), t.constant(Tensor2(1, 4, 0.0)));
  EXPECT_EQ(t.value(out), x);

  const Tensor2 b(1, 3, {1.5, -2.0, 0.25});
  const auto zero = t.affine(t.constant(Tensor2(2, 5, 0.0)), t.constant(random_tensor(3, 5, rng)),
                             t.constant(b));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(t.value(zero)(i, j), b(0, j));
}

TEST(Tape, AffineRejectsMismatchedShapes) {
  Tape t;
  const auto x = t.constant(Tensor2(2, 3, 1.0));
  const auto w = t.parameter(Tensor2(4, 2, 1.0));
  const auto b = t.parameter(Tensor2(1, 4, 0.0));
  EXPECT_EQ(code_of([&] { t.affine(x, w, b); }), ErrorCode::kInvalidArgument);
  const auto w_ok = t.parameter(Tensor2(4, 3, 1.0));
  const auto b_bad = t.parameter(Tensor2(1, 3, 0.0));
  EXPECT_EQ(code_of([&] { t.affine(x, w_ok, b_bad); }), ErrorCode::kInvalidArgument);
}

TEST(Tape, ReluValuesAndSubgradient) {
  Tape t;
  const auto x = t.parameter(Tensor2(1, 3, {1.0, -1.0, 0.0}));
  const auto y = t.relu(x);
  EXPECT_EQ(t.value(y), Tensor2(1, 3, {1.0, 0.0, 0.0}));
  t.backward(y, Tensor2(1, 3, 1.0));
  EXPECT_EQ(t.grad(x), Tensor2(1, 3, {1.0, 0.0, 0.0}));
}

TEST(Tape, AffineGradientsMatchFiniteDifferences) {
  // N=3, D=4, M=5 with loss = <out, S> for a fixed random S.
  Rng rng(5);
  const Tensor2 x = random_tensor(3, 4, rng), w = random_tensor(5, 4, rng),
                b = random_tensor(1, 5, rng), s = random_tensor(3, 5, rng);
  Tape t;
  const auto xi = t.parameter(x), wi = t.parameter(w), bi = t.parameter(b);
  const auto out = t.affine(xi, wi, bi);
  t.backward(out, s);

  auto loss = [&](const Tensor2& xx, const Tensor2& ww, const Tensor2& bb) {
    Tape u;
    return dot(u.value(u.affine(u.constant(xx), u.constant(ww), u.constant(bb))), s);
  };
  const double eps = 1e-5;
  double worst = 0.0;
  auto probe = [&](Tensor2 base, NodeId id, int which) {
    for (std::size_t i = 0; i < base.values().size(); ++i) {
      Tensor2 p = base, m = base;
      p.values()[i] += eps;
      m.values()[i] -= eps;
      const double lp = which == 0 ? loss(p, w, b) : which == 1 ? loss(x, p, b) : loss(x, w, p);
      const double lm = which == 0 ? loss(m, w, b) : which == 1 ? loss(x, m, b) : loss(x, w, m);
      const double fd = (lp - lm) / (2 * eps);
      const double g = t.grad(id).values()[i];
      worst = std::max(worst, std::abs(fd - g) / std::max(std::abs(g), 1e-8));
    }
  };
  probe(x, xi, 0);
  probe(w, wi, 1);
  probe(b, bi, 2);
  EXPECT_LT(worst, 1e-6);
}

TEST(Tape, ConstantsGetNoGradientAndAccumulationIsAdditive) {
  Tape t;
  const auto c = t.constant(Tensor2(1, 2, {1.0, 2.0}));
  const auto w = t.parameter(Tensor2::identity(2));
  const auto b = t.parameter(Tensor2(1, 2, 0.0));
  // Same parameter used twice: gradients from both uses add up.
  const auto h = t.affine(c, w, b);
  const auto out = t.affine(h, w, b);
  t.backward(out, Tensor2(1, 2, 1.0));
  EXPECT_FALSE(t.requires_grad(c));
  EXPECT_TRUE(t.grad(c).values().empty());
  // d/dW of (c W^T + b) W^T + b summed over outputs with W = I:
  // first use contributes outer(1, c), second use outer(1, h) with h = c.
  EXPECT_EQ(t.grad(w), Tensor2(2, 2, {2.0, 4.0, 2.0, 4.0}));
  EXPECT_EQ(t.grad(b), Tensor2(1, 2, {2.0, 2.0}));
}

TEST(Forward, ZeroNetPredictsClassZero) {
  Model m = make_mlp(3, std::vector<std::size_t>{4}, 5, 0);
  for (auto& l : m.layers) {
    l.weight.fill(0.0);
    l.bias.fill(0.0);
  }
  Rng rng(2);
  const auto logits = forward(m, random_tensor(6, 3, rng));
  for (double v : logits.values()) EXPECT_EQ(v, 0.0);
  for (int p : predict(logits)) EXPECT_EQ(p, 0);
}

TEST(Forward, SingleIdentityLayerIsAffine) {
  Model m;
  m.layers.push_back({Tensor2(2, 2, {1, 2, 3, 4}), Tensor2(1, 2, {0.5, -0.5}),
                      Activation::kIdentity});
  const auto out = forward(m, Tensor2(1, 2, {1.0, 1.0}));
  EXPECT_EQ(out, Tensor2(1, 2, {3.5, 6.5}));
}

TEST(Forward, TwoLayerNetMatchesHandRolledAlgebra) {
  const Model m = random_mlp(3, {4}, 2, 0);
  Rng rng(0);
  const Tensor2 x = random_tensor(5, 3, rng);
  const Tensor2 got = forward(m, x);
  const auto& l0 = m.layers[0];
  const auto& l1 = m.layers[1];
  for (std::size_t i = 0; i < 5; ++i) {
    double h[4];
    for (std::size_t j = 0; j < 4; ++j) {
      double s = l0.bias(0, j);
      for (std::size_t d = 0; d < 3; ++d) s += x(i, d) * l0.weight(j, d);
      h[j] = s > 0 ? s : 0.0;
    }
    for (std::size_t k = 0; k < 2; ++k) {
      double s = l1.bias(0, k);
      for (std::size_t j = 0; j < 4; ++j) s += h[j] * l1.weight(k, j);
      EXPECT_NEAR(got(i, k), s, 1e-14);
    }
  }
}

TEST(Forward, DeterministicAndTieBreak) {
  const Model m = random_mlp(4, {16, 8}, 3, 9);
  Rng rng(3);
  const Tensor2 x = random_tensor(50, 4, rng);
  EXPECT_EQ(forward(m, x), forward(m, x));
  EXPECT_EQ(predict(Tensor2(2, 3, {1, 3, 3, 2, 2, 1})), (std::vector<int>{1, 0}));
}

TEST(Forward, RejectsWrongInputWidth) {
  const Model m = make_mlp(4, std::vector<std::size_t>{}, 3, 0);
  EXPECT_EQ(code_of([&] { forward(m, Tensor2(1, 5, 0.0)); }), ErrorCode::kInvalidArgument);
}

TEST(Model, ValidateRejectsReluHeadAndBrokenChains) {
  Model m = make_mlp(4, std::vector<std::size_t>{8}, 3, 0);
  m.validate();
  Model relu_head = m;
  relu_head.layers.back().activation = Activation::kRelu;
  EXPECT_EQ(code_of([&] { relu_head.validate(); }), ErrorCode::kInvalidArgument);
  Model broken = m;
  broken.layers[1].weight = Tensor2(3, 7, 0.0);
  EXPECT_EQ(code_of([&] { broken.validate(); }), ErrorCode::kInvalidArgument);
}

TEST(GradientCheck, LinearModelCrossEntropy) {
  const Model m = random_mlp(3, {}, 4, 1);
  Rng rng(1);
  const Tensor2 x = random_tensor(4, 3, rng);
  const auto y = random_labels(4, 4, rng);
  EXPECT_LT(gradient_check(m, x, y, cross_entropy, 1e-5), 1e-6);
}

TEST(GradientCheck, TwoHiddenLayerMlp) {
  const Model m = random_mlp(6, {7, 5}, 5, 2);
  Rng rng(2);
  const Tensor2 x = random_tensor(8, 6, rng);
  const auto y = random_labels(8, 5, rng);
  EXPECT_LT(gradient_check(m, x, y, cross_entropy, 1e-5), 1e-5);
}

TEST(GradientCheck, ZeroParameterModelAndBadArguments) {
  const Model empty;
  const Tensor2 x(2, 3, 1.0);
  const std::vector<int> y{0, 1};
  EXPECT_EQ(gradient_check(empty, x, y, cross_entropy, 1e-5), 0.0);

  const Model m = random_mlp(3, {}, 2, 0);
  EXPECT_EQ(code_of([&] { gradient_check(m, x, y, cross_entropy, 0.0); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { gradient_check(m, x, y, cross_entropy, 0.1); }),
            ErrorCode::kInvalidArgument);
  LossFn nan_loss = [](const Tensor2& z, std::span<const int>) {
    return LossValue{std::nan(""), Tensor2(z.rows(), z.cols(), 0.0)};
  };
  EXPECT_EQ(code_of([&] { gradient_check(m, x, y, nan_loss, 1e-5); }),
            ErrorCode::kNumericFailure);
}

TEST(GradientCheck, RandomShapesProperty) {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t in = 1 + rng.below(5), K = 2 + rng.below(4), n = 1 + rng.below(6);
    std::vector<std::size_t> hidden(rng.below(3));
    for (auto& h : hidden) h = 1 + rng.below(6);
    const Model m = random_mlp(in, hidden, K, 100 + trial);
    const Tensor2 x = random_tensor(n, in, rng);
    const auto y = random_labels(n, K, rng);
    EXPECT_LT(gradient_check(m, x, y, cross_entropy, 1e-5), 1e-5) << "trial " << trial;
  }
}

TEST(LossAndGrad, BatchGradientIsSumOfPerExampleGradients) {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Model m = random_mlp(3, {6, 4}, 4, trial);
    const Tensor2 x = random_tensor(7, 3, rng);
    const auto y = random_labels(7, 4, rng);
    const auto batch = loss_and_grad(m, x, y, sum_ce);
    double loss = 0.0;
    ModelGradients acc;
    for (std::size_t i = 0; i < 7; ++i) {
      const std::size_t row[] = {i};
      const auto one = loss_and_grad(m, x.gather_rows(row), std::span(y).subspan(i, 1), sum_ce);
      loss += one.loss;
      if (i == 0) {
        acc = one.grads;
        continue;
      }
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        for (std::size_t p = 0; p < acc.weight[l].values().size(); ++p)
          acc.weight[l].values()[p] += one.grads.weight[l].values()[p];
        for (std::size_t p = 0; p < acc.bias[l].values().size(); ++p)
          acc.bias[l].values()[p] += one.grads.bias[l].values()[p];
      }
    }
    EXPECT_NEAR(batch.loss, loss, 1e-12);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      for (std::size_t p = 0; p < acc.weight[l].values().size(); ++p)
        EXPECT_NEAR(batch.grads.weight[l].values()[p], acc.weight[l].values()[p], 1e-12);
      for (std::size_t p = 0; p < acc.bias[l].values().size(); ++p)
        EXPECT_NEAR(batch.grads.bias[l].values()[p], acc.bias[l].values()[p], 1e-12);
    }
  }
}

TEST(LossAndGrad, FrozenPrefixHasNoGradients) {
  const Model m = random_mlp(3, {6, 4}, 4, 0);
  Rng rng(8);
  const Tensor2 x = random_tensor(5, 3, rng);
  const auto y = random_labels(5, 4, rng);
  const auto part = loss_and_grad(m, x, y, cross_entropy, 1);
  const auto full = loss_and_grad(m, x, y, cross_entropy);
  EXPECT_TRUE(part.grads.weight[0].values().empty());
  EXPECT_TRUE(part.grads.weight[1].values().empty());
  EXPECT_EQ(part.grads.weight[2], full.grads.weight[2]);
  EXPECT_EQ(part.grads.bias[2], full.grads.bias[2]);
  EXPECT_EQ(part.loss, full.loss);
}

TEST(Checkpoint, RoundTripIsExact) {
  const Model m = random_mlp(5, {7, 3}, 4, 11);
  const auto bytes = encode_checkpoint(m);
  EXPECT_EQ(decode_checkpoint(bytes), m);
  EXPECT_EQ(encode_checkpoint(decode_checkpoint(bytes)), bytes);
}

TEST(Checkpoint, HeaderLayout) {
  Model m;
  m.layers.push_back({Tensor2(1, 1, {2.0}), Tensor2(1, 1, {-1.0}), Activation::kIdentity});
  const std::vector<std::uint8_t> expected = {
      'L', 'T', 'M', 'C', 1, 0, 0, 0, 1, 0, 0, 0,  // magic, version, layers
      1, 0, 0, 0, 0, 0, 0, 0,                      // out
      1, 0, 0, 0, 0, 0, 0, 0,                      // in
      0,                                           // identity
      0, 0, 0, 0, 0, 0, 0, 0x40,                   // 2.0
      0, 0, 0, 0, 0, 0, 0xf0, 0xbf};               // -1.0
  EXPECT_EQ(encode_checkpoint(m), expected);
}

TEST(Checkpoint, RejectsCorruption) {
  const auto good = encode_checkpoint(random_mlp(3, {2}, 2, 0));
  auto bad_magic = good;
  bad_magic[1] = 'X';
  auto bad_version = good;
  bad_version[4] = 9;
  auto truncated = good;
  truncated.pop_back();
  auto trailing = good;
  trailing.push_back(0);
  auto bad_tag = good;
  bad_tag[12 + 16] = 7;  // first layer's activation byte
  for (const auto* b : {&bad_magic, &bad_version, &truncated, &trailing, &bad_tag})
    EXPECT_EQ(code_of([&] { decode_checkpoint(*b); }), ErrorCode::kMalformedFile);
}

}  // namespace
}  // namespace tailbalance
