#pragma once

#include <cstdint>
#include <vector>

#include "tailbalance/harness.hpp"
#include "tailbalance/rng.hpp"

namespace tailbalance::testing {

inline Tensor2 random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor2 t(rows, cols);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t K, Rng& rng) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.below(K));
  return y;
}

/// MLP with random (non-zero) biases so every parameter path is exercised.
inline Model random_mlp(std::size_t in, std::vector<std::size_t> hidden, std::size_t K,
                        std::uint64_t seed) {
  Model m = make_mlp(in, hidden, K, seed);
  Rng rng(seed, 99);
  for (auto& l : m.layers)
    for (double& b : l.bias.values()) b = 0.1 * rng.normal();
  return m;
}

// Frozen synthetic fixture (chosen by a pilot run, see README "Fixture").
struct Fixture {
  static constexpr std::size_t kClasses = 10;
  static constexpr std::uint64_t kMaxCount = 200;
  static constexpr double kImbalance = 100.0;
  static constexpr std::size_t kDim = 2;
  static constexpr double kSeparation = 2.0;
  static constexpr std::uint64_t kSeed = 0;
  static constexpr std::size_t kValPerClass = 50;

  LabeledDataset train, val, test;

  Fixture() {
    auto profile = make_longtail_profile(kClasses, kMaxCount, kImbalance);
    auto [tr, balanced] = synth_gaussian_dataset(profile, kDim, kSeparation, kSeed);
    auto [v, te] = split_per_class(balanced, kValPerClass, kSeed);
    train = std::move(tr);
    val = std::move(v);
    test = std::move(te);
  }

  static ModelSpec model() { return {{64, 64}, kSeed}; }

  static StageConfig stage1(double lambda = 0.0) {
    StageConfig c;
    c.epochs = 400;
    c.batch_size = 64;
    c.base_lr = 0.1;
    c.momentum = 0.9;
    c.seed = kSeed;
    c.balancer.lambda = lambda;
    return c;
  }

  static StageConfig stage2(double lambda, double delta, std::size_t layers = 2) {
    StageConfig c = stage1(lambda);
    c.epochs = 20;
    c.loss = {LossKind::kClassBalanced, 0.9999};
    c.trainable_layers = layers;
    c.balancer.delta = delta;
    c.balancer.constraint = ConstraintMode::kMaxNorm;
    return c;
  }

  static SweepSpace space() {
    SweepSpace s;
    s.model = model();
    s.stage1 = stage1();
    s.stage2 = stage2(0.0, 1.0);
    s.lambda = {0.0};
    s.stage2_lambda = {0.0};
    s.delta = {std::nullopt};
    s.tau = {std::nullopt};
    s.beta = {0.9999};
    s.trainable_layers = {0};
    return s;
  }
};

}  // namespace tailbalance::testing
