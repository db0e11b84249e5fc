#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tailbalance/autodiff.hpp"

namespace tailbalance {

/// Per-class loss weights, normalized so they sum to K.
struct ClassWeights {
  std::vector<double> w;
};

inline constexpr double kDefaultCbBeta = 0.9999;

/// Class-balanced weights from the "effective number of samples":
///   u_k = (1 - beta) / (1 - beta^n_k),  w_k = K u_k / sum_j u_j.
/// beta = 0 gives unit weights.
ClassWeights effective_number_weights(std::span<const std::uint64_t> counts, double beta);

ClassWeights unit_weights(std::size_t num_classes);

/// Mean over the batch of w[y_i] * (-log softmax(logits_i)[y_i]) and its
/// exact gradient with respect to the logits.
LossValue weighted_softmax_ce(const Tensor2& logits, std::span<const int> labels,
                              const ClassWeights& weights);

/// weighted_softmax_ce with unit weights.
LossValue cross_entropy(const Tensor2& logits, std::span<const int> labels);

/// Row-wise softmax probabilities (max-shifted).
Tensor2 softmax(const Tensor2& logits);

}  // namespace tailbalance
