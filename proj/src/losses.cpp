#include "tailbalance/losses.hpp"

#include <cmath>
#include <numeric>

#include "tailbalance/error.hpp"

namespace tailbalance {

ClassWeights effective_number_weights(std::span<const std::uint64_t> counts, double beta) {
  require(beta >= 0.0 && beta < 1.0, "effective_number_weights: beta must lie in [0, 1)");
  require(!counts.empty(), "effective_number_weights: no classes");
  const double K = static_cast<double>(counts.size());
  std::vector<double> u(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    require(counts[k] >= 1, "effective_number_weights: class " + std::to_string(k) +
                                " has zero examples");
    // 1 - beta^n without cancellation for beta near 1.
    const double denom = beta == 0.0
                             ? 1.0
                             : -std::expm1(static_cast<double>(counts[k]) * std::log(beta));
    u[k] = (1.0 - beta) / denom;
  }
  const double total = std::accumulate(u.begin(), u.end(), 0.0);
  ClassWeights out;
  out.w.resize(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) out.w[k] = K * u[k] / total;
  return out;
}

ClassWeights unit_weights(std::size_t num_classes) {
  return ClassWeights{std::vector<double>(num_classes, 1.0)};
}

LossValue weighted_softmax_ce(const Tensor2& logits, std::span<const int> labels,
                              const ClassWeights& weights) {
  const std::size_t n = logits.rows(), K = logits.cols();
  require(labels.size() == n, "softmax_ce: label count does not match logits rows");
  require(weights.w.size() == K, "softmax_ce: weight count does not match class count");
  if (!logits.all_finite()) fail(ErrorCode::kNumericFailure, "softmax_ce: non-finite logits");

  LossValue out;
  out.grad_logits = Tensor2(n, K);
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    require(y >= 0 && static_cast<std::size_t>(y) < K, "softmax_ce: label out of range");
    auto z = logits.row(i);
    auto g = out.grad_logits.row(i);
    std::size_t top = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (z[k] > z[top]) top = k;
    // logsumexp = z_top + log1p(sum_{k != top} exp(z_k - z_top)); log1p keeps
    // saturated rows accurate down to ~1e-300 instead of rounding to zero.
    double rest = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      g[k] = std::exp(z[k] - z[top]);
      if (k != top) rest += g[k];
    }
    const double denom = 1.0 + rest;
    const double nll = (z[top] - z[static_cast<std::size_t>(y)]) + std::log1p(rest);
    const double wy = weights.w[static_cast<std::size_t>(y)];
    total += wy * nll;
    const double scale = wy * inv_n;
    for (std::size_t k = 0; k < K; ++k) g[k] = scale * (g[k] / denom);
    g[static_cast<std::size_t>(y)] -= scale;
  }
  out.loss = total * inv_n;
  return out;
}

LossValue cross_entropy(const Tensor2& logits, std::span<const int> labels) {
  return weighted_softmax_ce(logits, labels, unit_weights(logits.cols()));
}

Tensor2 softmax(const Tensor2& logits) {
  Tensor2 p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    auto r = p.row(i);
    double top = z.empty() ? 0.0 : z[0];
    for (double v : z) top = std::max(top, v);
    double s = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) s += (r[k] = std::exp(z[k] - top));
    for (double& v : r) v /= s;
  }
  return p;
}

}  // namespace tailbalance
