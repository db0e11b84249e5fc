#include "tailbalance/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tailbalance/error.hpp"
#include "tailbalance/losses.hpp"

namespace tailbalance {

std::vector<std::optional<double>> per_class_accuracy(std::span<const int> predictions,
                                                      std::span<const int> labels,
                                                      std::size_t num_classes) {
  require(predictions.size() == labels.size(), "per_class_accuracy: length mismatch");
  std::vector<std::uint64_t> correct(num_classes, 0), total(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    require(y >= 0 && static_cast<std::size_t>(y) < num_classes,
            "per_class_accuracy: label out of range");
    ++total[static_cast<std::size_t>(y)];
    if (predictions[i] == y) ++correct[static_cast<std::size_t>(y)];
  }
  std::vector<std::optional<double>> acc(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k)
    if (total[k] > 0) acc[k] = static_cast<double>(correct[k]) / static_cast<double>(total[k]);
  return acc;
}

double mean_class_accuracy(std::span<const std::optional<double>> per_class) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& a : per_class) {
    if (!a) continue;
    s += *a;
    ++n;
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

std::array<std::optional<double>, 3> split_accuracy(
    std::span<const std::optional<double>> per_class, const ClassSplits& splits) {
  require(per_class.size() == splits.split_of.size(), "split_accuracy: length mismatch");
  std::array<double, 3> sum{};
  std::array<std::size_t, 3> n{};
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    if (!per_class[k]) continue;
    const auto s = static_cast<std::size_t>(splits.split_of[k]);
    sum[s] += *per_class[k];
    ++n[s];
  }
  std::array<std::optional<double>, 3> out;
  for (std::size_t s = 0; s < 3; ++s)
    if (n[s] > 0) out[s] = sum[s] / static_cast<double>(n[s]);
  return out;
}

std::vector<double> marginal_likelihood(const Tensor2& probabilities) {
  const std::size_t n = probabilities.rows(), K = probabilities.cols();
  require(n > 0, "marginal_likelihood: no rows");
  std::vector<double> m(K, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = probabilities.row(i);
    const double s = std::accumulate(row.begin(), row.end(), 0.0);
    require(std::abs(s - 1.0) <= 1e-6,
            "marginal_likelihood: row " + std::to_string(i) + " sums to " + std::to_string(s));
    for (std::size_t k = 0; k < K; ++k) m[k] += row[k];
  }
  for (double& v : m) v /= static_cast<double>(n);
  return m;
}

double kl_to_uniform(std::span<const double> p) {
  require(!p.empty(), "kl_to_uniform: empty vector");
  const double K = static_cast<double>(p.size());
  double kl = 0.0;
  for (double v : p) {
    require(v >= 0.0, "kl_to_uniform: negative probability");
    if (v > 0.0) kl += v * std::log(v * K);
  }
  return std::max(kl, 0.0);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && a.size() >= 2, "spearman: need two equal-length vectors of length >= 2");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0)
    fail(ErrorCode::kUndefinedCorrelation, "spearman: constant input has no rank correlation");
  return sab / std::sqrt(saa * sbb);
}

MetricsReport evaluate(const Model& model, const LabeledDataset& test,
                       std::span<const std::uint64_t> train_counts, bool include_bias) {
  const std::size_t K = model.num_classes();
  require(test.num_classes == K, "evaluate: test set has a different class count");
  require(train_counts.empty() || train_counts.size() == K,
          "evaluate: training counts have a different class count");
  const Tensor2 logits = forward(model, test.features);
  const auto pred = predict(logits);

  MetricsReport r;
  r.per_class_acc = per_class_accuracy(pred, test.labels, K);
  r.mean_class_acc = mean_class_accuracy(r.per_class_acc);
  if (!train_counts.empty())
    r.split_acc = split_accuracy(r.per_class_acc, assign_splits(train_counts));
  if (test.size() > 0) {
    r.marginal_likelihood = marginal_likelihood(softmax(logits));
    r.kl_to_uniform = kl_to_uniform(r.marginal_likelihood);
  }
  if (train_counts.empty()) return r;
  std::vector<double> counts(train_counts.begin(), train_counts.end());
  try {
    r.norm_count_spearman = spearman(classifier_norms(model, include_bias), counts);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUndefinedCorrelation) throw;
  }
  return r;
}

}  // namespace tailbalance
