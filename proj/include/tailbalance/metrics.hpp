#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tailbalance/autodiff.hpp"
#include "tailbalance/balancers.hpp"
#include "tailbalance/longtail_data.hpp"

namespace tailbalance {

/// Accuracy of class k over its test examples; nullopt when the class has
/// none.
std::vector<std::optional<double>> per_class_accuracy(std::span<const int> predictions,
                                                      std::span<const int> labels,
                                                      std::size_t num_classes);

/// Mean over classes that are present.
double mean_class_accuracy(std::span<const std::optional<double>> per_class);

/// Unweighted mean of per-class accuracies inside each split, indexed by
/// Split. A split with no scored class is nullopt.
std::array<std::optional<double>, 3> split_accuracy(
    std::span<const std::optional<double>> per_class, const ClassSplits& splits);

/// Column means of a row-stochastic matrix.
std::vector<double> marginal_likelihood(const Tensor2& probabilities);

/// sum_k p_k log(p_k K), with 0 log 0 = 0.
double kl_to_uniform(std::span<const double> p);

/// Spearman rank correlation; tied values share their average rank.
double spearman(std::span<const double> a, std::span<const double> b);

struct MetricsReport {
  std::vector<std::optional<double>> per_class_acc;
  double mean_class_acc = 0.0;
  std::array<std::optional<double>, 3> split_acc;  // many, medium, few
  std::vector<double> marginal_likelihood;
  double kl_to_uniform = 0.0;
  /// Spearman(classifier norms, training counts); nullopt when undefined.
  std::optional<double> norm_count_spearman;
};

/// Scores `model` on `test`. Splits and the norm/count correlation use the
/// training cardinalities; with no counts both are left absent.
MetricsReport evaluate(const Model& model, const LabeledDataset& test,
                       std::span<const std::uint64_t> train_counts,
                       bool include_bias = false);

}  // namespace tailbalance
