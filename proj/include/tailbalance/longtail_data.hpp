#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tailbalance/tensor.hpp"

namespace tailbalance {

/// Features (N x D), labels in [0, K) and per-class cardinalities.
struct LabeledDataset {
  Tensor2 features;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> class_counts;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  /// Builds a dataset and derives class_counts from the labels.
  static LabeledDataset from_rows(Tensor2 features, std::vector<int> labels,
                                  std::size_t num_classes);
  /// Throws invalid-argument when the invariants do not hold.
  void validate() const;
  LabeledDataset subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// Non-increasing per-class counts; class 0 is the most frequent.
struct CardinalityProfile {
  std::vector<std::uint64_t> counts;
  double target_if = 1.0;

  std::uint64_t n_max() const { return counts.front(); }
};

enum class Split { kMany, kMedium, kFew };

struct ClassSplits {
  std::vector<Split> split_of;
};

std::string_view to_string(Split s);

/// Test examples per class in the synthetic balanced set.
inline constexpr std::size_t kBalancedTestPerClass = 100;
/// Split thresholds on training cardinality: > 100 Many, < 20 Few.
inline constexpr std::uint64_t kManyAbove = 100;
inline constexpr std::uint64_t kFewBelow = 20;

/// counts[k] = max(1, round(n_max * IF^(-k/(K-1)))).
CardinalityProfile make_longtail_profile(std::size_t num_classes, std::uint64_t n_max,
                                         double imbalance);

/// max(counts) / min(counts).
double imbalance_factor(std::span<const std::uint64_t> counts);

ClassSplits assign_splits(std::span<const std::uint64_t> counts);

/// Class-conditional unit-covariance Gaussians. Class means sit on a circle
/// in the first two coordinates (neighbouring means `separation` apart) with
/// a seed-dependent phase; other coordinates have mean zero. Returns the
/// long-tailed training set and a balanced test set drawn from the same
/// class-conditionals.
std::pair<LabeledDataset, LabeledDataset> synth_gaussian_dataset(
    const CardinalityProfile& profile, std::size_t dim, double separation,
    std::uint64_t seed);

/// Keeps exactly profile.counts[k] examples of class k, chosen by a seeded
/// shuffle. Kept rows retain their original relative order.
LabeledDataset subsample_longtail(const LabeledDataset& dataset,
                                  const CardinalityProfile& profile, std::uint64_t seed);

/// Splits off up to `per_class` seeded-random examples of every class (first)
/// from the remainder (second). Useful for carving a validation set out of a
/// balanced test set.
std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& dataset,
                                                          std::size_t per_class,
                                                          std::uint64_t seed);

// -- CIFAR-100 binary format ----------------------------------------------------

inline constexpr std::size_t kCifarImageBytes = 3072;
inline constexpr std::size_t kCifarRecordBytes = 2 + kCifarImageBytes;
inline constexpr std::size_t kCifarClasses = 100;

struct CifarRecord {
  std::uint8_t coarse_label = 0;
  std::uint8_t fine_label = 0;
  std::array<std::uint8_t, kCifarImageBytes> pixels{};  // R, G, B planes, 32x32 row-major

  friend bool operator==(const CifarRecord&, const CifarRecord&) = default;
};

std::vector<CifarRecord> parse_cifar100_records(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_cifar100_records(std::span<const CifarRecord> records);
/// Pixels scaled to [0, 1], fine labels, K = 100.
LabeledDataset cifar100_to_dataset(std::span<const CifarRecord> records);
LabeledDataset parse_cifar100_binary(std::span<const std::uint8_t> bytes);
LabeledDataset load_cifar100(const std::string& path);

/// Averages RGB into gray and box-filters each 32x32 image down to
/// side x side (side must divide 32).
LabeledDataset downsample_gray(const LabeledDataset& cifar, std::size_t side);

// -- LTDS container ---------------------------------------------------------------
//   "LTDS" | u32 version | u64 N | u64 D | u32 K | u32 labels[N] | f64 features[N*D]
// little-endian, features row-major.

inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& ds);
LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

}  // namespace tailbalance
