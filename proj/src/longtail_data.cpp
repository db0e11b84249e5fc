#include <algorithm>
#include <cmath>
#include <numbers>

#include "binary_io.hpp"
#include "tailbalance/error.hpp"
#include "tailbalance/longtail_data.hpp"
#include "tailbalance/rng.hpp"

namespace tailbalance {

LabeledDataset LabeledDataset::from_rows(Tensor2 features, std::vector<int> labels,
                                         std::size_t num_classes) {
  LabeledDataset ds;
  ds.features = std::move(features);
  ds.labels = std::move(labels);
  ds.num_classes = num_classes;
  ds.class_counts.assign(num_classes, 0);
  for (int y : ds.labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < num_classes,
            "dataset: label " + std::to_string(y) + " outside [0, " +
                std::to_string(num_classes) + ")");
    ++ds.class_counts[static_cast<std::size_t>(y)];
  }
  require(ds.features.rows() == ds.labels.size(), "dataset: feature rows != label count");
  return ds;
}

void LabeledDataset::validate() const {
  require(features.rows() == labels.size(), "dataset: feature rows != label count");
  require(class_counts.size() == num_classes, "dataset: class_counts length != K");
  std::vector<std::uint64_t> seen(num_classes, 0);
  for (int y : labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < num_classes, "dataset: label out of range");
    ++seen[static_cast<std::size_t>(y)];
  }
  require(seen == class_counts, "dataset: class_counts disagree with labels");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  std::vector<int> y;
  y.reserve(rows.size());
  for (std::size_t r : rows) y.push_back(labels.at(r));
  return from_rows(features.gather_rows(rows), std::move(y), num_classes);
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kMany: return "many";
    case Split::kMedium: return "medium";
    case Split::kFew: return "few";
  }
  return "?";
}

CardinalityProfile make_longtail_profile(std::size_t num_classes, std::uint64_t n_max,
                                         double imbalance) {
  require(num_classes >= 2, "make_longtail_profile: need K >= 2");
  require(n_max >= 1, "make_longtail_profile: need n_max >= 1");
  require(imbalance >= 1.0 && std::isfinite(imbalance),
          "make_longtail_profile: imbalance factor must be >= 1");
  CardinalityProfile p;
  p.target_if = imbalance;
  p.counts.resize(num_classes);
  const double last = static_cast<double>(num_classes - 1);
  for (std::size_t k = 0; k < num_classes; ++k) {
    const double n = static_cast<double>(n_max) * std::pow(imbalance, -static_cast<double>(k) / last);
    p.counts[k] = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(n)));
  }
  return p;
}

double imbalance_factor(std::span<const std::uint64_t> counts) {
  require(counts.size() >= 2, "imbalance_factor: need at least two classes");
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  require(*lo >= 1, "imbalance_factor: a class has zero examples");
  return static_cast<double>(*hi) / static_cast<double>(*lo);
}

ClassSplits assign_splits(std::span<const std::uint64_t> counts) {
  ClassSplits s;
  s.split_of.reserve(counts.size());
  for (std::uint64_t n : counts) {
    s.split_of.push_back(n > kManyAbove ? Split::kMany
                         : n < kFewBelow ? Split::kFew
                                         : Split::kMedium);
  }
  return s;
}

std::pair<LabeledDataset, LabeledDataset> synth_gaussian_dataset(
    const CardinalityProfile& profile, std::size_t dim, double separation,
    std::uint64_t seed) {
  require(dim >= 2, "synth_gaussian_dataset: dim must be >= 2");
  require(separation > 0.0, "synth_gaussian_dataset: separation must be > 0");
  const std::size_t K = profile.counts.size();
  require(K >= 2, "synth_gaussian_dataset: need K >= 2");

  Rng phase_rng(seed, /*stream=*/1);
  const double phase = phase_rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double radius = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(K)));
  Tensor2 means(K, dim);
  for (std::size_t k = 0; k < K; ++k) {
    const double a = phase + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(K);
    means(k, 0) = radius * std::cos(a);
    means(k, 1) = radius * std::sin(a);
  }

  auto draw = [&](auto count_of, std::uint64_t stream) {
    Rng rng(seed, stream);
    std::size_t n = 0;
    for (std::size_t k = 0; k < K; ++k) n += count_of(k);
    Tensor2 x(n, dim);
    std::vector<int> y(n);
    std::size_t r = 0;
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < count_of(k); ++i, ++r) {
        for (std::size_t d = 0; d < dim; ++d) x(r, d) = means(k, d) + rng.normal();
        y[r] = static_cast<int>(k);
      }
    }
    return LabeledDataset::from_rows(std::move(x), std::move(y), K);
  };

  auto train = draw([&](std::size_t k) { return static_cast<std::size_t>(profile.counts[k]); }, 2);
  auto test = draw([](std::size_t) { return kBalancedTestPerClass; }, 3);
  return {std::move(train), std::move(test)};
}

LabeledDataset subsample_longtail(const LabeledDataset& dataset,
                                  const CardinalityProfile& profile, std::uint64_t seed) {
  const std::size_t K = dataset.num_classes;
  require(profile.counts.size() == K, "subsample_longtail: profile has " +
                                          std::to_string(profile.counts.size()) +
                                          " classes, dataset has " + std::to_string(K));
  std::vector<std::vector<std::size_t>> by_class(K);
  for (std::size_t i = 0; i < dataset.size(); ++i)
    by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);

  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < K; ++k) {
    auto& rows = by_class[k];
    require(profile.counts[k] <= rows.size(),
            "subsample_longtail: class " + std::to_string(k) + " needs " +
                std::to_string(profile.counts[k]) + " examples but has " +
                std::to_string(rows.size()));
    Rng rng(seed, 100 + k);
    rng.shuffle(std::span<std::size_t>(rows));
    keep.insert(keep.end(), rows.begin(),
                rows.begin() + static_cast<std::ptrdiff_t>(profile.counts[k]));
  }
  std::sort(keep.begin(), keep.end());
  return dataset.subset(keep);
}

std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& dataset,
                                                          std::size_t per_class,
                                                          std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i)
    by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);
  std::vector<std::size_t> first, second;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& rows = by_class[k];
    Rng rng(seed, 200 + k);
    rng.shuffle(std::span<std::size_t>(rows));
    const std::size_t take = std::min(per_class, rows.size());
    first.insert(first.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
    second.insert(second.end(), rows.begin() + static_cast<std::ptrdiff_t>(take), rows.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {dataset.subset(first), dataset.subset(second)};
}

// ------------------------------------------------------------------ LTDS ----

std::vector<std::uint8_t> encode_dataset(const LabeledDataset& ds) {
  ds.validate();
  detail::ByteWriter w;
  w.magic("LTDS");
  w.uint(kDatasetVersion);
  w.uint(static_cast<std::uint64_t>(ds.size()));
  w.uint(static_cast<std::uint64_t>(ds.dim()));
  w.uint(static_cast<std::uint32_t>(ds.num_classes));
  for (int y : ds.labels) w.uint(static_cast<std::uint32_t>(y));
  for (double v : ds.features.values()) w.f64(v);
  return w.take();
}

LabeledDataset decode_dataset(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "LTDS dataset");
  r.expect_magic("LTDS");
  const auto version = r.uint<std::uint32_t>();
  if (version != kDatasetVersion)
    fail(ErrorCode::kMalformedFile, "LTDS dataset: unsupported version " + std::to_string(version));
  const auto n = r.uint<std::uint64_t>();
  const auto d = r.uint<std::uint64_t>();
  const auto K = r.uint<std::uint32_t>();
  if (n > r.remaining() / 4 || (d > 0 && n > 0 && (r.remaining() - 4 * n) / 8 / d < n))
    fail(ErrorCode::kMalformedFile, "LTDS dataset: truncated");
  std::vector<int> labels(n);
  for (auto& y : labels) {
    const auto v = r.uint<std::uint32_t>();
    if (v >= K) fail(ErrorCode::kMalformedFile, "LTDS dataset: label " + std::to_string(v) + " >= K");
    y = static_cast<int>(v);
  }
  Tensor2 x(n, d);
  for (double& v : x.values()) v = r.f64();
  if (r.remaining() != 0) fail(ErrorCode::kMalformedFile, "LTDS dataset: trailing bytes");
  return LabeledDataset::from_rows(std::move(x), std::move(labels), K);
}

void save_dataset(const LabeledDataset& ds, const std::string& path) {
  detail::write_file(path, encode_dataset(ds));
}

LabeledDataset load_dataset(const std::string& path) {
  return decode_dataset(detail::read_file(path));
}

}  // namespace tailbalance
