#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "tailbalance/error.hpp"
#include "tailbalance/metrics.hpp"

namespace tailbalance {
namespace {

using Acc = std::vector<std::optional<double>>;

TEST(PerClassAccuracy, Examples) {
  const std::vector<int> y{0, 1, 2, 0, 1, 2};
  const auto all = per_class_accuracy(y, y, 3);
  for (const auto& a : all) EXPECT_EQ(a, 1.0);
  const std::vector<int> zeros(6, 0);
  EXPECT_EQ(per_class_accuracy(zeros, y, 3), (Acc{1.0, 0.0, 0.0}));
}

TEST(PerClassAccuracy, AbsentClassesAreExcludedFromMean) {
  const std::vector<int> y{0, 0, 2}, p{0, 1, 1};
  const auto acc = per_class_accuracy(p, y, 3);
  EXPECT_EQ(acc, (Acc{0.5, std::nullopt, 0.0}));
  EXPECT_DOUBLE_EQ(mean_class_accuracy(acc), 0.25);
  EXPECT_THROW(per_class_accuracy(std::vector<int>{0}, y, 3), Error);
}

TEST(MeanClassAccuracy, InvariantToPerClassDuplication) {
  Rng rng(1);
  std::vector<int> y(40), p(40);
  for (int i = 0; i < 40; ++i) {
    y[i] = i % 4;
    p[i] = static_cast<int>(rng.below(4));
  }
  const double base = mean_class_accuracy(per_class_accuracy(p, y, 4));
  auto y2 = y, p2 = p;
  for (int i = 0; i < 40; ++i)
    if (y[i] == 2)
      for (int r = 0; r < 3; ++r) {
        y2.push_back(y[i]);
        p2.push_back(p[i]);
      }
  EXPECT_DOUBLE_EQ(mean_class_accuracy(per_class_accuracy(p2, y2, 4)), base);
}

TEST(SplitAccuracy, RecombinesToOverallOnCifarSplitSizes) {
  // Split means 64.05 / 35.80 / 11.43 over the IF=100 split sizes
  // (35, 35, 30) recombine to the overall class-mean 38.38.
  const auto splits = assign_splits(make_longtail_profile(100, 500, 100).counts);
  Acc acc(100);
  for (std::size_t k = 0; k < 100; ++k)
    acc[k] = splits.split_of[k] == Split::kMany     ? 0.6405
             : splits.split_of[k] == Split::kMedium ? 0.3580
                                                    : 0.1143;
  const auto s = split_accuracy(acc, splits);
  EXPECT_NEAR(*s[0], 0.6405, 1e-12);
  EXPECT_NEAR(*s[1], 0.3580, 1e-12);
  EXPECT_NEAR(*s[2], 0.1143, 1e-12);
  EXPECT_NEAR(mean_class_accuracy(acc), 0.3838, 5e-5);
}

TEST(SplitAccuracy, SingleSplitAndConstantVectors) {
  const std::vector<std::uint64_t> many(5, 200);
  const Acc acc{0.1, 0.2, 0.3, 0.4, 0.5};
  const auto s = split_accuracy(acc, assign_splits(many));
  EXPECT_DOUBLE_EQ(*s[0], mean_class_accuracy(acc));
  EXPECT_FALSE(s[1].has_value());
  EXPECT_FALSE(s[2].has_value());

  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    std::vector<std::uint64_t> counts(10);
    for (auto& c : counts) c = 1 + rng.below(300);
    const double c = rng.uniform();
    const auto r = split_accuracy(Acc(10, c), assign_splits(counts));
    for (const auto& v : r)
      if (v) EXPECT_NEAR(*v, c, 1e-15);
  }
  EXPECT_THROW(split_accuracy(acc, assign_splits(std::vector<std::uint64_t>(4, 5))), Error);
}

TEST(MarginalLikelihood, Examples) {
  const Tensor2 one(1, 3, {0.2, 0.3, 0.5});
  EXPECT_EQ(marginal_likelihood(one), (std::vector<double>{0.2, 0.3, 0.5}));
  const auto u = marginal_likelihood(Tensor2(5, 4, 0.25));
  for (double v : u) EXPECT_DOUBLE_EQ(v, 0.25);
  const Tensor2 onehot(4, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  for (double v : marginal_likelihood(onehot)) EXPECT_EQ(v, 0.25);
  EXPECT_THROW(marginal_likelihood(Tensor2(1, 2, {0.5, 0.6})), Error);
}

TEST(MarginalLikelihood, SumsToOne) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const auto p = softmax(testing::random_tensor(1 + rng.below(50), 2 + rng.below(10), rng, 4.0));
    const auto m = marginal_likelihood(p);
    EXPECT_NEAR(std::accumulate(m.begin(), m.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(KlToUniform, Examples) {
  EXPECT_EQ(kl_to_uniform(std::vector<double>(4, 0.25)), 0.0);
  EXPECT_NEAR(kl_to_uniform(std::vector<double>{1, 0, 0, 0}), 1.3862943611198906188, 1e-15);
  EXPECT_NEAR(kl_to_uniform(std::vector<double>{0.5, 0.5, 0, 0}), 0.69314718055994530942, 1e-15);
  EXPECT_THROW(kl_to_uniform(std::vector<double>{1.5, -0.5}), Error);
}

TEST(KlToUniform, NonNegativeOnRandomSimplexPoints) {
  Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> p(2 + rng.below(20));
    double s = 0.0;
    for (double& v : p) s += (v = -std::log(1.0 - rng.uniform()));
    for (double& v : p) v /= s;
    EXPECT_GE(kl_to_uniform(p), -1e-12);
    EXPECT_GT(kl_to_uniform(p), 0.0);
  }
}

TEST(Spearman, Examples) {
  const std::vector<double> a{1, 2, 3, 4}, r{4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(a, a), 1.0);
  EXPECT_DOUBLE_EQ(spearman(a, r), -1.0);
  EXPECT_DOUBLE_EQ(spearman(std::vector<double>{1, 2, 2, 3}, std::vector<double>{10, 20, 20, 30}),
                   1.0);
  // Ties on one side only: ranks (1, 2.5, 2.5, 4) vs (1, 2, 3, 4).
  EXPECT_NEAR(spearman(std::vector<double>{1, 2, 2, 3}, a), 0.9486832980505138, 1e-15);
}

TEST(Spearman, Errors) {
  const std::vector<double> c{2, 2, 2}, a{1, 2, 3};
  try {
    spearman(c, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUndefinedCorrelation);
  }
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{1}), Error);
  EXPECT_THROW(spearman(a, std::vector<double>{1, 2}), Error);
}

TEST(Evaluate, PerfectModelOnSeparableData) {
  // Identity head on one-hot inputs: every prediction is correct.
  Model m;
  m.layers.push_back({Tensor2::identity(3), Tensor2(1, 3, 0.0), Activation::kIdentity});
  m.classifier().weight(2, 2) = 3.0;
  const auto test = LabeledDataset::from_rows(Tensor2::identity(3), {0, 1, 2}, 3);
  const std::vector<std::uint64_t> counts{300, 50, 5};
  const auto r = evaluate(m, test, counts);
  EXPECT_EQ(r.mean_class_acc, 1.0);
  EXPECT_EQ(r.split_acc[0], 1.0);
  EXPECT_EQ(r.split_acc[1], 1.0);
  EXPECT_EQ(r.split_acc[2], 1.0);
  EXPECT_NEAR(std::accumulate(r.marginal_likelihood.begin(), r.marginal_likelihood.end(), 0.0), 1.0,
              1e-12);
  EXPECT_GT(r.kl_to_uniform, 0.0);
  ASSERT_TRUE(r.norm_count_spearman.has_value());
  // norm ranks (1.5, 1.5, 3) against count ranks (3, 2, 1)
  EXPECT_NEAR(*r.norm_count_spearman, -std::sqrt(3.0) / 2.0, 1e-15);
}

TEST(Evaluate, ConstantNormsLeaveSpearmanAbsent) {
  Model m;
  m.layers.push_back({Tensor2::identity(2), Tensor2(1, 2, 0.0), Activation::kIdentity});
  const auto test = LabeledDataset::from_rows(Tensor2::identity(2), {0, 1}, 2);
  const std::vector<std::uint64_t> counts{10, 1};
  EXPECT_FALSE(evaluate(m, test, counts).norm_count_spearman.has_value());
}

}  // namespace
}  // namespace tailbalance

namespace tailbalance {
namespace {

TEST(Evaluate, WithoutTrainingCountsSkipsSplitsAndCorrelation) {
  Model m;
  m.layers.push_back({Tensor2::identity(2), Tensor2(1, 2, 0.0), Activation::kIdentity});
  m.classifier().weight(1, 1) = 2.0;
  const auto test = LabeledDataset::from_rows(Tensor2::identity(2), {0, 1}, 2);
  const auto r = evaluate(m, test, {});
  EXPECT_EQ(r.mean_class_acc, 1.0);
  for (const auto& s : r.split_acc) EXPECT_FALSE(s.has_value());
  EXPECT_FALSE(r.norm_count_spearman.has_value());
  EXPECT_THROW(evaluate(m, test, std::vector<std::uint64_t>{1, 2, 3}), Error);
}

}  // namespace
}  // namespace tailbalance
