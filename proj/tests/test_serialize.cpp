#include <gtest/gtest.h>

#include "support.hpp"
#include "tailbalance/error.hpp"
#include "tailbalance/serialize.hpp"

namespace tailbalance {
namespace {

StageConfig sample_stage() {
  StageConfig c;
  c.loss = {LossKind::kClassBalanced, 0.999};
  c.trainable_layers = 2;
  c.epochs = 17;
  c.batch_size = 32;
  c.base_lr = 0.03;
  c.momentum = 0.8;
  c.seed = 123456789012345ull;
  c.snapshot_interval = 4;
  c.balancer.lambda = 5e-4;
  c.balancer.delta = 0.1;
  c.balancer.constraint = ConstraintMode::kMaxNorm;
  c.balancer.scope = DecayScope::kClassifierOnly;
  c.balancer.posthoc = PostHoc::with_tau(1.9);
  c.balancer.include_bias = true;
  return c;
}

TEST(StageJson, RoundTrip) {
  const auto c = sample_stage();
  EXPECT_EQ(stage_from_json(Json::parse(to_json(c).dump())), c);
  EXPECT_EQ(stage_from_json(Json::parse(to_json(StageConfig{}).dump())), StageConfig{});
}

TEST(StageJson, DefaultsFromEmptyObject) {
  EXPECT_EQ(stage_from_json(Json::object()), StageConfig{});
}

TEST(StageJson, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(stage_from_json(Json::parse(R"({"epochz": 3})")), Error);
  EXPECT_THROW(stage_from_json(Json::parse(R"({"loss": "focal"})")), Error);
  EXPECT_THROW(stage_from_json(Json::parse(R"({"epochs": "many"})")), Error);
  EXPECT_THROW(stage_from_json(Json::parse(R"({"momentum": 1.0})")), Error);
  EXPECT_THROW(stage_from_json(Json::parse(R"({"balancer": {"constraint": "maxnorm"}})")), Error);
  EXPECT_THROW(stage_from_json(Json::parse(R"({"balancer": {"scope": "some"}})")), Error);
  EXPECT_THROW(stage_from_json(Json::parse("[1, 2]")), Error);
}

TEST(MetricsJson, FieldNamesAndAbsentValues) {
  MetricsReport m;
  m.per_class_acc = {1.0, std::nullopt};
  m.mean_class_acc = 1.0;
  m.split_acc = {0.5, std::nullopt, 0.25};
  m.marginal_likelihood = {0.75, 0.25};
  m.kl_to_uniform = 0.1;
  const Json j = to_json(m);
  EXPECT_EQ(j.dump(),
            R"({"per_class_acc":[1.0,null],"mean_class_acc":1.0,)"
            R"("split_acc":{"many":0.5,"medium":null,"few":0.25},)"
            R"("marginal_likelihood":[0.75,0.25],)"
            R"("derived_diagnostics":{"kl_to_uniform":0.1,"norm_count_spearman":null}})");
}

TEST(Csv, QuotingAndNumbers) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_field("two\nlines"), "\"two\nlines\"");
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1e-5), "1e-05");
  EXPECT_EQ(std::stod(format_double(0.1 + 0.2)), 0.1 + 0.2);
}

TEST(Csv, Traces) {
  RunReport r;
  r.epochs.push_back({0, 1.5, 0.01, {1.0, 2.0}});
  r.epochs.push_back({1, 1.25, 0.005, {0.5, 0.25}});
  EXPECT_EQ(norm_trace_csv(r), "epoch,class_id,norm\n0,0,1\n0,1,2\n1,0,0.5\n1,1,0.25\n");
  EXPECT_EQ(loss_trace_csv(r), "epoch,mean_loss,learning_rate\n0,1.5,0.01\n1,1.25,0.005\n");
  MetricsReport m;
  m.per_class_acc = {0.5, std::nullopt};
  m.marginal_likelihood = {0.5, 0.5};
  EXPECT_EQ(per_class_csv(m), "class_id,accuracy,marginal_likelihood\n0,0.5,0.5\n1,,0.5\n");
}

TEST(TextFiles, MissingFileIsAnIoError) {
  try {
    read_text("/nonexistent/dir/file.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

}  // namespace
}  // namespace tailbalance

namespace tailbalance {
namespace {

TEST(RunReportJson, TracesRoundTrip) {
  RunReport r;
  r.config = sample_stage();
  r.epochs.push_back({0, 1.5, 0.01, {1.0, 2.0}});
  r.epochs.push_back({1, 0.1 + 0.2, 0.005, {0.5, 1.0 / 3.0}});
  r.snapshots.push_back({0, Tensor2(2, 2, {0.1, 0.2, -0.3, 0.4})});
  const auto back = run_report_from_json(Json::parse(to_json(r).dump()));
  EXPECT_EQ(back.config, r.config);
  EXPECT_EQ(norm_trace_csv(back), norm_trace_csv(r));
  EXPECT_EQ(loss_trace_csv(back), loss_trace_csv(r));
  EXPECT_EQ(export_prelogit_trace(back), export_prelogit_trace(r));
  EXPECT_THROW(run_report_from_json(Json::parse(R"({"epochs": [{"epoch": 0}]})")), Error);
}

}  // namespace
}  // namespace tailbalance
