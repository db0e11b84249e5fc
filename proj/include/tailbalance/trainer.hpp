#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tailbalance/autodiff.hpp"
#include "tailbalance/balancers.hpp"
#include "tailbalance/longtail_data.hpp"
#include "tailbalance/losses.hpp"
#include "tailbalance/metrics.hpp"

namespace tailbalance {

enum class LossKind { kCrossEntropy, kClassBalanced };

struct LossConfig {
  LossKind kind = LossKind::kCrossEntropy;
  double beta = kDefaultCbBeta;  // class-balanced only

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct StageConfig {
  LossConfig loss;
  /// 0 trains every layer (stage 1); 1 or 2 fine-tunes that many final layers.
  std::size_t trainable_layers = 0;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double base_lr = 0.01;
  double momentum = 0.9;
  BalancerConfig balancer;
  std::uint64_t seed = 0;
  /// Record the 2-D pre-logit classifier every this many steps (0 = off).
  std::size_t snapshot_interval = 0;

  void validate() const;

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

struct EpochTrace {
  std::size_t epoch = 0;
  double mean_loss = 0.0;  // data loss plus weight-decay penalty
  double learning_rate = 0.0;
  std::vector<double> classifier_norms;
};

struct PrelogitSnapshot {
  std::size_t iteration = 0;
  Tensor2 filters;  // K x 2
};

struct RunReport {
  StageConfig config;
  std::vector<EpochTrace> epochs;
  std::vector<PrelogitSnapshot> snapshots;
  std::optional<MetricsReport> final_metrics;
  double wall_seconds = 0.0;
};

/// lr0 * (1 + cos(pi t / T)) / 2 for 0 <= t <= T.
double cosine_lr(std::size_t t, std::size_t total, double lr0);

/// v <- momentum v + g;  theta <- theta - lr v.
void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> velocity, double lr, double momentum);

/// Feature learning: every layer trained with cross-entropy, cosine schedule
/// per epoch, seeded reshuffle each epoch, weight decay as configured.
std::pair<Model, RunReport> train_stage1(Model model, const LabeledDataset& train,
                                         const StageConfig& cfg);

/// Classifier learning: fine-tunes the last 1 or 2 layers of a stage-1
/// model. Frozen layers receive no gradient, decay or projection.
std::pair<Model, RunReport> train_stage2(Model model, const LabeledDataset& train,
                                         const StageConfig& cfg);

/// CSV rows "iteration,class_id,w_x,w_y". Throws unavailable-trace when the
/// run recorded no snapshots.
std::string export_prelogit_trace(const RunReport& report);

}  // namespace tailbalance
