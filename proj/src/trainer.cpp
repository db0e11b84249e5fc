#include "tailbalance/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tailbalance/error.hpp"
#include "tailbalance/rng.hpp"

namespace tailbalance {

void StageConfig::validate() const {
  require(batch_size >= 1, "stage: batch_size must be >= 1");
  require(base_lr > 0.0 && std::isfinite(base_lr), "stage: base_lr must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, "stage: momentum must lie in [0, 1)");
  require(trainable_layers <= 2, "stage: trainable_layers must be 0, 1 or 2");
  if (loss.kind == LossKind::kClassBalanced)
    require(loss.beta >= 0.0 && loss.beta < 1.0, "stage: beta must lie in [0, 1)");
  balancer.validate();
}

double cosine_lr(std::size_t t, std::size_t total, double lr0) {
  require(total >= 1, "cosine_lr: total must be >= 1");
  require(t <= total, "cosine_lr: step " + std::to_string(t) + " is past the end " +
                          std::to_string(total));
  if (t == total) return 0.0;
  const double c = std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total));
  return lr0 * 0.5 * (1.0 + c);
}

void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> velocity, double lr, double momentum) {
  require(params.size() == grads.size() && params.size() == velocity.size(),
          "sgd: parameter, gradient and velocity sizes differ");
  for (double g : grads)
    if (!std::isfinite(g)) fail(ErrorCode::kNumericFailure, "sgd: non-finite gradient");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

namespace {

enum class Stage { kOne, kTwo };

Tensor2 prelogit_filters(const Model& m) { return m.classifier().weight; }

std::pair<Model, RunReport> run_stage(Model model, const LabeledDataset& train,
                                      const StageConfig& cfg, Stage stage) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();
  model.validate();
  train.validate();
  require(train.dim() == model.input_dim(), "train: dataset has " + std::to_string(train.dim()) +
                                                " features, model expects " +
                                                std::to_string(model.input_dim()));
  require(train.num_classes == model.num_classes(), "train: class count mismatch");
  require(train.size() > 0 || cfg.epochs == 0, "train: empty training set");

  const std::size_t L = model.layers.size();
  std::size_t first_trainable = 0;
  std::size_t maxnorm_layers = 1;
  if (stage == Stage::kTwo) {
    require(cfg.trainable_layers == 1 || cfg.trainable_layers == 2,
            "stage 2: trainable_layers must be 1 or 2");
    require(cfg.trainable_layers <= L, "stage 2: model has fewer layers than trainable_layers");
    first_trainable = L - cfg.trainable_layers;
    maxnorm_layers = cfg.trainable_layers;
  }
  if (cfg.snapshot_interval > 0)
    require(model.classifier().weight.cols() == 2,
            "train: pre-logit snapshots need a 2-dim pre-logit layer");

  const ClassWeights weights = cfg.loss.kind == LossKind::kClassBalanced
                                   ? effective_number_weights(train.class_counts, cfg.loss.beta)
                                   : unit_weights(train.num_classes);
  const LossFn loss_fn = [&weights](const Tensor2& logits, std::span<const int> labels) {
    return weighted_softmax_ce(logits, labels, weights);
  };

  RunReport report;
  report.config = cfg;

  // Velocity buffers mirror the trainable parameters.
  std::vector<Tensor2> vel_w(L), vel_b(L);
  for (std::size_t i = first_trainable; i < L; ++i) {
    vel_w[i] = Tensor2(model.layers[i].weight.rows(), model.layers[i].weight.cols());
    vel_b[i] = Tensor2(1, model.layers[i].bias.cols());
  }

  std::size_t iteration = 0;
  if (cfg.snapshot_interval > 0) report.snapshots.push_back({0, prelogit_filters(model)});

  Rng shuffle_rng(cfg.seed, stage == Stage::kOne ? 10 : 20);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.base_lr);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Tensor2 x = train.features.gather_rows(idx);
      std::vector<int> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) y[i] = train.labels[idx[i]];

      auto where = [&] {
        return " at epoch " + std::to_string(epoch) + ", step " + std::to_string(step);
      };
      LossAndGrad lg;
      try {
        lg = loss_and_grad(model, x, y, loss_fn, stage == Stage::kTwo ? cfg.trainable_layers : 0);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kNumericFailure)
          fail(ErrorCode::kNumericFailure, std::string("training diverged") + where() + ": " + e.what());
        throw;
      }
      const double penalty = add_weight_decay(model, cfg.balancer, first_trainable, lg.grads);
      const double loss = lg.loss + penalty;
      if (!std::isfinite(loss))
        fail(ErrorCode::kNumericFailure, "training diverged" + where() + ": non-finite loss");
      loss_sum += loss * static_cast<double>(idx.size());

      try {
        for (std::size_t i = first_trainable; i < L; ++i) {
          sgd_momentum_step(model.layers[i].weight.values(), lg.grads.weight[i].values(),
                            vel_w[i].values(), lr, cfg.momentum);
          sgd_momentum_step(model.layers[i].bias.values(), lg.grads.bias[i].values(),
                            vel_b[i].values(), lr, cfg.momentum);
        }
      } catch (const Error& e) {
        fail(ErrorCode::kNumericFailure, std::string("training diverged") + where() + ": " + e.what());
      }
      apply_constraint(model, cfg.balancer, maxnorm_layers);

      ++iteration;
      if (cfg.snapshot_interval > 0 && iteration % cfg.snapshot_interval == 0)
        report.snapshots.push_back({iteration, prelogit_filters(model)});
    }
    EpochTrace t;
    t.epoch = epoch;
    t.mean_loss = loss_sum / static_cast<double>(train.size());
    t.learning_rate = lr;
    t.classifier_norms = classifier_norms(model, cfg.balancer.include_bias);
    report.epochs.push_back(std::move(t));
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(model), std::move(report)};
}

}  // namespace

std::pair<Model, RunReport> train_stage1(Model model, const LabeledDataset& train,
                                         const StageConfig& cfg) {
  require(cfg.loss.kind == LossKind::kCrossEntropy, "stage 1: loss must be cross-entropy");
  require(cfg.trainable_layers == 0, "stage 1: trainable_layers must be 0 (all layers)");
  return run_stage(std::move(model), train, cfg, Stage::kOne);
}

std::pair<Model, RunReport> train_stage2(Model model, const LabeledDataset& train,
                                         const StageConfig& cfg) {
  return run_stage(std::move(model), train, cfg, Stage::kTwo);
}

std::string export_prelogit_trace(const RunReport& report) {
  if (report.snapshots.empty())
    fail(ErrorCode::kUnavailableTrace, "run recorded no pre-logit snapshots");
  std::ostringstream out;
  out.precision(17);
  out << "iteration,class_id,w_x,w_y\n";
  for (const auto& s : report.snapshots)
    for (std::size_t k = 0; k < s.filters.rows(); ++k)
      out << s.iteration << ',' << k << ',' << s.filters(k, 0) << ',' << s.filters(k, 1) << '\n';
  return out.str();
}

}  // namespace tailbalance
