#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tailbalance/serialize.hpp"
#include "tailbalance/trainer.hpp"

namespace tailbalance {

// ---------------------------------------------------------------------------
// Two-stage pipeline
// ---------------------------------------------------------------------------

struct ModelSpec {
  std::vector<std::size_t> hidden;
  std::uint64_t seed = 0;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Everything a `train` run needs besides the data.
struct PipelineConfig {
  std::string train_path;
  std::string test_path;
  ModelSpec model;
  std::optional<StageConfig> stage1;
  std::optional<StageConfig> stage2;

  /// Post-hoc transform of the last configured stage.
  PostHoc posthoc() const;
  bool include_bias() const;
};

Json to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_from_json(const Json& j);

struct PipelineResult {
  Model stage1_model;
  Model final_model;  // trained weights; post-hoc transforms are not baked in
  std::optional<RunReport> stage1;
  std::optional<RunReport> stage2;
  MetricsReport metrics;  // on the evaluation set, post-hoc applied
};

/// Stage 1 (unless `stage1_model` is given), then stage 2 if configured,
/// then evaluation on `eval`.
PipelineResult run_pipeline(const PipelineConfig& cfg, const LabeledDataset& train,
                            const LabeledDataset& eval,
                            const std::optional<Model>& stage1_model = std::nullopt);

/// The report written by `train --report`. Wall-clock timing is kept under
/// its own "timing" key so the rest compares byte for byte across runs.
Json pipeline_report(const PipelineConfig& cfg, const PipelineResult& result);

// ---------------------------------------------------------------------------
// Hyperparameter sweep
// ---------------------------------------------------------------------------

/// One point of the search space. Optional values encode "off": no delta
/// means no MaxNorm, no tau means no post-hoc rescaling, and
/// trainable_layers = 0 skips stage 2.
struct SweepPoint {
  double lambda = 0.0;  // stage-1 weight decay
  double stage2_lambda = 0.0;
  std::optional<double> delta;
  std::optional<double> tau;
  double beta = kDefaultCbBeta;
  std::size_t trainable_layers = 1;

  friend bool operator==(const SweepPoint&, const SweepPoint&) = default;
};

struct SweepSpace {
  std::vector<double> lambda;
  std::vector<double> stage2_lambda;
  std::vector<std::optional<double>> delta;
  std::vector<std::optional<double>> tau;
  std::vector<double> beta;
  std::vector<std::size_t> trainable_layers;

  ModelSpec model;
  StageConfig stage1;
  StageConfig stage2;

  /// Product of axis sizes.
  std::size_t size() const;
  /// Mixed-radix decoding; the first axis (lambda) varies slowest.
  SweepPoint point(std::size_t index) const;
  void validate() const;

  StageConfig stage1_config(const SweepPoint& p) const;
  std::optional<StageConfig> stage2_config(const SweepPoint& p) const;
  PipelineConfig pipeline(const SweepPoint& p) const;
};

/// Weight-decay values swept by default.
std::vector<double> default_lambda_grid();

struct SweepMode {
  enum class Kind { kGrid, kRandom };
  Kind kind = Kind::kGrid;
  std::size_t samples = 0;
  std::uint64_t seed = 0;

  static SweepMode grid() { return {}; }
  static SweepMode random(std::size_t n, std::uint64_t seed) { return {Kind::kRandom, n, seed}; }
};

struct SweepFile {
  std::string train_path;
  std::string val_path;
  SweepSpace space;
  SweepMode mode;
};

SweepFile sweep_from_json(const Json& j);

struct TrialResult {
  std::size_t trial = 0;  // index into the grid
  SweepPoint point;
  bool ok = false;
  std::string error;
  MetricsReport metrics;
  std::vector<std::uint8_t> stage1_checkpoint;  // LTMC bytes of the stage-1 model used
};

/// Executes one point. `stage1_model` short-circuits stage-1 training.
TrialResult run_trial(const LabeledDataset& train, const LabeledDataset& val,
                      const SweepSpace& space, std::size_t trial,
                      const std::optional<Model>& stage1_model = std::nullopt);

/// Trial indices a sweep visits, ascending.
std::vector<std::size_t> sweep_trials(const SweepSpace& space, const SweepMode& mode);

/// Best first by validation mean per-class accuracy, ties by trial index;
/// failed trials last.
struct Leaderboard {
  std::vector<TrialResult> rows;
};

/// Runs every trial on up to `threads` OpenMP threads (0 = resolve from
/// TAILBALANCE_THREADS, else all cores). Stage-1 models are trained once per
/// distinct stage-1 configuration and shared read-only by the trials.
Leaderboard sweep(const LabeledDataset& train, const LabeledDataset& val,
                  const SweepSpace& space, const SweepMode& mode, int threads = 0);

std::string leaderboard_csv(const Leaderboard& board);

/// TAILBALANCE_THREADS if set and positive, else the hardware thread count.
int resolve_threads(int requested);

}  // namespace tailbalance
