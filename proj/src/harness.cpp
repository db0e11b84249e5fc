#include "tailbalance/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "tailbalance/error.hpp"
#include "tailbalance/rng.hpp"

namespace tailbalance {

// ------------------------------------------------------------- pipeline ----

PostHoc PipelineConfig::posthoc() const {
  if (stage2) return stage2->balancer.posthoc;
  if (stage1) return stage1->balancer.posthoc;
  return PostHoc::none();
}

bool PipelineConfig::include_bias() const {
  if (stage2) return stage2->balancer.include_bias;
  if (stage1) return stage1->balancer.include_bias;
  return false;
}

namespace {

void allow_keys(const Json& j, const std::string& what, const std::set<std::string>& keys) {
  require(j.is_object(), what + ": expected a JSON object");
  for (const auto& [k, v] : j.items())
    require(keys.count(k) > 0, what + ": unknown key \"" + k + "\"");
}

template <typename T>
T field(const Json& j, const std::string& key, T fallback, const std::string& what) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kInvalidArgument, what + ": bad value for \"" + key + "\"");
  }
}

Json to_json(const ModelSpec& m) { return {{"hidden", m.hidden}, {"seed", m.seed}}; }

ModelSpec model_from_json(const Json& j) {
  allow_keys(j, "model", {"hidden", "seed"});
  ModelSpec m;
  m.hidden = field<std::vector<std::size_t>>(j, "hidden", {}, "model");
  m.seed = field<std::uint64_t>(j, "seed", 0, "model");
  for (auto h : m.hidden) require(h >= 1, "model: hidden widths must be >= 1");
  return m;
}

std::optional<StageConfig> optional_stage(const Json& j, const std::string& key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return stage_from_json(j.at(key));
}

}  // namespace

Json to_json(const PipelineConfig& cfg) {
  Json j;
  j["train"] = cfg.train_path;
  j["test"] = cfg.test_path;
  j["model"] = to_json(cfg.model);
  j["stage1"] = cfg.stage1 ? to_json(*cfg.stage1) : Json(nullptr);
  j["stage2"] = cfg.stage2 ? to_json(*cfg.stage2) : Json(nullptr);
  return j;
}

PipelineConfig pipeline_from_json(const Json& j) {
  allow_keys(j, "run config", {"train", "test", "model", "stage1", "stage2"});
  PipelineConfig c;
  c.train_path = field<std::string>(j, "train", "", "run config");
  c.test_path = field<std::string>(j, "test", "", "run config");
  if (j.contains("model")) c.model = model_from_json(j.at("model"));
  c.stage1 = optional_stage(j, "stage1");
  c.stage2 = optional_stage(j, "stage2");
  if (c.stage1) {
    require(c.stage1->loss.kind == LossKind::kCrossEntropy, "stage1: loss must be ce");
    require(c.stage1->trainable_layers == 0, "stage1: trainable_layers must be 0");
  }
  if (c.stage2)
    require(c.stage2->trainable_layers == 1 || c.stage2->trainable_layers == 2,
            "stage2: trainable_layers must be 1 or 2");
  require(c.stage1 || c.stage2, "run config: needs stage1, stage2 or both");
  return c;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const LabeledDataset& train,
                            const LabeledDataset& eval, const std::optional<Model>& stage1_model) {
  PipelineResult out;
  if (stage1_model) {
    out.stage1_model = *stage1_model;
  } else {
    require(cfg.stage1.has_value(), "pipeline: no stage1 config and no stage-1 checkpoint");
    Model init = make_mlp(train.dim(), cfg.model.hidden, train.num_classes, cfg.model.seed);
    auto [m, rep] = train_stage1(std::move(init), train, *cfg.stage1);
    out.stage1_model = std::move(m);
    out.stage1 = std::move(rep);
  }
  if (cfg.stage2) {
    auto [m, rep] = train_stage2(out.stage1_model, train, *cfg.stage2);
    out.final_model = std::move(m);
    out.stage2 = std::move(rep);
  } else {
    out.final_model = out.stage1_model;
  }
  const Model scored = apply_posthoc(out.final_model, cfg.posthoc(), cfg.include_bias());
  out.metrics = evaluate(scored, eval, train.class_counts, cfg.include_bias());
  if (out.stage2) out.stage2->final_metrics = out.metrics;
  else if (out.stage1) out.stage1->final_metrics = out.metrics;
  return out;
}

Json pipeline_report(const PipelineConfig& cfg, const PipelineResult& result) {
  Json j;
  j["config"] = to_json(cfg);
  j["stage1"] = result.stage1 ? to_json(*result.stage1) : Json(nullptr);
  j["stage2"] = result.stage2 ? to_json(*result.stage2) : Json(nullptr);
  j["metrics"] = to_json(result.metrics);
  j["timing"] = {{"stage1_seconds", result.stage1 ? result.stage1->wall_seconds : 0.0},
                 {"stage2_seconds", result.stage2 ? result.stage2->wall_seconds : 0.0}};
  return j;
}

// ---------------------------------------------------------------- sweep ----

std::vector<double> default_lambda_grid() {
  return {0.0, 1e-5, 5e-5, 1e-4, 2e-4, 5e-4, 1e-3, 5e-3, 1e-2};
}

std::size_t SweepSpace::size() const {
  return lambda.size() * stage2_lambda.size() * delta.size() * tau.size() * beta.size() *
         trainable_layers.size();
}

void SweepSpace::validate() const {
  require(!lambda.empty() && !stage2_lambda.empty() && !delta.empty() && !tau.empty() &&
              !beta.empty() && !trainable_layers.empty(),
          "sweep: every axis needs at least one value");
  for (double l : lambda) require(l >= 0.0, "sweep: lambda values must be >= 0");
  for (double l : stage2_lambda) require(l >= 0.0, "sweep: stage2_lambda values must be >= 0");
  for (const auto& d : delta) require(!d || *d > 0.0, "sweep: delta values must be > 0 or null");
  for (const auto& t : tau) require(!t || *t >= 0.0, "sweep: tau values must be >= 0 or null");
  for (double b : beta) require(b >= 0.0 && b < 1.0, "sweep: beta values must lie in [0, 1)");
  for (auto t : trainable_layers) require(t <= 2, "sweep: trainable_layers values must be 0, 1 or 2");
  stage1.validate();
  stage2.validate();
}

SweepPoint SweepSpace::point(std::size_t index) const {
  require(index < size(), "sweep: trial index out of range");
  SweepPoint p;
  // Last axis varies fastest.
  std::size_t r = index;
  p.trainable_layers = trainable_layers[r % trainable_layers.size()];
  r /= trainable_layers.size();
  p.beta = beta[r % beta.size()];
  r /= beta.size();
  p.tau = tau[r % tau.size()];
  r /= tau.size();
  p.delta = delta[r % delta.size()];
  r /= delta.size();
  p.stage2_lambda = stage2_lambda[r % stage2_lambda.size()];
  r /= stage2_lambda.size();
  p.lambda = lambda[r];
  return p;
}

StageConfig SweepSpace::stage1_config(const SweepPoint& p) const {
  StageConfig c = stage1;
  c.balancer.lambda = p.lambda;
  c.balancer.posthoc = PostHoc::none();
  return c;
}

std::optional<StageConfig> SweepSpace::stage2_config(const SweepPoint& p) const {
  if (p.trainable_layers == 0) return std::nullopt;
  StageConfig c = stage2;
  c.trainable_layers = p.trainable_layers;
  c.balancer.lambda = p.stage2_lambda;
  c.balancer.delta = p.delta;
  if (p.delta) c.balancer.constraint = ConstraintMode::kMaxNorm;
  else if (c.balancer.constraint == ConstraintMode::kMaxNorm) c.balancer.constraint = ConstraintMode::kNone;
  c.balancer.posthoc = p.tau ? PostHoc::with_tau(*p.tau) : PostHoc::none();
  c.loss.beta = p.beta;
  return c;
}

PipelineConfig SweepSpace::pipeline(const SweepPoint& p) const {
  PipelineConfig c;
  c.model = model;
  c.stage1 = stage1_config(p);
  c.stage2 = stage2_config(p);
  if (!c.stage2) c.stage1->balancer.posthoc = p.tau ? PostHoc::with_tau(*p.tau) : PostHoc::none();
  return c;
}

namespace {

template <typename T>
std::vector<T> axis(const Json& axes, const std::string& key, std::vector<T> fallback) {
  if (!axes.contains(key)) return fallback;
  try {
    return axes.at(key).get<std::vector<T>>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kInvalidArgument, "sweep axes: bad list for \"" + key + "\"");
  }
}

std::vector<std::optional<double>> optional_axis(const Json& axes, const std::string& key,
                                                 std::vector<std::optional<double>> fallback) {
  if (!axes.contains(key)) return fallback;
  const Json& a = axes.at(key);
  require(a.is_array(), "sweep axes: \"" + key + "\" must be a list");
  std::vector<std::optional<double>> out;
  for (const auto& v : a) {
    if (v.is_null()) out.emplace_back();
    else if (v.is_number()) out.emplace_back(v.get<double>());
    else fail(ErrorCode::kInvalidArgument, "sweep axes: \"" + key + "\" holds numbers or null");
  }
  return out;
}

}  // namespace

SweepFile sweep_from_json(const Json& j) {
  allow_keys(j, "sweep space", {"train", "val", "model", "stage1", "stage2", "axes", "mode"});
  SweepFile f;
  f.train_path = field<std::string>(j, "train", "", "sweep space");
  f.val_path = field<std::string>(j, "val", "", "sweep space");
  SweepSpace& s = f.space;
  if (j.contains("model")) s.model = model_from_json(j.at("model"));
  if (j.contains("stage1")) s.stage1 = stage_from_json(j.at("stage1"));
  const bool has_stage2 = j.contains("stage2") && !j.at("stage2").is_null();
  if (has_stage2) s.stage2 = stage_from_json(j.at("stage2"));
  else s.stage2.trainable_layers = 1;

  const Json axes = j.contains("axes") ? j.at("axes") : Json::object();
  allow_keys(axes, "sweep axes",
             {"lambda", "stage2_lambda", "delta", "tau", "beta", "trainable_layers"});
  if (axes.contains("lambda") && axes.at("lambda").is_string()) {
    require(axes.at("lambda") == "default", "sweep axes: lambda must be a list or \"default\"");
    s.lambda = default_lambda_grid();
  } else {
    s.lambda = axis<double>(axes, "lambda", {s.stage1.balancer.lambda});
  }
  s.stage2_lambda = axis<double>(axes, "stage2_lambda", {s.stage2.balancer.lambda});
  const auto& b2 = s.stage2.balancer;
  std::optional<double> base_delta =
      b2.constraint == ConstraintMode::kMaxNorm ? b2.delta : std::nullopt;
  std::optional<double> base_tau;
  if (b2.posthoc.kind != PostHoc::Kind::kNone) base_tau = b2.posthoc.tau;
  s.delta = optional_axis(axes, "delta", {base_delta});
  s.tau = optional_axis(axes, "tau", {base_tau});
  s.beta = axis<double>(axes, "beta", {s.stage2.loss.beta});
  s.trainable_layers = axis<std::size_t>(axes, "trainable_layers",
                                         {has_stage2 ? s.stage2.trainable_layers : std::size_t{0}});
  s.validate();

  if (j.contains("mode")) {
    const Json& m = j.at("mode");
    if (m.is_string() && m == "grid") {
      f.mode = SweepMode::grid();
    } else if (m.is_object() && m.contains("random")) {
      allow_keys(m, "sweep mode", {"random"});
      const Json& r = m.at("random");
      allow_keys(r, "sweep mode", {"n", "seed"});
      f.mode = SweepMode::random(field<std::size_t>(r, "n", 0, "sweep mode"),
                                 field<std::uint64_t>(r, "seed", 0, "sweep mode"));
      require(f.mode.samples >= 1, "sweep mode: random n must be >= 1");
    } else {
      fail(ErrorCode::kInvalidArgument, "sweep mode: expected \"grid\" or {\"random\": {...}}");
    }
  }
  return f;
}

TrialResult run_trial(const LabeledDataset& train, const LabeledDataset& val,
                      const SweepSpace& space, std::size_t trial,
                      const std::optional<Model>& stage1_model) {
  TrialResult r;
  r.trial = trial;
  r.point = space.point(trial);
  try {
    const PipelineResult res = run_pipeline(space.pipeline(r.point), train, val, stage1_model);
    r.metrics = res.metrics;
    r.stage1_checkpoint = encode_checkpoint(res.stage1_model);
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

std::vector<std::size_t> sweep_trials(const SweepSpace& space, const SweepMode& mode) {
  space.validate();
  std::vector<std::size_t> all(space.size());
  std::iota(all.begin(), all.end(), 0);
  if (mode.kind == SweepMode::Kind::kGrid || mode.samples >= all.size()) return all;
  Rng rng(mode.seed, /*stream=*/0x5e1ec7);
  // Partial Fisher-Yates: the first `samples` slots end up a uniform draw
  // without replacement.
  for (std::size_t i = 0; i < mode.samples; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(all.size() - i));
    std::swap(all[i], all[j]);
  }
  all.resize(mode.samples);
  std::sort(all.begin(), all.end());
  return all;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("TAILBALANCE_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

Leaderboard sweep(const LabeledDataset& train, const LabeledDataset& val,
                  const SweepSpace& space, const SweepMode& mode, int threads) {
  const auto trials = sweep_trials(space, mode);
  const int nthreads = resolve_threads(threads);

  // Stage 1 depends on the lambda axis only.
  std::vector<std::size_t> lambda_of(trials.size());
  std::vector<std::size_t> stage1_jobs;
  {
    const std::size_t stride = space.size() / space.lambda.size();
    std::set<std::size_t> distinct;
    for (std::size_t t = 0; t < trials.size(); ++t) {
      lambda_of[t] = trials[t] / stride;
      distinct.insert(lambda_of[t]);
    }
    stage1_jobs.assign(distinct.begin(), distinct.end());
  }

  std::vector<std::optional<Model>> stage1_models(space.lambda.size());
  std::vector<std::string> stage1_errors(space.lambda.size());
  const auto jobs = static_cast<std::int64_t>(stage1_jobs.size());
#pragma omp parallel for num_threads(nthreads) schedule(dynamic, 1)
  for (std::int64_t i = 0; i < jobs; ++i) {
    const std::size_t li = stage1_jobs[static_cast<std::size_t>(i)];
    try {
      SweepPoint p;
      p.lambda = space.lambda[li];
      Model init = make_mlp(train.dim(), space.model.hidden, train.num_classes, space.model.seed);
      stage1_models[li] = train_stage1(std::move(init), train, space.stage1_config(p)).first;
    } catch (const std::exception& e) {
      stage1_errors[li] = e.what();
    }
  }

  std::vector<TrialResult> results(trials.size());
  const auto n = static_cast<std::int64_t>(trials.size());
#pragma omp parallel for num_threads(nthreads) schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto t = static_cast<std::size_t>(i);
    const auto& cached = stage1_models[lambda_of[t]];
    if (!cached) {
      results[t].trial = trials[t];
      results[t].point = space.point(trials[t]);
      results[t].error = "stage 1 failed: " + stage1_errors[lambda_of[t]];
      continue;
    }
    results[t] = run_trial(train, val, space, trials[t], cached);
  }

  if (std::none_of(results.begin(), results.end(), [](const auto& r) { return r.ok; }))
    fail(ErrorCode::kSweepFailed, "sweep: all " + std::to_string(results.size()) +
                                      " trials failed; first error: " +
                                      (results.empty() ? std::string("none") : results[0].error));

  std::stable_sort(results.begin(), results.end(), [](const TrialResult& a, const TrialResult& b) {
    if (a.ok != b.ok) return a.ok;
    if (a.ok && a.metrics.mean_class_acc != b.metrics.mean_class_acc)
      return a.metrics.mean_class_acc > b.metrics.mean_class_acc;
    return a.trial < b.trial;
  });
  return Leaderboard{std::move(results)};
}

std::string leaderboard_csv(const Leaderboard& board) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  std::ostringstream out;
  out << "rank,trial,lambda,stage2_lambda,delta,tau,beta,trainable_layers,status,"
         "mean_class_acc,many_acc,medium_acc,few_acc,kl_to_uniform,error\n";
  for (std::size_t i = 0; i < board.rows.size(); ++i) {
    const auto& r = board.rows[i];
    const auto& p = r.point;
    out << i + 1 << ',' << r.trial << ',' << format_double(p.lambda) << ','
        << format_double(p.stage2_lambda) << ',' << opt(p.delta) << ',' << opt(p.tau) << ','
        << format_double(p.beta) << ',' << p.trainable_layers << ','
        << (r.ok ? "ok" : "failed") << ',';
    if (r.ok) {
      out << format_double(r.metrics.mean_class_acc) << ',' << opt(r.metrics.split_acc[0]) << ','
          << opt(r.metrics.split_acc[1]) << ',' << opt(r.metrics.split_acc[2]) << ','
          << format_double(r.metrics.kl_to_uniform);
    } else {
      out << ",,,,";
    }
    out << ',' << csv_field(r.error) << '\n';
  }
  return out.str();
}

}  // namespace tailbalance
