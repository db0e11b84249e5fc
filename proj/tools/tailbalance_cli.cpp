// tailbalance command-line driver.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or input error (bad
// flags, unreadable files, schema violations).

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tailbalance/error.hpp"
#include "tailbalance/harness.hpp"

namespace fs = std::filesystem;
using namespace tailbalance;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Anything that goes wrong while reading inputs is a usage error.
template <typename Fn>
auto load(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

Json read_json(const std::string& path) {
  return load([&] {
    try {
      return Json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::kInvalidArgument, path + ": " + e.what());
    }
  });
}

// Paths inside a config file are relative to that file.
std::string relative_to(const std::string& config_path, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(config_path).parent_path() / p).lexically_normal().string();
}

void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

// ------------------------------------------------------------- gen-data ----

struct GenData {
  std::size_t k = 10;
  std::uint64_t n_max = 200;
  double imbalance = 100.0;
  std::uint64_t seed = 0;
  std::size_t dim = 2;
  double sep = 2.0;
  std::string out, test_out, val_out;
  std::size_t val_per_class = 0;
};

int gen_data(const GenData& o) {
  const auto [profile, train, held] = load([&] {
    auto p = make_longtail_profile(o.k, o.n_max, o.imbalance);
    auto [tr, te] = synth_gaussian_dataset(p, o.dim, o.sep, o.seed);
    return std::tuple(p, tr, te);
  });
  save_dataset(train, o.out);
  if (!o.val_out.empty()) {
    if (o.val_per_class == 0 || o.val_per_class >= kBalancedTestPerClass)
      throw UsageError("--val-per-class must lie in [1, " +
                       std::to_string(kBalancedTestPerClass - 1) + "]");
    auto [val, test] = split_per_class(held, o.val_per_class, o.seed);
    save_dataset(val, o.val_out);
    if (!o.test_out.empty()) save_dataset(test, o.test_out);
  } else if (!o.test_out.empty()) {
    save_dataset(held, o.test_out);
  }
  std::cout << "realized imbalance factor: " << format_double(imbalance_factor(profile.counts))
            << " (" << train.size() << " training rows, " << o.k << " classes)\n";
  return 0;
}

// ---------------------------------------------------------- parse-cifar ----

struct ParseCifar {
  std::string in, out;
  std::optional<double> imbalance;
  std::uint64_t seed = 0;
  std::size_t downsample = 0;
};

int parse_cifar(const ParseCifar& o) {
  auto ds = load([&] { return load_cifar100(o.in); });
  if (o.downsample > 0) ds = load([&] { return downsample_gray(ds, o.downsample); });
  if (o.imbalance) {
    const auto n_max = *std::max_element(ds.class_counts.begin(), ds.class_counts.end());
    const auto profile = load([&] { return make_longtail_profile(ds.num_classes, n_max, *o.imbalance); });
    ds = subsample_longtail(ds, profile, o.seed);
    std::cout << "realized imbalance factor: " << format_double(imbalance_factor(ds.class_counts))
              << "\n";
  }
  save_dataset(ds, o.out);
  std::cout << ds.size() << " rows, " << ds.dim() << " features\n";
  return 0;
}

// ---------------------------------------------------------------- train ----

struct Train {
  std::string config, out, report, stage1_ckpt, stage1_out, trace_dir;
};

void write_traces(const std::string& dir, const std::string& stage, const RunReport& r) {
  fs::create_directories(dir);
  const fs::path base(dir);
  write_text((base / (stage + "_norms.csv")).string(), norm_trace_csv(r));
  write_text((base / (stage + "_loss.csv")).string(), loss_trace_csv(r));
  if (!r.snapshots.empty())
    write_text((base / (stage + "_prelogit.csv")).string(), export_prelogit_trace(r));
}

int train(const Train& o) {
  const Json j = read_json(o.config);
  PipelineConfig cfg = load([&] { return pipeline_from_json(j); });
  cfg.train_path = relative_to(o.config, cfg.train_path);
  cfg.test_path = relative_to(o.config, cfg.test_path);
  const auto train_ds = load([&] { return load_dataset(cfg.train_path); });
  const auto test_ds = load([&] { return load_dataset(cfg.test_path); });
  std::optional<Model> stage1;
  if (!o.stage1_ckpt.empty()) stage1 = load([&] { return load_checkpoint(o.stage1_ckpt); });

  const PipelineResult res = run_pipeline(cfg, train_ds, test_ds, stage1);
  save_checkpoint(res.final_model, o.out);
  if (!o.stage1_out.empty()) save_checkpoint(res.stage1_model, o.stage1_out);
  // Echo the config as given so the report re-runs from the same place.
  Json report = pipeline_report(cfg, res);
  report["config"]["train"] = j.value("train", "");
  report["config"]["test"] = j.value("test", "");
  if (!o.report.empty()) write_json(o.report, report);
  if (!o.trace_dir.empty()) {
    if (res.stage1) write_traces(o.trace_dir, "stage1", *res.stage1);
    if (res.stage2) write_traces(o.trace_dir, "stage2", *res.stage2);
    write_text((fs::path(o.trace_dir) / "per_class.csv").string(), per_class_csv(res.metrics));
  }
  std::cout << "mean per-class accuracy: " << format_double(res.metrics.mean_class_acc) << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval ----

struct Eval {
  std::string ckpt, data, train, posthoc = "none", report, per_class;
  bool include_bias = false;
};

int eval(const Eval& o) {
  const Model model = load([&] { return load_checkpoint(o.ckpt); });
  const auto data = load([&] { return load_dataset(o.data); });
  const PostHoc posthoc = load([&] { return PostHoc::parse(o.posthoc); });
  std::vector<std::uint64_t> counts;
  if (!o.train.empty()) counts = load([&] { return load_dataset(o.train).class_counts; });
  const Model scored = apply_posthoc(model, posthoc, o.include_bias);
  const MetricsReport m = load([&] { return evaluate(scored, data, counts, o.include_bias); });
  Json j = to_json(m);
  j["posthoc"] = posthoc.to_string();
  if (o.report.empty()) std::cout << j.dump(2) << "\n";
  else write_json(o.report, j);
  if (!o.per_class.empty()) write_text(o.per_class, per_class_csv(m));
  return 0;
}

// ---------------------------------------------------------------- sweep ----

struct Sweep {
  std::string space, out;
  int threads = 0;
};

int run_sweep(const Sweep& o) {
  const SweepFile f = load([&] { return sweep_from_json(read_json(o.space)); });
  const auto train_ds = load([&] { return load_dataset(relative_to(o.space, f.train_path)); });
  const auto val_ds = load([&] { return load_dataset(relative_to(o.space, f.val_path)); });
  const Leaderboard board = sweep(train_ds, val_ds, f.space, f.mode, o.threads);
  write_text(o.out, leaderboard_csv(board));
  std::size_t failed = 0;
  for (const auto& r : board.rows) failed += r.ok ? 0 : 1;
  const auto& top = board.rows.front();
  std::cout << board.rows.size() << " trials, " << failed << " failed; best trial " << top.trial
            << " mean per-class accuracy " << format_double(top.metrics.mean_class_acc) << "\n";
  return 0;
}

// --------------------------------------------------------- export-trace ----

struct ExportTrace {
  std::string report, stage = "stage1", kind = "norms", out;
};

int export_trace(const ExportTrace& o) {
  const Json j = read_json(o.report);
  if (!j.contains(o.stage) || j.at(o.stage).is_null())
    fail(ErrorCode::kUnavailableTrace, "report has no " + o.stage + " run");
  const RunReport r = load([&] { return run_report_from_json(j.at(o.stage)); });
  std::string csv;
  if (o.kind == "norms") csv = norm_trace_csv(r);
  else if (o.kind == "loss") csv = loss_trace_csv(r);
  else csv = export_prelogit_trace(r);
  if (o.out.empty()) std::cout << csv;
  else write_text(o.out, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight-balancing toolkit for long-tailed recognition"};
  app.require_subcommand(1);
  std::function<int()> action;

  GenData gd;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic long-tailed Gaussian dataset");
  g->add_option("--k", gd.k, "Number of classes")->check(CLI::Range(2, 100000));
  g->add_option("--n-max", gd.n_max, "Head class size")->check(CLI::PositiveNumber);
  g->add_option("--if", gd.imbalance, "Imbalance factor n_max / n_min")->check(CLI::Range(1.0, 1e12));
  g->add_option("--seed", gd.seed);
  g->add_option("--dim", gd.dim, "Feature dimension")->check(CLI::Range(1, 1 << 20));
  g->add_option("--sep", gd.sep, "Distance between neighbouring class means")->check(CLI::PositiveNumber);
  g->add_option("--out", gd.out, "Training set (LTDS)")->required();
  g->add_option("--test-out", gd.test_out, "Balanced held-out set (LTDS)");
  g->add_option("--val-out", gd.val_out, "Validation part of the held-out set (LTDS)");
  g->add_option("--val-per-class", gd.val_per_class, "Validation rows per class");
  g->callback([&] { action = [&] { return gen_data(gd); }; });

  ParseCifar pc;
  auto* p = app.add_subcommand("parse-cifar", "Convert CIFAR-100 binary records to LTDS");
  p->add_option("--in", pc.in, "CIFAR-100 binary file")->required();
  p->add_option("--out", pc.out, "Output dataset (LTDS)")->required();
  p->add_option("--if", pc.imbalance, "Subsample to this imbalance factor");
  p->add_option("--seed", pc.seed, "Subsampling seed");
  p->add_option("--downsample", pc.downsample, "Grayscale side length (e.g. 8)");
  p->callback([&] { action = [&] { return parse_cifar(pc); }; });

  Train tr;
  auto* t = app.add_subcommand("train", "Run stage 1 and/or stage 2 from a JSON config");
  t->add_option("--config", tr.config, "Run config (JSON)")->required();
  t->add_option("--out", tr.out, "Final checkpoint (LTMC)")->required();
  t->add_option("--report", tr.report, "Run report (JSON)");
  t->add_option("--stage1-ckpt", tr.stage1_ckpt, "Start from this stage-1 checkpoint");
  t->add_option("--stage1-out", tr.stage1_out, "Also save the stage-1 checkpoint");
  t->add_option("--trace-dir", tr.trace_dir, "Directory for CSV traces");
  t->callback([&] { action = [&] { return train(tr); }; });

  Eval ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint (LTMC)")->required();
  e->add_option("--data", ev.data, "Evaluation set (LTDS)")->required();
  e->add_option("--train", ev.train, "Training set, for split membership and norm/count correlation");
  e->add_option("--posthoc", ev.posthoc, "none | l2 | tau:<value>");
  e->add_flag("--include-bias", ev.include_bias, "Treat the bias as part of each filter");
  e->add_option("--report", ev.report, "Write metrics JSON here instead of stdout");
  e->add_option("--per-class", ev.per_class, "Per-class CSV");
  e->callback([&] { action = [&] { return eval(ev); }; });

  Sweep sw;
  auto* s = app.add_subcommand("sweep", "Grid or random search over a sweep space");
  s->add_option("--space", sw.space, "Sweep space (JSON)")->required();
  s->add_option("--out", sw.out, "Leaderboard CSV")->required();
  s->add_option("--threads", sw.threads, "Worker threads (default: TAILBALANCE_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  s->callback([&] { action = [&] { return run_sweep(sw); }; });

  ExportTrace ex;
  auto* x = app.add_subcommand("export-trace", "Extract a CSV trace from a run report");
  x->add_option("--report", ex.report, "Run report (JSON)")->required();
  x->add_option("--stage", ex.stage)->check(CLI::IsMember({"stage1", "stage2"}));
  x->add_option("--kind", ex.kind)->check(CLI::IsMember({"norms", "loss", "prelogit"}));
  x->add_option("--out", ex.out, "Output CSV (default stdout)");
  x->callback([&] { action = [&] { return export_trace(ex); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    std::cerr << "tailbalance: " << err.what() << "\n";
    return 2;
  }

  try {
    return action();
  } catch (const UsageError& err) {
    std::cerr << "tailbalance: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "tailbalance: " << err.what() << "\n";
    return 1;
  }
}
