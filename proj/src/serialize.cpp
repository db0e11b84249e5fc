#include "tailbalance/serialize.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "tailbalance/error.hpp"

namespace tailbalance {

namespace {

void allow_keys(const Json& j, const std::string& what, std::set<std::string> keys) {
  require(j.is_object(), what + ": expected a JSON object");
  for (const auto& [k, v] : j.items())
    require(keys.count(k) > 0, what + ": unknown key \"" + k + "\"");
}

template <typename T>
T get(const Json& j, const std::string& key, T fallback, const std::string& what) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kInvalidArgument, what + ": bad value for \"" + key + "\"");
  }
}

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json to_json(const BalancerConfig& cfg) {
  Json j;
  j["lambda"] = cfg.lambda;
  j["delta"] = opt(cfg.delta);
  j["constraint"] = cfg.constraint == ConstraintMode::kMaxNorm  ? "maxnorm"
                    : cfg.constraint == ConstraintMode::kL2Unit ? "l2unit"
                                                                : "none";
  j["scope"] = cfg.scope == DecayScope::kAllLayers ? "all_layers" : "classifier_only";
  j["posthoc"] = cfg.posthoc.to_string();
  j["include_bias"] = cfg.include_bias;
  return j;
}

BalancerConfig balancer_from_json(const Json& j) {
  const std::string what = "balancer";
  allow_keys(j, what, {"lambda", "delta", "constraint", "scope", "posthoc", "include_bias"});
  BalancerConfig c;
  c.lambda = get<double>(j, "lambda", 0.0, what);
  if (j.contains("delta") && !j.at("delta").is_null()) c.delta = get<double>(j, "delta", 0.0, what);
  const auto constraint = get<std::string>(j, "constraint", "none", what);
  if (constraint == "none") c.constraint = ConstraintMode::kNone;
  else if (constraint == "maxnorm") c.constraint = ConstraintMode::kMaxNorm;
  else if (constraint == "l2unit") c.constraint = ConstraintMode::kL2Unit;
  else fail(ErrorCode::kInvalidArgument, what + ": constraint must be none|maxnorm|l2unit");
  const auto scope = get<std::string>(j, "scope", "all_layers", what);
  if (scope == "all_layers") c.scope = DecayScope::kAllLayers;
  else if (scope == "classifier_only") c.scope = DecayScope::kClassifierOnly;
  else fail(ErrorCode::kInvalidArgument, what + ": scope must be classifier_only|all_layers");
  c.posthoc = PostHoc::parse(get<std::string>(j, "posthoc", "none", what));
  c.include_bias = get<bool>(j, "include_bias", false, what);
  c.validate();
  return c;
}

Json to_json(const StageConfig& cfg) {
  Json j;
  j["loss"] = cfg.loss.kind == LossKind::kClassBalanced ? "cb" : "ce";
  j["beta"] = cfg.loss.beta;
  j["trainable_layers"] = cfg.trainable_layers;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["base_lr"] = cfg.base_lr;
  j["momentum"] = cfg.momentum;
  j["seed"] = cfg.seed;
  j["snapshot_interval"] = cfg.snapshot_interval;
  j["balancer"] = to_json(cfg.balancer);
  return j;
}

StageConfig stage_from_json(const Json& j) {
  const std::string what = "stage";
  allow_keys(j, what, {"loss", "beta", "trainable_layers", "epochs", "batch_size", "base_lr",
                       "momentum", "seed", "snapshot_interval", "balancer"});
  StageConfig c;
  const auto loss = get<std::string>(j, "loss", "ce", what);
  if (loss == "ce") c.loss.kind = LossKind::kCrossEntropy;
  else if (loss == "cb") c.loss.kind = LossKind::kClassBalanced;
  else fail(ErrorCode::kInvalidArgument, what + ": loss must be ce|cb");
  c.loss.beta = get<double>(j, "beta", kDefaultCbBeta, what);
  c.trainable_layers = get<std::size_t>(j, "trainable_layers", 0, what);
  c.epochs = get<std::size_t>(j, "epochs", c.epochs, what);
  c.batch_size = get<std::size_t>(j, "batch_size", c.batch_size, what);
  c.base_lr = get<double>(j, "base_lr", c.base_lr, what);
  c.momentum = get<double>(j, "momentum", c.momentum, what);
  c.seed = get<std::uint64_t>(j, "seed", 0, what);
  c.snapshot_interval = get<std::size_t>(j, "snapshot_interval", 0, what);
  if (j.contains("balancer")) c.balancer = balancer_from_json(j.at("balancer"));
  c.validate();
  return c;
}

Json to_json(const MetricsReport& m) {
  Json j;
  Json per_class = Json::array();
  for (const auto& a : m.per_class_acc) per_class.push_back(opt(a));
  j["per_class_acc"] = per_class;
  j["mean_class_acc"] = m.mean_class_acc;
  j["split_acc"] = {{"many", opt(m.split_acc[0])},
                    {"medium", opt(m.split_acc[1])},
                    {"few", opt(m.split_acc[2])}};
  j["marginal_likelihood"] = m.marginal_likelihood;
  // Scalar summaries of the norm and marginal-likelihood plots.
  j["derived_diagnostics"] = {{"kl_to_uniform", m.kl_to_uniform},
                              {"norm_count_spearman", opt(m.norm_count_spearman)}};
  return j;
}

Json to_json(const RunReport& r) {
  Json j;
  j["config"] = to_json(r.config);
  Json epochs = Json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"mean_loss", e.mean_loss},
                      {"learning_rate", e.learning_rate},
                      {"classifier_norms", e.classifier_norms}});
  j["epochs"] = epochs;
  Json snaps = Json::array();
  for (const auto& s : r.snapshots) {
    Json pts = Json::array();
    for (std::size_t k = 0; k < s.filters.rows(); ++k)
      pts.push_back({s.filters(k, 0), s.filters(k, 1)});
    snaps.push_back({{"iteration", s.iteration}, {"filters", pts}});
  }
  j["snapshots"] = snaps;
  if (r.final_metrics) j["metrics"] = to_json(*r.final_metrics);
  return j;
}

RunReport run_report_from_json(const Json& j) {
  require(j.is_object(), "run report: expected a JSON object");
  RunReport r;
  try {
    if (j.contains("config")) r.config = stage_from_json(j.at("config"));
    for (const auto& e : j.value("epochs", Json::array())) {
      EpochTrace t;
      t.epoch = e.at("epoch").get<std::size_t>();
      t.mean_loss = e.at("mean_loss").get<double>();
      t.learning_rate = e.at("learning_rate").get<double>();
      t.classifier_norms = e.at("classifier_norms").get<std::vector<double>>();
      r.epochs.push_back(std::move(t));
    }
    for (const auto& s : j.value("snapshots", Json::array())) {
      PrelogitSnapshot snap;
      snap.iteration = s.at("iteration").get<std::size_t>();
      const auto pts = s.at("filters").get<std::vector<std::array<double, 2>>>();
      snap.filters = Tensor2(pts.size(), 2);
      for (std::size_t k = 0; k < pts.size(); ++k) {
        snap.filters(k, 0) = pts[k][0];
        snap.filters(k, 1) = pts[k][1];
      }
      r.snapshots.push_back(std::move(snap));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("run report: ") + e.what());
  }
  return r;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string norm_trace_csv(const RunReport& r) {
  std::ostringstream out;
  out << "epoch,class_id,norm\n";
  for (const auto& e : r.epochs)
    for (std::size_t k = 0; k < e.classifier_norms.size(); ++k)
      out << e.epoch << ',' << k << ',' << format_double(e.classifier_norms[k]) << '\n';
  return out.str();
}

std::string loss_trace_csv(const RunReport& r) {
  std::ostringstream out;
  out << "epoch,mean_loss,learning_rate\n";
  for (const auto& e : r.epochs)
    out << e.epoch << ',' << format_double(e.mean_loss) << ',' << format_double(e.learning_rate)
        << '\n';
  return out.str();
}

std::string per_class_csv(const MetricsReport& m) {
  std::ostringstream out;
  out << "class_id,accuracy,marginal_likelihood\n";
  for (std::size_t k = 0; k < m.per_class_acc.size(); ++k) {
    out << k << ',' << (m.per_class_acc[k] ? format_double(*m.per_class_acc[k]) : "") << ',';
    if (k < m.marginal_likelihood.size()) out << format_double(m.marginal_likelihood[k]);
    out << '\n';
  }
  return out.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorCode::kIo, "short write to " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace tailbalance
