#include "tailbalance/balancers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tailbalance/error.hpp"

namespace tailbalance {

PostHoc PostHoc::parse(const std::string& text) {
  if (text == "none") return none();
  if (text == "l2") return l2();
  if (text.rfind("tau:", 0) == 0) {
    std::size_t used = 0;
    double t = 0.0;
    try {
      t = std::stod(text.substr(4), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used > 0 && used == text.size() - 4 && t >= 0.0 && std::isfinite(t),
            "post-hoc: bad tau value in \"" + text + "\"");
    return with_tau(t);
  }
  fail(ErrorCode::kInvalidArgument, "post-hoc: expected none|l2|tau:<v>, got \"" + text + "\"");
}

std::string PostHoc::to_string() const {
  switch (kind) {
    case Kind::kNone: return "none";
    case Kind::kL2: return "l2";
    case Kind::kTau: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "tau:%.17g", tau);
      return buf;
    }
  }
  return "none";
}

void BalancerConfig::validate() const {
  require(lambda >= 0.0 && std::isfinite(lambda), "balancer: lambda must be >= 0");
  if (constraint == ConstraintMode::kMaxNorm)
    require(delta.has_value(), "balancer: maxnorm requires delta");
  if (delta) require(*delta > 0.0, "balancer: delta must be > 0");
  if (posthoc.kind == PostHoc::Kind::kTau) require(posthoc.tau >= 0.0, "balancer: tau must be >= 0");
}

double weight_decay_penalty(std::span<const double> theta, double lambda) {
  double s = 0.0;
  for (double v : theta) s += v * v;
  return lambda * s;
}

std::vector<double> weight_decay_grad(std::span<const double> theta, double lambda) {
  require(lambda >= 0.0, "weight decay: lambda must be >= 0");
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) g[i] = 2.0 * lambda * theta[i];
  return g;
}

void maxnorm_project_inplace(std::span<double> theta, double delta) {
  require(delta > 0.0, "maxnorm: delta must be > 0");
  const double n = l2_norm(theta);
  if (n <= delta * (1.0 + kMaxNormSlack)) return;
  const double scale = delta / n;
  for (double& v : theta) v *= scale;
}

std::vector<double> maxnorm_project(std::span<const double> theta, double delta) {
  std::vector<double> out(theta.begin(), theta.end());
  maxnorm_project_inplace(out, delta);
  return out;
}

void l2unit_project_inplace(std::span<double> theta) {
  const double n = l2_norm(theta);
  if (!(n > 0.0)) fail(ErrorCode::kDegenerateFilter, "l2unit: cannot normalize a zero filter");
  for (double& v : theta) v /= n;
}

std::vector<double> l2unit_project(std::span<const double> theta) {
  std::vector<double> out(theta.begin(), theta.end());
  l2unit_project_inplace(out);
  return out;
}

Tensor2 tau_normalize(const Tensor2& filters, double tau) {
  require(tau >= 0.0, "tau_normalize: tau must be >= 0");
  Tensor2 out = filters;
  if (tau == 0.0) return out;
  for (std::size_t k = 0; k < out.rows(); ++k) {
    auto row = out.row(k);
    const double n = l2_norm(row);
    if (!(n > 0.0))
      fail(ErrorCode::kDegenerateFilter, "tau_normalize: filter " + std::to_string(k) + " is zero");
    const double scale = tau == 1.0 ? n : std::pow(n, tau);
    for (double& v : row) v /= scale;
  }
  return out;
}

Tensor2 posthoc_l2(const Tensor2& filters) { return tau_normalize(filters, 1.0); }

namespace {

// Class filters as rows, optionally with the bias appended as a last column.
Tensor2 head_filters(const Layer& head, bool include_bias) {
  if (!include_bias) return head.weight;
  Tensor2 f(head.weight.rows(), head.weight.cols() + 1);
  for (std::size_t k = 0; k < f.rows(); ++k) {
    std::copy(head.weight.row(k).begin(), head.weight.row(k).end(), f.row(k).begin());
    f(k, head.weight.cols()) = head.bias(0, k);
  }
  return f;
}

void store_filters(Layer& head, const Tensor2& f, bool include_bias) {
  if (!include_bias) {
    head.weight = f;
    return;
  }
  for (std::size_t k = 0; k < f.rows(); ++k) {
    std::copy_n(f.row(k).begin(), head.weight.cols(), head.weight.row(k).begin());
    head.bias(0, k) = f(k, head.weight.cols());
  }
}

template <typename Fn>
void for_each_filter(Layer& layer, bool include_bias, Fn&& fn) {
  if (!include_bias) {
    for (std::size_t k = 0; k < layer.weight.rows(); ++k) fn(layer.weight.row(k));
    return;
  }
  Tensor2 f = head_filters(layer, true);
  for (std::size_t k = 0; k < f.rows(); ++k) fn(f.row(k));
  store_filters(layer, f, true);
}

}  // namespace

Model apply_posthoc(const Model& model, const PostHoc& posthoc, bool include_bias) {
  Model out = model;
  if (posthoc.kind == PostHoc::Kind::kNone) return out;
  const double tau = posthoc.kind == PostHoc::Kind::kL2 ? 1.0 : posthoc.tau;
  Layer& head = out.classifier();
  store_filters(head, tau_normalize(head_filters(head, include_bias), tau), include_bias);
  return out;
}

std::vector<double> classifier_norms(const Model& model, bool include_bias) {
  const Tensor2 f = head_filters(model.classifier(), include_bias);
  std::vector<double> norms(f.rows());
  for (std::size_t k = 0; k < f.rows(); ++k) norms[k] = l2_norm(f.row(k));
  return norms;
}

std::vector<LayerNormStats> layer_norm_stats(const Model& model) {
  std::vector<LayerNormStats> out;
  for (const Layer& l : model.layers) {
    LayerNormStats s;
    for (std::size_t r = 0; r < l.weight.rows(); ++r) s.sorted_norms.push_back(l2_norm(l.weight.row(r)));
    std::sort(s.sorted_norms.begin(), s.sorted_norms.end(), std::greater<>());
    const double n = static_cast<double>(s.sorted_norms.size());
    if (n > 0) {
      s.mean = std::accumulate(s.sorted_norms.begin(), s.sorted_norms.end(), 0.0) / n;
      double ss = 0.0;
      for (double v : s.sorted_norms) ss += (v - s.mean) * (v - s.mean);
      s.variance = ss / n;
    }
    out.push_back(std::move(s));
  }
  return out;
}

double add_weight_decay(const Model& model, const BalancerConfig& cfg,
                        std::size_t first_trainable, ModelGradients& grads) {
  if (cfg.lambda == 0.0) return 0.0;
  const std::size_t L = model.layers.size();
  double penalty = 0.0;
  auto decay = [&](std::span<const double> theta, Tensor2& g) {
    auto gv = g.values();
    for (std::size_t i = 0; i < theta.size(); ++i) gv[i] += 2.0 * cfg.lambda * theta[i];
    penalty += weight_decay_penalty(theta, cfg.lambda);
  };
  for (std::size_t i = first_trainable; i < L; ++i) {
    const bool head = i + 1 == L;
    if (cfg.scope == DecayScope::kClassifierOnly && !head) continue;
    decay(model.layers[i].weight.values(), grads.weight[i]);
    if (cfg.scope == DecayScope::kAllLayers || cfg.include_bias)
      decay(model.layers[i].bias.values(), grads.bias[i]);
  }
  return penalty;
}

void apply_constraint(Model& model, const BalancerConfig& cfg, std::size_t maxnorm_layers) {
  switch (cfg.constraint) {
    case ConstraintMode::kNone:
      return;
    case ConstraintMode::kMaxNorm: {
      const std::size_t L = model.layers.size();
      const std::size_t count = std::clamp<std::size_t>(maxnorm_layers, 1, L);
      for (std::size_t i = L - count; i < L; ++i) {
        // include_bias only concerns the class filters of the head.
        const bool with_bias = cfg.include_bias && i + 1 == L;
        for_each_filter(model.layers[i], with_bias,
                        [&](std::span<double> f) { maxnorm_project_inplace(f, *cfg.delta); });
      }
      return;
    }
    case ConstraintMode::kL2Unit:
      for_each_filter(model.classifier(), cfg.include_bias,
                      [](std::span<double> f) { l2unit_project_inplace(f); });
      return;
  }
}

}  // namespace tailbalance
