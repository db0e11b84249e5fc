#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailbalance/autodiff.hpp"

namespace tailbalance {

enum class ConstraintMode { kNone, kMaxNorm, kL2Unit };
enum class DecayScope { kClassifierOnly, kAllLayers };

/// Evaluation-time rescaling of the classifier filters. `kL2` is tau = 1.
struct PostHoc {
  enum class Kind { kNone, kL2, kTau };
  Kind kind = Kind::kNone;
  double tau = 0.0;

  static PostHoc none() { return {}; }
  static PostHoc l2() { return {Kind::kL2, 1.0}; }
  static PostHoc with_tau(double t) { return {Kind::kTau, t}; }

  /// Parses "none", "l2" or "tau:<value>".
  static PostHoc parse(const std::string& text);
  std::string to_string() const;

  friend bool operator==(const PostHoc&, const PostHoc&) = default;
};

struct BalancerConfig {
  double lambda = 0.0;
  std::optional<double> delta;
  ConstraintMode constraint = ConstraintMode::kNone;
  DecayScope scope = DecayScope::kAllLayers;
  PostHoc posthoc;
  /// Treat b_k as part of the class-k filter in norms, projections and
  /// post-hoc scaling. Off by default: biases are never projected.
  bool include_bias = false;

  void validate() const;

  friend bool operator==(const BalancerConfig&, const BalancerConfig&) = default;
};

// -- weight decay -----------------------------------------------------------

/// lambda * ||theta||^2
double weight_decay_penalty(std::span<const double> theta, double lambda);
/// d/dtheta of the penalty: 2 * lambda * theta.
std::vector<double> weight_decay_grad(std::span<const double> theta, double lambda);

// -- per-filter projections ---------------------------------------------------

/// Relative slack before MaxNorm rescales a filter. A filter that was just
/// projected can come out an ulp or two above delta; the slack keeps the
/// projection idempotent bit for bit.
inline constexpr double kMaxNormSlack = 1e-12;

/// theta <- min(1, delta / ||theta||) theta.
std::vector<double> maxnorm_project(std::span<const double> theta, double delta);
void maxnorm_project_inplace(std::span<double> theta, double delta);

/// theta / ||theta||. Throws degenerate-filter for the zero vector.
std::vector<double> l2unit_project(std::span<const double> theta);
void l2unit_project_inplace(std::span<double> theta);

// -- post-hoc normalization of a filter matrix (one filter per row) -----------

/// theta'_k = theta_k / ||theta_k||^tau.
Tensor2 tau_normalize(const Tensor2& filters, double tau);
/// tau_normalize with tau = 1.
Tensor2 posthoc_l2(const Tensor2& filters);

/// Derived model whose classifier filters are rescaled per `posthoc`. The
/// input model is left as is.
Model apply_posthoc(const Model& model, const PostHoc& posthoc, bool include_bias = false);

// -- diagnostics ----------------------------------------------------------------

/// ||theta_k||_2 for every class k.
std::vector<double> classifier_norms(const Model& model, bool include_bias = false);

struct LayerNormStats {
  std::vector<double> sorted_norms;  // per-filter norms, descending
  double mean = 0.0;
  double variance = 0.0;  // population variance
};

std::vector<LayerNormStats> layer_norm_stats(const Model& model);

// -- training-time hooks --------------------------------------------------------

/// Adds 2 lambda theta to `grads` for every layer in [first_trainable, L)
/// covered by the decay scope, and returns the total penalty value.
double add_weight_decay(const Model& model, const BalancerConfig& cfg,
                        std::size_t first_trainable, ModelGradients& grads);

/// Applies the configured constraint to the classifier head. MaxNorm covers
/// the last `maxnorm_layers` layers with one shared delta; l2unit covers the
/// final layer only.
void apply_constraint(Model& model, const BalancerConfig& cfg, std::size_t maxnorm_layers = 1);

}  // namespace tailbalance
