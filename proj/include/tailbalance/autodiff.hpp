#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tailbalance/tensor.hpp"

namespace tailbalance {

// ---------------------------------------------------------------------------
// Tape: reverse-mode differentiation over dense matrices.
// ---------------------------------------------------------------------------

using NodeId = std::size_t;

/// Records ops as they execute and replays them backwards.
///
/// Nodes are created in execution order; `backward` walks them in exactly the
/// reverse order and accumulates each op's contribution into its inputs'
/// gradients. Nodes created with `constant` never receive a gradient, and ops
/// whose inputs are all constant are skipped during the backward pass.
class Tape {
 public:
  NodeId constant(Tensor2 value);
  NodeId parameter(Tensor2 value);

  /// out = x W^T + b, with x: N x D, W: M x D, b: 1 x M.
  NodeId affine(NodeId x, NodeId w, NodeId b);
  NodeId relu(NodeId x);

  const Tensor2& value(NodeId id) const;
  /// Gradient accumulated by the last `backward` call; empty for constants.
  const Tensor2& grad(NodeId id) const;
  bool requires_grad(NodeId id) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(loss)/d(out) = seed and propagates to every parameter.
  void backward(NodeId out, const Tensor2& seed);

 private:
  enum class Op : std::uint8_t { kLeaf, kAffine, kRelu };

  struct Node {
    Op op = Op::kLeaf;
    std::array<NodeId, 3> inputs{};
    Tensor2 value;
    Tensor2 grad;
    bool requires_grad = false;
  };

  NodeId push(Node node);
  void check(NodeId id) const;
  Tensor2& grad_buffer(NodeId id);

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Model: a stack of affine layers. Row k of the last weight matrix is the
// class-k classifier filter.
// ---------------------------------------------------------------------------

enum class Activation : std::uint8_t { kIdentity = 0, kRelu = 1 };

struct Layer {
  Tensor2 weight;  // out x in
  Tensor2 bias;    // 1 x out
  Activation activation = Activation::kIdentity;

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct Model {
  std::vector<Layer> layers;

  std::size_t input_dim() const;
  std::size_t num_classes() const;
  std::size_t num_parameters() const;
  const Layer& classifier() const { return layers.back(); }
  Layer& classifier() { return layers.back(); }

  /// Throws invalid-argument unless dimensions chain and the last layer is
  /// linear.
  void validate() const;

  friend bool operator==(const Model&, const Model&) = default;
};

/// Multi-layer perceptron with ReLU hidden layers and a linear head.
/// Weights ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out)), biases zero,
/// drawn layer by layer from Rng(seed).
Model make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
               std::size_t num_classes, std::uint64_t seed);

/// Logits for every row of x. Deterministic; uses the parallel kernels.
Tensor2 forward(const Model& model, const Tensor2& x);
/// Output of the first `num_layers` layers (after their activations).
Tensor2 forward_prefix(const Model& model, const Tensor2& x, std::size_t num_layers);
/// Argmax per row; ties go to the lowest class index.
std::vector<int> predict(const Tensor2& logits);

// ---------------------------------------------------------------------------
// Losses plug in as functions from logits to (loss, d loss / d logits).
// ---------------------------------------------------------------------------

struct LossValue {
  double loss = 0.0;
  Tensor2 grad_logits;
};

using LossFn = std::function<LossValue(const Tensor2& logits, std::span<const int> labels)>;

/// Per-layer parameter gradients. Layers outside the trainable suffix have
/// empty tensors.
struct ModelGradients {
  std::vector<Tensor2> weight;
  std::vector<Tensor2> bias;
};

struct LossAndGrad {
  double loss = 0.0;
  ModelGradients grads;
};

/// Runs the model on the tape, evaluates `loss_fn` and backpropagates.
/// `trainable_suffix` = 0 means every layer is trainable; otherwise only the
/// last `trainable_suffix` layers get gradients.
LossAndGrad loss_and_grad(const Model& model, const Tensor2& x,
                          std::span<const int> labels, const LossFn& loss_fn,
                          std::size_t trainable_suffix = 0);

/// Largest relative disagreement between reverse-mode gradients and central
/// differences (L(p+eps) - L(p-eps)) / 2eps over every parameter, with
/// denominator max(|g|, 1e-8). Returns 0 for a model with no parameters.
double gradient_check(const Model& model, const Tensor2& x, std::span<const int> labels,
                      const LossFn& loss_fn, double eps);

// ---------------------------------------------------------------------------
// LTMC checkpoint:
//   "LTMC" | u32 version | u32 layer count |
//   per layer: u64 out | u64 in | u8 activation | f64 weights[out*in] |
//              f64 biases[out]
// All integers and floats little-endian, weights row-major.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Model& model);
Model decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace tailbalance
