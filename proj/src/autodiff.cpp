#include "tailbalance/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "tailbalance/error.hpp"
#include "tailbalance/kernels.hpp"
#include "tailbalance/rng.hpp"

namespace tailbalance {

namespace {

void add_into(Tensor2& dst, const Tensor2& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

// ----------------------------------------------------------------- Tape ----

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

void Tape::check(NodeId id) const {
  require(id < nodes_.size(), "Tape: unknown node id");
}

NodeId Tape::constant(Tensor2 value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::parameter(Tensor2 value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
  check(x);
  check(w);
  check(b);
  const Tensor2& xv = nodes_[x].value;
  const Tensor2& wv = nodes_[w].value;
  const Tensor2& bv = nodes_[b].value;
  require(xv.cols() == wv.cols(), "affine: input has " + std::to_string(xv.cols()) +
                                      " columns but weight expects " +
                                      std::to_string(wv.cols()));
  require(bv.rows() == 1 && bv.cols() == wv.rows(), "affine: bias must be 1 x out");

  Node n;
  n.op = Op::kAffine;
  n.inputs = {x, w, b};
  n.value = Tensor2(xv.rows(), wv.rows());
  kernels::parallel::affine_forward(xv, wv, bv.values(), n.value);
  n.requires_grad =
      nodes_[x].requires_grad || nodes_[w].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
  check(x);
  const Tensor2& xv = nodes_[x].value;
  Node n;
  n.op = Op::kRelu;
  n.inputs = {x, 0, 0};
  n.value = Tensor2(xv.rows(), xv.cols());
  kernels::parallel::relu_forward(xv, n.value);
  n.requires_grad = nodes_[x].requires_grad;
  return push(std::move(n));
}

const Tensor2& Tape::value(NodeId id) const {
  check(id);
  return nodes_[id].value;
}

Tensor2& Tape::grad_buffer(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.rows() != n.value.rows())
    n.grad = Tensor2(n.value.rows(), n.value.cols());
  return n.grad;
}

const Tensor2& Tape::grad(NodeId id) const {
  check(id);
  return nodes_[id].grad;
}

bool Tape::requires_grad(NodeId id) const {
  check(id);
  return nodes_[id].requires_grad;
}

void Tape::backward(NodeId out, const Tensor2& seed) {
  check(out);
  require(seed.rows() == nodes_[out].value.rows() && seed.cols() == nodes_[out].value.cols(),
          "backward: seed shape does not match output");
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad = Tensor2(n.value.rows(), n.value.cols());
    else n.grad = Tensor2();
  }
  if (!nodes_[out].requires_grad) return;
  nodes_[out].grad = seed;

  for (NodeId id = out + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.op == Op::kLeaf) continue;
    const Tensor2& g = n.grad;
    switch (n.op) {
      case Op::kAffine: {
        const auto [x, w, b] = n.inputs;
        if (nodes_[x].requires_grad) {
          Tensor2 dx(g.rows(), nodes_[w].value.cols());
          kernels::parallel::affine_backward_input(g, nodes_[w].value, dx);
          add_into(grad_buffer(x), dx);
        }
        if (nodes_[w].requires_grad || nodes_[b].requires_grad) {
          Tensor2 dw(nodes_[w].value.rows(), nodes_[w].value.cols());
          Tensor2 db(1, nodes_[w].value.rows());
          kernels::parallel::affine_backward_params(g, nodes_[x].value, dw, db.values());
          if (nodes_[w].requires_grad) add_into(grad_buffer(w), dw);
          if (nodes_[b].requires_grad) add_into(grad_buffer(b), db);
        }
        break;
      }
      case Op::kRelu: {
        const NodeId x = n.inputs[0];
        Tensor2 dx(g.rows(), g.cols());
        kernels::parallel::relu_backward(g, nodes_[x].value, dx);
        add_into(grad_buffer(x), dx);
        break;
      }
      case Op::kLeaf:
        break;
    }
  }
}

// ---------------------------------------------------------------- Model ----

std::size_t Model::input_dim() const {
  require(!layers.empty(), "model has no layers");
  return layers.front().weight.cols();
}

std::size_t Model::num_classes() const {
  require(!layers.empty(), "model has no layers");
  return layers.back().weight.rows();
}

std::size_t Model::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void Model::validate() const {
  require(!layers.empty(), "model has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    require(l.bias.rows() == 1 && l.bias.cols() == l.weight.rows(),
            "layer " + std::to_string(i) + ": bias must be 1 x out");
    if (i > 0)
      require(l.weight.cols() == layers[i - 1].weight.rows(),
              "layer " + std::to_string(i) + ": input dim does not chain");
  }
  require(layers.back().activation == Activation::kIdentity,
          "final layer must use the identity activation");
}

Model make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden,
               std::size_t num_classes, std::uint64_t seed) {
  require(input_dim >= 1 && num_classes >= 1, "make_mlp: empty dimensions");
  Rng rng(seed, /*stream=*/0x1a17);
  Model m;
  std::size_t fan_in = input_dim;
  auto add = [&](std::size_t fan_out, Activation act) {
    require(fan_out >= 1, "make_mlp: zero-width layer");
    Layer l;
    l.weight = Tensor2(fan_out, fan_in);
    l.bias = Tensor2(1, fan_out);
    l.activation = act;
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : l.weight.values()) v = rng.uniform(-a, a);
    m.layers.push_back(std::move(l));
    fan_in = fan_out;
  };
  for (std::size_t h : hidden) add(h, Activation::kRelu);
  add(num_classes, Activation::kIdentity);
  return m;
}

Tensor2 forward_prefix(const Model& model, const Tensor2& x, std::size_t num_layers) {
  require(num_layers <= model.layers.size(), "forward_prefix: too many layers");
  Tensor2 h = x;
  for (std::size_t i = 0; i < num_layers; ++i) {
    const Layer& l = model.layers[i];
    require(h.cols() == l.weight.cols(), "forward: input has " + std::to_string(h.cols()) +
                                             " columns, layer " + std::to_string(i) +
                                             " expects " + std::to_string(l.weight.cols()));
    Tensor2 out(h.rows(), l.weight.rows());
    kernels::parallel::affine_forward(h, l.weight, l.bias.values(), out);
    if (l.activation == Activation::kRelu) kernels::parallel::relu_forward(out, out);
    h = std::move(out);
  }
  return h;
}

Tensor2 forward(const Model& model, const Tensor2& x) {
  return forward_prefix(model, x, model.layers.size());
}

std::vector<int> predict(const Tensor2& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

LossAndGrad loss_and_grad(const Model& model, const Tensor2& x,
                          std::span<const int> labels, const LossFn& loss_fn,
                          std::size_t trainable_suffix) {
  const std::size_t L = model.layers.size();
  require(trainable_suffix <= L, "trainable suffix exceeds layer count");
  const std::size_t first_trainable = trainable_suffix == 0 ? 0 : L - trainable_suffix;

  Tape tape;
  std::vector<NodeId> w_ids(L), b_ids(L);
  NodeId h = tape.constant(x);
  for (std::size_t i = 0; i < L; ++i) {
    const Layer& l = model.layers[i];
    const bool trainable = i >= first_trainable;
    w_ids[i] = trainable ? tape.parameter(l.weight) : tape.constant(l.weight);
    b_ids[i] = trainable ? tape.parameter(l.bias) : tape.constant(l.bias);
    h = tape.affine(h, w_ids[i], b_ids[i]);
    if (l.activation == Activation::kRelu) h = tape.relu(h);
  }

  LossValue lv = loss_fn(tape.value(h), labels);
  tape.backward(h, lv.grad_logits);

  LossAndGrad out;
  out.loss = lv.loss;
  out.grads.weight.resize(L);
  out.grads.bias.resize(L);
  for (std::size_t i = first_trainable; i < L; ++i) {
    out.grads.weight[i] = tape.grad(w_ids[i]);
    out.grads.bias[i] = tape.grad(b_ids[i]);
  }
  return out;
}

double gradient_check(const Model& model, const Tensor2& x, std::span<const int> labels,
                      const LossFn& loss_fn, double eps) {
  require(eps > 0.0 && eps <= 1e-2, "gradient_check: eps must lie in (0, 1e-2]");
  if (model.num_parameters() == 0) return 0.0;

  const LossAndGrad analytic = loss_and_grad(model, x, labels, loss_fn);
  if (!std::isfinite(analytic.loss))
    fail(ErrorCode::kNumericFailure, "gradient_check: non-finite loss");

  Model probe = model;
  auto eval = [&]() {
    const double v = loss_fn(forward(probe, x), labels).loss;
    if (!std::isfinite(v)) fail(ErrorCode::kNumericFailure, "gradient_check: non-finite loss");
    return v;
  };

  double worst = 0.0;
  auto scan = [&](std::span<double> params, std::span<const double> grads) {
    for (std::size_t p = 0; p < params.size(); ++p) {
      const double saved = params[p];
      params[p] = saved + eps;
      const double up = eval();
      params[p] = saved - eps;
      const double down = eval();
      params[p] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double g = grads[p];
      worst = std::max(worst, std::abs(g - numeric) / std::max(std::abs(g), 1e-8));
    }
  };
  for (std::size_t i = 0; i < probe.layers.size(); ++i) {
    scan(probe.layers[i].weight.values(), analytic.grads.weight[i].values());
    scan(probe.layers[i].bias.values(), analytic.grads.bias[i].values());
  }
  return worst;
}

}  // namespace tailbalance
