#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "recurnet/conv.hpp"
#include "recurnet/divergence.hpp"
#include "recurnet/tensor.hpp"

namespace recurnet {

// Handle to a node of a Graph.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode differentiation tape for one forward pass. Nodes are appended
// in evaluation order, so reverse insertion order is a valid backward order.
// Parameter values are copied in; the caller's parameter tree is never
// touched, and gradients are read back with parameter_gradients().
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor<T> value);
  Var variable(Tensor<T> value);
  // Returns the existing node when `name` was already bound.
  Var parameter(const std::string& name, const Tensor<T>& value, bool trainable = true);
  bool has_parameter(const std::string& name) const { return params_.contains(name); }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  // Empty when no gradient reached the node.
  const Tensor<T>& grad(Var v) const { return nodes_.at(v.id).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // `root` must hold a single element; its gradient is seeded with 1.
  void backward(Var root);

  // Gradients of every trainable parameter bound so far (zeros where none arrived).
  std::map<std::string, Tensor<T>> parameter_gradients() const;

  // --- operations -------------------------------------------------------
  Var conv2d(Var x, Var kernel, Var bias, const ConvGeometry& geom);
  // Per-channel normalization over H x W with learned gain and shift.
  Var instance_norm(Var x, Var gain, Var shift, double eps = 1e-5);
  Var silu(Var x);
  Var sigmoid(Var x);
  Var add(Var a, Var b);
  Var scale(Var a, double factor);
  Var concat_channels(std::span<const Var> parts);
  Var upsample2(Var x);
  // f (C,H,W) times a (1,H,W) broadcast over channels.
  Var mul_spatial(Var f, Var attention);
  // f (C,H,W) times w (C) broadcast over positions.
  Var mul_channel(Var f, Var weights);
  Var global_avg_pool(Var f);
  Var global_max_pool(Var f);
  // W (M,N) x (N) + b (M)
  Var linear(Var x, Var weight, Var bias);
  Var slice(Var x, std::size_t begin, std::size_t count);
  // a f^2 + b f + c with per-channel a, b, c.
  Var channel_quadratic(Var f, Var a, Var b, Var c);
  // a f + c with per-channel a, c.
  Var channel_affine(Var f, Var a, Var c);
  Var softmax(Var x);
  Var divergence(Var p, Var q, Divergence kind);
  Var dice_loss(Var prob, const Tensor<T>& target, double epsilon);
  // sum_i weight_i * scalar_i
  Var weighted_sum(std::span<const std::pair<Var, double>> terms);
  // sum(x * r): projects a tensor onto a fixed direction.
  Var dot(Var x, const Tensor<T>& r);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  Var push(Tensor<T> value, std::initializer_list<Var> parents, std::function<void()> backward);
  Var push(Tensor<T> value, std::span<const Var> parents, std::function<void()> backward);
  // Lazily zero-initialized gradient buffer of a node.
  Tensor<T>& grad_buffer(std::size_t id);
  bool wants(std::size_t id) const { return nodes_[id].needs_grad; }

  std::vector<Node> nodes_;
  std::map<std::string, std::pair<std::size_t, bool>> params_;
};

}  // namespace recurnet
