#pragma once

// Reverse-mode automatic differentiation over rank-4 tensors.
//
// A Var is a shared handle to a graph node. Operations record their parents
// and a backward closure only while gradient recording is enabled on the
// calling thread and at least one input requires a gradient; under
// NoGradGuard every op is a plain tensor computation.

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "smdris/tensor.hpp"

namespace smdris {

struct Node {
  Tensor value;
  Tensor grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  // Gradient accumulated by backward(); empty tensor if none arrived.
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();

  // Seeds d(out)/d(out) = 1 for every element, i.e. differentiates the sum.
  void backward() const;

  // Leaf copy of the value that no longer references the graph.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node>& node() const { return node_; }
  static Var from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds a node; parents and closure are dropped when no gradient is needed.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

struct PadAmounts {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;
};

enum class Resample { bilinear, nearest };

// Zero-padded 2-D convolution. weight {Cout, Cin, kh, kw}; bias {1, Cout, 1, 1}.
Var conv2d(const Var& x, const Var& weight, const std::optional<Var>& bias, ConvGeometry g);

// Element-wise a (+|*) b, where each axis of b either matches a or is 1.
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real s);
Var relu(const Var& x);
// x * sigmoid(x)
Var silu(const Var& x);
Var sigmoid(const Var& x);
Var concat_channels(const std::vector<Var>& parts);

// Per-position normalization across channels with affine {1, C, 1, 1} gamma/beta.
Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, Real eps = 1e-6);

Var global_avg_pool(const Var& x);
// Non-overlapping k x k mean; H and W must be divisible by k.
Var avg_pool(const Var& x, int k);
Var pad_replicate(const Var& x, PadAmounts p);
Var crop(const Var& x, int top, int left, int h, int w);
// align_corners=false sampling (half-pixel centers).
Var resize(const Var& x, int h, int w, Resample mode);

// Scalar ({1,1,1,1}) reductions used by the losses.
Var mean_abs_diff(const Var& pred, const Tensor& target);
Var mean_sq_diff(const Var& pred, const Tensor& target);
Var sum_sq_diff(const Var& pred, const Tensor& target);
Var sum_all(const Var& x);
Var weighted_sum(const std::vector<Var>& scalars, const std::vector<Real>& weights);

// Plain tensor helpers (no graph).
Tensor resize_tensor(const Tensor& x, int h, int w, Resample mode);
Tensor concat_channels_tensor(const std::vector<const Tensor*>& parts);

}  // namespace smdris
