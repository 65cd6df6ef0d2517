#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "stbn/tensor.hpp"

namespace stbn {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

/// Handle to a value in the dynamic computation graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  /// Empty tensor when no gradient has reached this node.
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  void zero_grad() { node_->grad = Tensor(); }

  const std::shared_ptr<Node>& node() const { return node_; }

  static Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse-mode sweep from `root`, seeded with `seed` (ones for a scalar root when empty).
void backward(const Var& root, const Tensor& seed = Tensor());

/// Value copy with no upstream edges.
Var detach(const Var& x);

// ---- elementwise / structural -------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var leaky_relu(const Var& x, float slope);
Var clamp(const Var& x, float lo, float hi);
Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& x, int begin, int count);
/// out channel k = in channel order[k].
Var permute_channels(const Var& x, const std::vector<int>& order);
Var reflect_pad(const Var& x, int bottom, int right);
Var crop(const Var& x, int h, int w);
Var avg_pool2(const Var& x);
/// Bilinear (half-pixel aligned) 2x upsampling; output size given explicitly.
Var upsample2(const Var& x, int out_h, int out_w);

// ---- convolution --------------------------------------------------------------

struct Tap {
  int dy;
  int dx;
  bool operator==(const Tap&) const = default;
};
using TapSet = std::vector<Tap>;

/// Offsets of a k x k kernel at the given dilation; `drop_center` removes (0,0).
TapSet square_taps(int kernel, int dilation, bool drop_center);

/// Stride-1 "same" convolution over an explicit tap list with zero padding.
/// weight: (Cout, Cin/groups, 1, |taps|); bias: (1, Cout, 1, 1) or undefined.
Var conv(const Var& x, const Var& weight, const Var& bias, const TapSet& taps, int groups = 1);

// ---- reductions and losses ----------------------------------------------------

Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var sum_squares(const Var& x);
Var mean_abs_diff(const Var& a, const Var& b);
Var mean_sq_diff(const Var& pred, const Tensor& target);
/// mean sqrt((a-b)^2 + eps^2)
Var charbonnier(const Var& a, const Var& b, float eps);
/// Anisotropic total variation of a flow or image, averaged.
Var tv_l1(const Var& x);

}  // namespace stbn
