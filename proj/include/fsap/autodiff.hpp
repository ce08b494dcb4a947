#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fsap/tensor.hpp"

namespace fsap {

// Reverse-mode autodiff over Tensor expressions. Graphs are built per forward
// pass; parameter leaves persist across passes. backward() zeroes the gradients
// of every node it touches before accumulating, so consecutive backward calls
// on graphs sharing leaves do not interfere.

struct Node {
  Tensor value;
  Tensor grad;  // allocated on demand during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents
  const char* op = "leaf";
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  static Var leaf(Tensor value, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Tensor& value() const { return n_->value; }
  Tensor& mutable_value() { return n_->value; }
  const Tensor& grad() const;
  bool requires_grad() const { return n_ && n_->requires_grad; }
  const std::vector<int>& shape() const { return n_->value.shape(); }
  NodePtr node() const { return n_; }

 private:
  NodePtr n_;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double c);
Var mul_const(Var a, const Tensor& c);
Var vlog(Var a);                       // elementwise natural log
Var clamp(Var a, double lo, double hi);  // grad passes where lo <= x <= hi
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);
Var vsum(Var a);   // scalar
Var vmean(Var a);  // scalar
Var gather(Var a, std::vector<int> indices);  // flat indices -> 1-d tensor
Var sqrt_guarded(Var a);  // elementwise sqrt; zero subgradient at 0
Var channel_sum(Var a);   // HxWxC -> HxW, sums over the last axis
Var reshape(Var a, std::vector<int> shape);  // same element count, new shape

// x: H x W x Cin, w: KH x KW x Cin x Cout, b: Cout
Var conv2d(Var x, Var w, Var b, int stride, int pad);
// softmax along the channel axis of an H x W x C tensor
Var softmax_channels(Var x);
// bilinear resize of H x W x C to out_h x out_w x C (half-pixel centers)
Var upsample_bilinear(Var x, int out_h, int out_w);

// Backpropagate from a scalar root. Throws std::invalid_argument on a
// non-scalar root.
void backward(Var root);

// Runs backward from `loss` and returns a copy of d loss / d wrt.
// Throws if loss is not scalar, if wrt does not require gradients, or if wrt
// is not reachable from loss ("no gradient path").
Tensor grad_of(Var loss, Var wrt);

}  // namespace fsap
