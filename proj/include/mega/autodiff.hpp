#pragma once

// Reverse-mode differentiation over the tape in tensor.hpp.
//
// Every backward rule is itself written with the primitives below, so a
// backward pass run with `create_graph` leaves its own computation on the tape
// and can be differentiated again.

#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "mega/tensor.hpp"

namespace mega {

// Applies one primitive. Records a node on the active tape iff some input
// carries a node. Throws ShapeError naming the kind and shapes on mismatch.
//
// Elementwise binaries (add, sub, mul) broadcast the second operand when it is
// a single element, a [1, C] row or an [R, 1] column of a rank-2 first operand.
Tensor primitive_forward(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor sum(const Tensor& x);       // -> [1]
Tensor sum_rows(const Tensor& x);  // [R, C] -> [1, C]
Tensor sum_cols(const Tensor& x);  // [R, C] -> [R, 1]
Tensor mean(const Tensor& x);      // -> [1]
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor reciprocal(const Tensor& x);
Tensor transpose(const Tensor& x);
Tensor row_softmax(const Tensor& x);
Tensor l2_normalize_rows(const Tensor& x);
Tensor gather_rows(const Tensor& x, std::vector<std::size_t> index);
Tensor scatter_add_rows(const Tensor& x, std::vector<std::size_t> index, std::size_t out_rows);
Tensor scale(const Tensor& x, double factor);

// Stop-gradient: same values, no node.
Tensor detach(const Tensor& t);

// Gradients keyed by the node id of each parameter.
class GradientMap {
 public:
  GradientMap() = default;
  explicit GradientMap(bool differentiable) : differentiable_(differentiable) {}

  void insert(const Tensor& param, Tensor grad);
  bool contains(const Tensor& param) const;
  const Tensor& at(const Tensor& param) const;  // throws Error when absent
  std::size_t size() const { return grads_.size(); }

  // True when built with create_graph; every stored gradient then has a node.
  bool differentiable() const { return differentiable_; }

 private:
  std::unordered_map<std::size_t, Tensor> grads_;
  bool differentiable_ = false;
};

// d loss / d param for each param. `loss` must be a single element on the
// active tape; every param must be on that tape. Parameters the loss does not
// depend on get zero gradients. With `create_graph`, the backward computation
// is recorded so gradients can be differentiated again.
GradientMap backward(const Tensor& loss, std::span<const Tensor> params, bool create_graph = false);

// Central-difference gradient estimate of a scalar function.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double step);

namespace debug {
// Test fixture: multiplies the backward rule of `kind` by 1.1 while set.
void set_backward_fault(std::optional<OpKind> kind);
std::optional<OpKind> backward_fault();
}  // namespace debug

}  // namespace mega
