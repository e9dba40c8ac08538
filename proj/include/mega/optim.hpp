#pragma once

#include <span>
#include <vector>

#include "mega/autodiff.hpp"

namespace mega {

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update. `params` are tape leaves keyed into `grads`;
// the returned tensors are plain values, ready to be new roots on a later tape.
// Moments are created lazily on the first step.
std::vector<Tensor> adam_step(std::span<const Tensor> params, const GradientMap& grads,
                              AdamState& state, double lr);

// One differentiable plain gradient step: p - lr * grad, kept on the tape.
// `grads` must come from backward(..., create_graph = true).
std::vector<Tensor> sgd_virtual_step(std::span<const Tensor> params, const GradientMap& grads,
                                     double lr);

}  // namespace mega
