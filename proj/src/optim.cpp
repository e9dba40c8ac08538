#include "mega/optim.hpp"

#include <cmath>

#include "mega/error.hpp"

namespace mega {

std::vector<Tensor> adam_step(std::span<const Tensor> params, const GradientMap& grads,
                              AdamState& state, double lr) {
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  for (const auto& p : params)
    if (!grads.contains(p)) throw Error("adam_step: missing gradient for a parameter");

  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Tensor::zeros(p.shape()));
      state.second_moment.push_back(Tensor::zeros(p.shape()));
    }
  }
  if (state.first_moment.size() != params.size())
    throw Error("adam_step: optimizer state tracks a different parameter count");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);

  std::vector<Tensor> updated;
  updated.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params[i];
    const Tensor& g = grads.at(p);
    if (g.shape() != p.shape()) throw ShapeError("adam_step: gradient shape differs from parameter");
    auto m = state.first_moment[i].to_vector();
    auto v = state.second_moment[i].to_vector();
    auto w = p.to_vector();
    const auto gv = g.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * gv[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * gv[k] * gv[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      w[k] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    state.first_moment[i] = Tensor(p.shape(), std::move(m));
    state.second_moment[i] = Tensor(p.shape(), std::move(v));
    updated.emplace_back(p.shape(), std::move(w));
  }
  return updated;
}

std::vector<Tensor> sgd_virtual_step(std::span<const Tensor> params, const GradientMap& grads,
                                     double lr) {
  if (!grads.differentiable())
    throw Error("sgd_virtual_step: gradients were built without create_graph");
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(sub(p, scale(grads.at(p), lr)));
  return out;
}

}  // namespace mega
