#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mega/tensor.hpp"

namespace mega {

struct GradcheckEntry {
  std::string name;
  bool second_order = false;
  double max_error = 0.0;  // max |analytic - numeric| / max |numeric|
  double tolerance = 0.0;
  std::size_t cases = 0;

  bool passed() const { return max_error <= tolerance; }
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double seconds = 0.0;

  bool passed() const;
  std::string format() const;
};

inline constexpr double kFirstOrderTolerance = 1e-4;
inline constexpr double kSecondOrderTolerance = 1e-3;

// Scale-normalized error between two gradients of equal shape.
double gradient_error(const Tensor& analytic, const Tensor& numeric);

// Builds a scalar loss from the given inputs. Must only use primitives.
using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

// Max error over all inputs of backward(f) against central differences.
double check_first_order(const ScalarFn& f, std::span<const Tensor> inputs, double step = 1e-4);

// Hessian-vector check: differentiates <grad_x f, v> for input `wrt` and
// compares with central differences of the first-order gradient.
double check_hessian_vector(const ScalarFn& f, std::span<const Tensor> inputs, std::size_t wrt,
                            const Tensor& v, double step = 1e-4);

// One entry per primitive (first order, all operand positions and broadcast
// forms) plus the composite second-order pipelines.
GradcheckReport run_gradcheck(std::uint64_t seed = 7);

}  // namespace mega
