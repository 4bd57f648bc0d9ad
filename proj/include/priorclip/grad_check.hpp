#pragma once

#include <functional>
#include <vector>

#include "priorclip/tensor.hpp"

namespace priorclip {

using ScalarFn = std::function<Tensor(const Tensor&)>;
using ScalarFnN = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of scalar `f` at `x` with central
/// differences of step `h`. Returns
///   max_i |analytic_i - numeric_i| / (|analytic_i| + |numeric_i| + 1e-12).
/// Runs at 64-bit regardless of the ambient precision.
double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// Same, over every coordinate of every input.
double grad_check(const ScalarFnN& f, const std::vector<Tensor>& inputs, double h = 1e-5);

}  // namespace priorclip
