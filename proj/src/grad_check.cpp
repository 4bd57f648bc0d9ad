#include "priorclip/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "priorclip/errors.hpp"

namespace priorclip {

double grad_check(const ScalarFnN& f, const std::vector<Tensor>& inputs, double h) {
  PrecisionGuard precision(Precision::f64);
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const auto& x : inputs) leaves.emplace_back(x.shape(), x.to_vector(), true);

  Tensor loss = f(leaves);
  if (loss.numel() != 1) throw ContractError("grad_check: function must return a scalar");
  std::vector<std::vector<double>> analytic;
  if (loss.requires_grad()) loss.backward();
  for (const auto& leaf : leaves) {
    if (leaf.has_grad()) {
      auto g = leaf.grad();
      analytic.emplace_back(g.begin(), g.end());
    } else {
      analytic.emplace_back(leaf.numel(), 0.0);
    }
  }

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    auto values = leaves[t].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + h;
      const double fp = f(leaves).item();
      values[i] = orig - h;
      const double fm = f(leaves).item();
      values[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[t][i];
      const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

double grad_check(const ScalarFn& f, const Tensor& x, double h) {
  return grad_check([&f](const std::vector<Tensor>& xs) { return f(xs[0]); }, std::vector<Tensor>{x}, h);
}

}  // namespace priorclip
