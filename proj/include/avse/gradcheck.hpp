#pragma once

// Central-difference gradient checking, run at 64-bit precision.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "avse/tensor.hpp"

namespace avse {

// loss_fn evaluates the scalar loss at the current parameter values.
// backward_fn evaluates the loss once and fills every parameter's grad.
// Returns the worst relative error over all parameter elements.
inline double gradient_check(const std::function<double()>& loss_fn,
                             const std::function<void()>& backward_fn,
                             const std::vector<ParamT<double>*>& params, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("gradient_check: eps must be positive");
  for (auto* p : params) p->zero_grad();
  backward_fn();
  double max_rel = 0.0;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double lp = loss_fn();
      p->value[i] = saved - eps;
      const double lm = loss_fn();
      p->value[i] = saved;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        throw std::runtime_error("gradient_check: non-finite loss at parameter " + p->name);
      const double numeric = (lp - lm) / (2.0 * eps);
      const double analytic = p->grad[i];
      // The denominator floor doubles as an absolute tolerance: elements whose
      // true gradient is exactly zero (e.g. a bias absorbed by a following
      // batchnorm) otherwise amplify central-difference noise into spurious
      // relative errors.
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
      max_rel = std::max(max_rel, std::abs(numeric - analytic) / denom);
    }
  }
  return max_rel;
}

}  // namespace avse
