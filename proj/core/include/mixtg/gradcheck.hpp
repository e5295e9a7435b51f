#pragma once

#include <functional>
#include <vector>

#include "mixtg/tensor.hpp"

namespace mixtg {

/// Central-difference gradient of a scalar function of one tensor.
/// eps <= 0 selects the per-coordinate default 1e-5 * max(1, |x_i|).
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps = 0.0);

/// max_i |analytic_i - reference_i| / max(1, |reference_i|)
double max_rel_error(const std::vector<double>& analytic, const std::vector<double>& reference);

}  // namespace mixtg
