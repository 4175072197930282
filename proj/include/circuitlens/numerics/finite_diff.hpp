#pragma once

#include <functional>
#include <vector>

#include "circuitlens/numerics/tensor.hpp"

namespace circuitlens::numerics {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central-difference gradient estimate (f(x + h e_j) - f(x - h e_j)) / 2h for
/// every coordinate j. Perturbations are applied in double and rounded to
/// float, and the actual rounded step is used as the denominator. Throws
/// NumericError when f is non-finite at a probe point.
std::vector<double> finite_diff_gradient(const ScalarFn& f, const Tensor& x, double h);

}  // namespace circuitlens::numerics
