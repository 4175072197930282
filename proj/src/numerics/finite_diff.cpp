#include "circuitlens/numerics/finite_diff.hpp"

#include <cmath>

#include "circuitlens/common/error.hpp"

namespace circuitlens::numerics {

std::vector<double> finite_diff_gradient(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ValidationError("finite_diff_gradient: step must be positive");
  std::vector<float> base = x.to_vector();
  std::vector<double> grad(base.size());
  for (std::size_t j = 0; j < base.size(); ++j) {
    const float orig = base[j];
    const float hi = static_cast<float>(static_cast<double>(orig) + h);
    const float lo = static_cast<float>(static_cast<double>(orig) - h);
    base[j] = hi;
    const double fp = f(Tensor(x.shape(), base));
    base[j] = lo;
    const double fm = f(Tensor(x.shape(), base));
    base[j] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_gradient: non-finite function value at coordinate " + std::to_string(j),
                         {{"coordinate", j}});
    }
    grad[j] = (fp - fm) / (static_cast<double>(hi) - static_cast<double>(lo));
  }
  return grad;
}

}  // namespace circuitlens::numerics
