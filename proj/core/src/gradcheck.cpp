#include "mixtg/gradcheck.hpp"

#include <cmath>
#include <cstdlib>

namespace mixtg {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
    std::vector<double> base = x.data();
    std::vector<double> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        const double h = eps > 0.0 ? eps : 1e-5 * std::max(1.0, std::abs(base[i]));
        std::vector<double> plus = base;
        std::vector<double> minus = base;
        plus[i] += h;
        minus[i] -= h;
        const double fp = f(Tensor::from_data(x.shape(), std::move(plus)));
        const double fm = f(Tensor::from_data(x.shape(), std::move(minus)));
        out[i] = (fp - fm) / (2.0 * h);
    }
    return Tensor::from_data(x.shape(), std::move(out));
}

double max_rel_error(const std::vector<double>& analytic, const std::vector<double>& reference) {
    if (analytic.size() != reference.size()) {
        throw DimensionError("max_rel_error: length mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max(1.0, std::abs(reference[i]));
        worst = std::max(worst, std::abs(analytic[i] - reference[i]) / denom);
    }
    return worst;
}

}  // namespace mixtg
