#include "stms/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace stms {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    if (a.size() == 0)
        throw std::invalid_argument(std::string(who) + ": empty input");
}

}  // namespace

double mae(const Tensor& y_hat, const Tensor& y) {
    check_same_shape(y_hat, y, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::fabs(y_hat[i] - y[i]);
    return s / static_cast<double>(y.size());
}

double rmse(const Tensor& y_hat, const Tensor& y) {
    check_same_shape(y_hat, y, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = y_hat[i] - y[i];
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(y.size()));
}

double mape(const Tensor& y_hat, const Tensor& y, double floor) {
    check_same_shape(y_hat, y, "mape");
    if (floor < 0.0) throw std::invalid_argument("mape: floor must be >= 0");
    double s = 0.0;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (std::fabs(y[i]) <= floor) continue;
        s += std::fabs(y_hat[i] - y[i]) / std::fabs(y[i]);
        ++kept;
    }
    if (kept == 0)
        throw std::domain_error(
            "mape: undefined, every target is at or below the floor");
    return 100.0 * s / static_cast<double>(kept);
}

}  // namespace stms
