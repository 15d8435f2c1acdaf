#include "stms/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace stms {

namespace {

double scalar_value(const Var& y) {
    check_arg(y.defined() && y.val().size() == 1,
              "grad_check: function must return a scalar");
    return y.val()[0];
}

}  // namespace

double grad_check_multi(const std::function<Var(const std::vector<Var>&)>& f,
                        const std::vector<Tensor>& points, double h) {
    check_arg(h > 0.0, "grad_check: h must be positive");
    check_arg(!points.empty(), "grad_check: no inputs");

    std::vector<Var> leaves;
    leaves.reserve(points.size());
    for (const Tensor& p : points) leaves.push_back(Var::leaf(p.clone()));
    Var y = f(leaves);
    (void)scalar_value(y);
    backward(y);

    double worst = 0.0;
    for (std::size_t t = 0; t < points.size(); ++t) {
        const Tensor& analytic = leaves[t].grad();
        for (std::size_t c = 0; c < points[t].size(); ++c) {
            auto eval_at = [&](double delta) {
                std::vector<Var> args;
                args.reserve(points.size());
                for (std::size_t q = 0; q < points.size(); ++q) {
                    if (q == t) {
                        Tensor shifted = points[q].clone();
                        shifted.mut()[c] += delta;
                        args.push_back(Var::constant(shifted));
                    } else {
                        args.push_back(Var::constant(points[q]));
                    }
                }
                return scalar_value(f(args));
            };
            const double fd = (eval_at(h) - eval_at(-h)) / (2.0 * h);
            const double ad = analytic.defined() ? analytic[c] : 0.0;
            const double denom =
                std::max({std::fabs(ad), std::fabs(fd), 1e-8});
            const double rel = std::fabs(ad - fd) / denom;
            if (rel > worst) worst = rel;
        }
    }
    return worst;
}

double grad_check(const std::function<Var(const Var&)>& f, const Tensor& point,
                  double h) {
    return grad_check_multi(
        [&f](const std::vector<Var>& xs) { return f(xs[0]); }, {point}, h);
}

}  // namespace stms
