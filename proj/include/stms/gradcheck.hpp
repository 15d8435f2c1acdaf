#pragma once

#include <functional>
#include <vector>

#include "stms/autodiff.hpp"

namespace stms {

// Compares reverse-mode gradients against central finite differences
// (f(x+h) - f(x-h)) / 2h at the given point. `f` must map to a scalar.
// Returns the worst relative error, |ad - fd| / max(|ad|, |fd|, 1e-8).
double grad_check(const std::function<Var(const Var&)>& f, const Tensor& point,
                  double h = 1e-5);

// Same, jointly over several tracked inputs.
double grad_check_multi(const std::function<Var(const std::vector<Var>&)>& f,
                        const std::vector<Tensor>& points, double h = 1e-5);

}  // namespace stms
