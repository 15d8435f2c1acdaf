#pragma once

#include "stms/rng.hpp"
#include "stms/tensor.hpp"

namespace stms::testutil {

inline Tensor rand_tensor(const Shape& shape, Rng& rng, double lo = -1.0,
                          double hi = 1.0) {
    Tensor t = Tensor::zeros(shape);
    double* p = t.mut();
    for (std::size_t i = 0; i < t.size(); ++i) p[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace stms::testutil
