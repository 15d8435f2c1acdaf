#pragma once

#include "stms/tensor.hpp"

namespace stms {

// Mean absolute error over all elements. Shapes must match exactly.
double mae(const Tensor& y_hat, const Tensor& y);

// Root mean squared error over all elements.
double rmse(const Tensor& y_hat, const Tensor& y);

// Mean absolute percentage error, in percent, over the elements whose
// target magnitude exceeds `floor` (|y| > floor). Throws std::domain_error
// when every element is masked out.
double mape(const Tensor& y_hat, const Tensor& y, double floor);

}  // namespace stms
