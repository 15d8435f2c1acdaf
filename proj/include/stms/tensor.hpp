#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "stms/rng.hpp"

namespace stms {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

[[noreturn]] void shape_fail(const std::string& msg);

inline void check_arg(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

// Dense row-major tensor of doubles. The data buffer is shared between
// copies; tensors are treated as immutable once built, except through mut()
// during construction and in-place parameter updates.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor from_vector(Shape shape, std::vector<double> v);
    static Tensor scalar(double v) { return from_vector({}, {v}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_ ? data_->size() : 0; }
    bool defined() const { return static_cast<bool>(data_); }

    const double* data() const { return data_->data(); }
    double* mut() { return data_->data(); }
    double operator[](std::size_t i) const { return (*data_)[i]; }

    double at(const std::vector<std::size_t>& idx) const;

    // Shares the underlying buffer; element count must match.
    Tensor reshaped(Shape shape) const;
    Tensor clone() const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    static std::size_t num_elems(const Shape& s);

private:
    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
};

// ---- pure kernels --------------------------------------------------------

// C(m,n) = A(m,k) * B(k,n), accumulating into c (caller zeroes when needed).
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
// C(m,n) += A(m,k) * B(n,k)^T
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
// C(m,n) += A(k,m)^T * B(k,n)
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

Tensor matmul(const Tensor& a, const Tensor& b);

// Numerically stabilized softmax along the last axis. NaNs in a row propagate
// to the whole row.
Tensor softmax_rows(const Tensor& a);

// gamma * (y - mean) / sqrt(var + eps) + beta along the last axis.
// gamma/beta must have shape (last_dim).
Tensor layer_norm(const Tensor& y, const Tensor& gamma, const Tensor& beta,
                  double eps);

// Entries i.i.d. uniform on [-sqrt(6/(fan_in+fan_out)), +...]. fan_in is the
// first axis, fan_out the last; a 1-d shape is treated as (1, n).
Tensor xavier_uniform_init(const Shape& shape, Rng rng);

Tensor transpose2d(const Tensor& a);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace stms
