#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "stms/tensor.hpp"

namespace stms {

// Reverse-mode tape node. Parents are stored only when they require
// gradients; constant subgraphs carry no closures and are dropped eagerly.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    static Var constant(Tensor t);
    static Var leaf(Tensor t);  // tracked input

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor& val() const { return n_->value; }
    const Tensor& grad() const { return n_->grad; }
    bool requires_grad() const { return n_->requires_grad; }
    const std::shared_ptr<Node>& node() const { return n_; }

private:
    std::shared_ptr<Node> n_;
};

// Runs reverse-mode accumulation from a scalar output.
void backward(const Var& out);

void accum_grad(const std::shared_ptr<Node>& n, const Tensor& g);

// ---- ops -------------------------------------------------------------

Var add(const Var& a, const Var& b);   // numpy-style broadcasting
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);   // numpy-style broadcasting
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

Var matmul(const Var& a, const Var& b);
Var bmm(const Var& a, const Var& b);  // (B,m,k) x (B,k,n) -> (B,m,n)

Var exp(const Var& a);
Var softplus(const Var& a);
Var relu(const Var& a);
Var abs(const Var& a);
// (e^x - 1)/x with the zero-order-hold small-argument guard: |x| < 1e-8
// evaluates to exactly 1 (derivative 1/2).
Var expm1x(const Var& a);

Var softmax_rows(const Var& a);
Var layer_norm(const Var& y, const Var& gamma, const Var& beta, double eps);

Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, const std::vector<std::size_t>& axes);
Var slice_last(const Var& a, std::size_t lo, std::size_t hi);
Var concat_last(const std::vector<Var>& parts);
Var broadcast_to(const Var& a, const Shape& shape);

Var sum_all(const Var& a);   // -> scalar
Var mean_all(const Var& a);  // -> scalar
Var reduce_sum(const Var& a, std::size_t axis);

// Row lookup with sparse gradient scatter; indices are data, not tracked.
Var gather_rows(const Var& table, const std::vector<std::size_t>& idx);

// Selective-scan recurrence as one tape op (adjoint recurrence backward):
//   H_k = Abar_k (*) H_{k-1} + Bbar_k (*) U_k,  Y_k = sum_s C_k (*) H_k + D (*) U_k
// Shapes: Abar,Bbar (T,di,ds); C (T,ds); U (T,di); D (di) -> Y (T,di).
Var selective_scan_graph(const Var& Abar, const Var& Bbar, const Var& C,
                         const Var& U, const Var& D);

// Shared forward kernel (also used by the step-sequence reference path).
void scan_kernel(const double* Abar, const double* Bbar, const double* C,
                 const double* U, const double* D, double* Y, double* Hstack,
                 std::size_t T, std::size_t di, std::size_t ds);

// ---- broadcast helpers -------------------------------------------------

Shape broadcast_shape(const Shape& a, const Shape& b);
Tensor reduce_to(const Tensor& g, const Shape& target);

}  // namespace stms
