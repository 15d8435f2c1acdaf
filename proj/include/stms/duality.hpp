#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stms/mamba.hpp"
#include "stms/tensor.hpp"

namespace stms {

// Least-squares system: X is (n, d) with full column rank, y is (n).
struct HatSystem {
    Tensor X;
    Tensor y;
    double cond_bound = 1e12;  // reject XtX beyond this condition number
};

// In-sample result: y_hat = H y with H = X (XtX)^-1 Xt; weights is H itself,
// row i holding the attention-like coefficients a_ij over the samples.
struct HatResult {
    Tensor y_hat;    // (n)
    Tensor weights;  // (n, n)
};

// Out-of-sample result for a query row x_new.
struct HatRowResult {
    double y_hat = 0.0;
    Tensor weights;  // (n)
};

// Throws std::domain_error when XtX is singular or worse-conditioned than
// sys.cond_bound.
HatResult hat_predict(const HatSystem& sys);
HatRowResult hat_predict_new(const HatSystem& sys, const Tensor& x_new);

// Cross-checks the normal-equation/Cholesky route against an independent
// modified-Gram-Schmidt QR solve on random well-conditioned instances.
// Returns the max absolute prediction deviation across all instances.
double two_solver_check(std::uint64_t seed, std::size_t instances,
                    std::size_t max_n = 20, std::size_t max_d = 5);

// Eigenvalues of a small symmetric matrix (cyclic Jacobi rotations).
std::vector<double> symmetric_eigenvalues(const Tensor& S);

// The scan written as an explicit weight matrix: per inner channel i,
//   W[i][k,m] = sum_s C_k[s] * (prod_{r=m+1..k} A_bar_r[i,s]) * B_bar_m[i,s]
// for m <= k, zero above the diagonal, so that
//   scan(U)[i,k] = sum_m W[i][k,m] U[i,m] + D[i] U[i,k].
struct MaterializedAttention {
    Tensor W;  // (d_inner, T, T), lower-triangular in the last two axes
    Tensor D;  // (d_inner)
};

MaterializedAttention materialize_scan_attention(
    const std::vector<SsmStep>& steps, const Tensor& D);

// max |selective_scan(U) - (W U + D (*) U)| over all channels and steps.
double scan_attention_deviation(const std::vector<SsmStep>& steps,
                                const Tensor& D, const Tensor& U);

// One named verification with its measured deviation and pinned tolerance.
struct DualityCheck {
    std::string name;
    double deviation = 0.0;
    double tolerance = 0.0;

    bool pass() const;
};

// The full verification suite behind the `verify` subcommand: hat-matrix
// properties, the two-solver regression cross-check, the materialized
// scan-as-attention equality, and the residual decomposition of the
// state-space block.
std::vector<DualityCheck> run_duality_suite(std::uint64_t seed);

std::string format_duality_table(const std::vector<DualityCheck>& checks);

}  // namespace stms
