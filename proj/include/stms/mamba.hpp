#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stms/attention.hpp"  // LayerNormParams
#include "stms/nn.hpp"

namespace stms {

// Epsilon used by every layer norm inside the state-space block; exported
// so independent reference recomputations reproduce the block exactly.
inline constexpr double kMambaLnEps = 1e-5;

struct MambaConfig {
    std::size_t d_h = 0;
    std::size_t expand = 2;
    std::size_t d_state = 16;

    std::size_t d_inner() const { return expand * d_h; }
};

// Selective state-space layer. The transition A is diagonal per inner
// channel: each of the d_inner channels carries d_state independent scalar
// modes, so exp(delta*A) is elementwise. A is stored as A_log with
// A = -exp(A_log), which keeps it strictly negative under any update.
struct MambaParams {
    LinearMap in_proj;   // d_h -> d_inner
    Parameter A_log;     // (d_inner, d_state)
    LinearMap proj_B;    // d_inner -> d_state, bias-free
    LinearMap proj_C;    // d_inner -> d_state, bias-free
    LinearMap proj_dt;   // d_inner -> d_inner, bias-free
    Parameter dt_bias;   // (d_inner), zero at init so delta starts at ln 2
    Parameter D;         // (d_inner) skip gain
    LinearMap out_proj;  // d_inner -> d_h
    LayerNormParams norm_in, norm_out;
};

// One discretized step of the recurrence.
struct SsmStep {
    Tensor A_bar;    // (d_inner, d_state)
    Tensor B_bar;    // (d_inner, d_state)
    Tensor C_k;      // (d_state)
    Tensor delta_k;  // (d_inner)
};

// A[i,j] = -(j+1) for every channel i (negative real spectrum).
Tensor hippo_init(std::size_t d_inner, std::size_t d_state);
// The stored form: A_log[i,j] = log(j+1).
Tensor hippo_a_log(std::size_t d_inner, std::size_t d_state);

MambaParams make_mamba_params(const std::string& name, const MambaConfig& cfg,
                              const Rng& root);

void collect_params(MambaParams& p, std::vector<Parameter*>& out);

// Time-major flatten (T,N,d_h) -> (T*N, d_h): row k = t*N + n. Shares the
// buffer, so the unmix round trip is bit-exact.
Tensor st_mix(const Tensor& z);
Tensor st_unmix(const Tensor& m, std::size_t T, std::size_t N);
Var st_mix(const Var& z);
Var st_unmix(const Var& m, std::size_t T, std::size_t N);

// Input-dependent SSM parameters, in the row-per-channel orientation:
// U (d_inner x L), B and C (d_state x L), delta (d_inner x L), L = rows of
// h_in. delta = softplus(dt_bias + proj_dt(U)) is strictly positive.
struct SsmProjection {
    Tensor U;
    Tensor B;
    Tensor C;
    Tensor delta;
};

SsmProjection ssm_project(MambaParams& p, const Tensor& h_in);

// Zero-order-hold discretization of one step:
//   A_bar[i,j] = exp(delta[i] * A[i,j])
//   B_bar[i,j] = (exp(delta[i]*A[i,j]) - 1) / A[i,j] * B_k[j]
// with the limit B_bar = delta*B taken when |delta*A| < 1e-8.
// Any delta <= 0 throws std::invalid_argument.
SsmStep discretize(const Tensor& A, const Tensor& B_k, const Tensor& delta_k);

// Reference recurrence over explicit steps. U is (d_inner x L), H_0 = 0:
//   H_k = A_bar_k (*) H_{k-1} + B_bar_k (*) U_k
//   Y_k = sum_state(C_k (*) H_k) + D (*) U_k
Tensor selective_scan(const std::vector<SsmStep>& steps, const Tensor& U,
                      const Tensor& D);

// Full block: norm -> project -> discretize -> scan -> out_proj -> norm,
// plus the identity residual. Input and output are (L, d_h).
Var mamba_block(Binder& bind, MambaParams& p, const Var& x_bar);

}  // namespace stms
