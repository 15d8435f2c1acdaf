#include "stms/duality.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "stms/rng.hpp"

namespace stms {

namespace {

Tensor randn(const std::vector<std::size_t>& shape, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    double* d = t.mut();
    for (std::size_t i = 0; i < t.size(); ++i) d[i] = rng.normal();
    return t;
}

// G = L L^T for symmetric positive definite G; throws on a non-positive
// pivot (which the eigenvalue gate should already have excluded).
Tensor cholesky(const Tensor& G) {
    const std::size_t d = G.dim(0);
    Tensor L = Tensor::zeros({d, d});
    double* l = L.mut();
    const double* g = G.data();
    for (std::size_t j = 0; j < d; ++j) {
        double diag = g[j * d + j];
        for (std::size_t k = 0; k < j; ++k) diag -= l[j * d + k] * l[j * d + k];
        if (!(diag > 0.0))
            throw std::domain_error("hat_predict: singular XtX (Cholesky pivot)");
        l[j * d + j] = std::sqrt(diag);
        for (std::size_t i = j + 1; i < d; ++i) {
            double s = g[i * d + j];
            for (std::size_t k = 0; k < j; ++k) s -= l[i * d + k] * l[j * d + k];
            l[i * d + j] = s / l[j * d + j];
        }
    }
    return L;
}

// Solves (L L^T) W = rhs column-by-column; rhs is (d, m).
Tensor chol_solve(const Tensor& L, const Tensor& rhs) {
    const std::size_t d = L.dim(0), m = rhs.dim(1);
    Tensor W = Tensor::zeros({d, m});
    double* w = W.mut();
    const double* l = L.data();
    std::vector<double> z(d);
    for (std::size_t c = 0; c < m; ++c) {
        for (std::size_t i = 0; i < d; ++i) {
            double s = rhs[i * m + c];
            for (std::size_t k = 0; k < i; ++k) s -= l[i * d + k] * z[k];
            z[i] = s / l[i * d + i];
        }
        for (std::size_t ii = d; ii-- > 0;) {
            double s = z[ii];
            for (std::size_t k = ii + 1; k < d; ++k) s -= l[k * d + ii] * w[k * m + c];
            w[ii * m + c] = s / l[ii * d + ii];
        }
    }
    return W;
}

// Gram matrix with the conditioning gate shared by both entry points.
Tensor checked_gram(const HatSystem& sys) {
    check_arg(sys.X.rank() == 2, "hat_predict: X must be (n, d)");
    check_arg(sys.y.rank() == 1 && sys.y.dim(0) == sys.X.dim(0),
              "hat_predict: y must have one entry per row of X");
    check_arg(sys.X.dim(0) >= sys.X.dim(1),
              "hat_predict: need at least d samples");
    const Tensor G = matmul(transpose2d(sys.X), sys.X);
    const std::vector<double> ev = symmetric_eigenvalues(G);
    double lo = ev[0], hi = ev[0];
    for (double e : ev) {
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    if (!(lo > 0.0) || hi / lo > sys.cond_bound)
        throw std::domain_error(
            "hat_predict: singular or ill-conditioned XtX (cond ~ " +
            std::to_string(lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity()) +
            ")");
    return G;
}

// Modified Gram-Schmidt orthonormal basis of the column space.
Tensor mgs_q(const Tensor& X) {
    const std::size_t n = X.dim(0), d = X.dim(1);
    Tensor Q = X.clone();
    double* q = Q.mut();
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double r = 0.0;
            for (std::size_t i = 0; i < n; ++i) r += q[i * d + k] * q[i * d + j];
            for (std::size_t i = 0; i < n; ++i) q[i * d + j] -= r * q[i * d + k];
        }
        double nrm = 0.0;
        for (std::size_t i = 0; i < n; ++i) nrm += q[i * d + j] * q[i * d + j];
        nrm = std::sqrt(nrm);
        if (nrm < 1e-12) throw std::domain_error("mgs: rank-deficient X");
        for (std::size_t i = 0; i < n; ++i) q[i * d + j] /= nrm;
    }
    return Q;
}

}  // namespace

std::vector<double> symmetric_eigenvalues(const Tensor& S) {
    check_arg(S.rank() == 2 && S.dim(0) == S.dim(1),
              "symmetric_eigenvalues: need a square matrix");
    const std::size_t d = S.dim(0);
    std::vector<double> a(S.data(), S.data() + d * d);
    double scale = 0.0;
    for (double v : a) scale = std::max(scale, std::fabs(v));
    if (scale == 0.0) return std::vector<double>(d, 0.0);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
        if (off < 1e-30 * scale * scale) break;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double tau = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p], akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k], aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(d);
    for (std::size_t i = 0; i < d; ++i) ev[i] = a[i * d + i];
    return ev;
}

HatResult hat_predict(const HatSystem& sys) {
    const Tensor G = checked_gram(sys);
    const Tensor L = cholesky(G);
    const Tensor W = chol_solve(L, transpose2d(sys.X));  // (d, n) = G^-1 Xt
    HatResult r;
    r.weights = matmul(sys.X, W);  // (n, n)
    const std::size_t n = sys.X.dim(0);
    r.y_hat = Tensor::zeros({n});
    double* yh = r.y_hat.mut();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += r.weights[i * n + j] * sys.y[j];
        yh[i] = s;
    }
    return r;
}

HatRowResult hat_predict_new(const HatSystem& sys, const Tensor& x_new) {
    const std::size_t d = sys.X.dim(1), n = sys.X.dim(0);
    check_arg(x_new.size() == d, "hat_predict_new: x_new must have d entries");
    const Tensor G = checked_gram(sys);
    const Tensor L = cholesky(G);
    Tensor xn = Tensor::zeros({d, 1});
    for (std::size_t j = 0; j < d; ++j) xn.mut()[j] = x_new[j];
    const Tensor v = chol_solve(L, xn);  // (d,1) = G^-1 x_new
    HatRowResult r;
    r.weights = Tensor::zeros({n});
    double* w = r.weights.mut();
    double pred = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += sys.X[i * d + j] * v[j];
        w[i] = s;
        pred += s * sys.y[i];
    }
    r.y_hat = pred;
    return r;
}

double two_solver_check(std::uint64_t seed, std::size_t instances,
                    std::size_t max_n, std::size_t max_d) {
    check_arg(instances > 0 && max_d >= 1 && max_n >= 2,
              "two_solver_check: degenerate sizes");
    Rng root(seed);
    double worst = 0.0;
    for (std::size_t it = 0; it < instances; ++it) {
        Rng rng = root.split(static_cast<std::uint64_t>(it));
        const std::size_t d = 1 + rng.index(std::min(max_d, max_n - 1));
        const std::size_t n = d + 1 + rng.index(max_n - d);
        const Tensor X = randn({n, d}, rng);
        const Tensor y = randn({n}, rng);

        HatResult hat;
        try {
            hat = hat_predict({X, y});
        } catch (const std::domain_error&) {
            continue;  // ill-conditioned draw; the property targets the rest
        }
        const Tensor Q = mgs_q(X);
        // QR route: y_hat = Q (Qt y)
        std::vector<double> qty(d, 0.0);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < n; ++i) qty[j] += Q[i * d + j] * y[i];
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += Q[i * d + j] * qty[j];
            worst = std::max(worst, std::fabs(s - hat.y_hat[i]));
        }
    }
    return worst;
}

MaterializedAttention materialize_scan_attention(
    const std::vector<SsmStep>& steps, const Tensor& D) {
    check_arg(!steps.empty(), "materialize_scan_attention: no steps");
    const std::size_t T = steps.size();
    const std::size_t di = steps[0].A_bar.dim(0), ds = steps[0].A_bar.dim(1);
    check_arg(D.size() == di,
              "materialize_scan_attention: D must have d_inner entries");

    MaterializedAttention out;
    out.W = Tensor::zeros({di, T, T});
    out.D = D.clone();
    double* w = out.W.mut();
    std::vector<double> prod(ds);
    for (std::size_t i = 0; i < di; ++i)
        for (std::size_t m = 0; m < T; ++m) {
            for (std::size_t s = 0; s < ds; ++s) prod[s] = steps[m].B_bar[i * ds + s];
            for (std::size_t k = m; k < T; ++k) {
                if (k > m)
                    for (std::size_t s = 0; s < ds; ++s)
                        prod[s] *= steps[k].A_bar[i * ds + s];
                double acc = 0.0;
                for (std::size_t s = 0; s < ds; ++s) acc += steps[k].C_k[s] * prod[s];
                w[(i * T + k) * T + m] = acc;
            }
        }
    return out;
}

double scan_attention_deviation(const std::vector<SsmStep>& steps,
                                const Tensor& D, const Tensor& U) {
    const Tensor direct = selective_scan(steps, U, D);
    const MaterializedAttention mat = materialize_scan_attention(steps, D);
    const std::size_t di = U.dim(0), T = U.dim(1);
    double worst = 0.0;
    for (std::size_t i = 0; i < di; ++i)
        for (std::size_t k = 0; k < T; ++k) {
            double s = D[i] * U[i * T + k];
            for (std::size_t m = 0; m <= k; ++m)
                s += mat.W[(i * T + k) * T + m] * U[i * T + m];
            worst = std::max(worst, std::fabs(s - direct[i * T + k]));
        }
    return worst;
}

bool DualityCheck::pass() const {
    return std::isfinite(deviation) && deviation < tolerance;
}

namespace {

Tensor column(const Tensor& M, std::size_t c) {
    const std::size_t rows = M.dim(0), cols = M.dim(1);
    Tensor out = Tensor::zeros({rows});
    for (std::size_t r = 0; r < rows; ++r) out.mut()[r] = M[r * cols + c];
    return out;
}

// The state-space branch recomputed from the public pieces, kernel path.
Tensor reference_branch(MambaParams& p, const Tensor& x) {
    const Tensor xn =
        layer_norm(x, p.norm_in.gamma.value, p.norm_in.beta.value, kMambaLnEps);
    const SsmProjection proj = ssm_project(p, xn);
    const std::size_t L = x.dim(0), ds = p.A_log.value.dim(1);
    Tensor A = p.A_log.value.clone();
    for (std::size_t i = 0; i < A.size(); ++i) A.mut()[i] = -std::exp(A[i]);
    std::vector<SsmStep> steps;
    steps.reserve(L);
    for (std::size_t k = 0; k < L; ++k) {
        SsmStep s = discretize(A, column(proj.B, k), column(proj.delta, k));
        for (std::size_t j = 0; j < ds; ++j)
            s.C_k.mut()[j] = proj.C[j * L + k];
        steps.push_back(std::move(s));
    }
    const Tensor Y = selective_scan(steps, proj.U, p.D.value);  // (di, L)
    Tensor rows = transpose2d(Y);                               // (L, di)
    Tensor out = matmul(rows, p.out_proj.W.value);
    for (std::size_t r = 0; r < out.dim(0); ++r)
        for (std::size_t c = 0; c < out.dim(1); ++c)
            out.mut()[r * out.dim(1) + c] += p.out_proj.b.value[c];
    return layer_norm(out, p.norm_out.gamma.value, p.norm_out.beta.value,
                      kMambaLnEps);
}

Tensor block_output(MambaParams& p, const Tensor& x) {
    Binder eval(false);
    return mamba_block(eval, p, Var::constant(x)).val();
}

std::vector<SsmStep> random_steps(std::size_t T, std::size_t di,
                                  std::size_t ds, Rng& rng) {
    Tensor A = Tensor::zeros({di, ds});
    for (std::size_t i = 0; i < A.size(); ++i)
        A.mut()[i] = -rng.uniform(0.2, 2.0);
    std::vector<SsmStep> steps;
    steps.reserve(T);
    for (std::size_t k = 0; k < T; ++k) {
        Tensor B = randn({ds}, rng);
        Tensor dt = Tensor::zeros({di});
        for (std::size_t i = 0; i < di; ++i) dt.mut()[i] = rng.uniform(0.01, 0.5);
        SsmStep s = discretize(A, B, dt);
        Tensor C = randn({ds}, rng);
        s.C_k = C;
        steps.push_back(std::move(s));
    }
    return steps;
}

}  // namespace

std::vector<DualityCheck> run_duality_suite(std::uint64_t seed) {
    std::vector<DualityCheck> out;
    const Rng root(seed);

    {  // constant design column: prediction is the sample mean, weights 1/n
        HatSystem sys{Tensor::from_vector({2, 1}, {1.0, 1.0}),
                      Tensor::from_vector({2}, {1.0, 3.0})};
        const HatResult r = hat_predict(sys);
        double dev = 0.0;
        for (std::size_t i = 0; i < 2; ++i)
            dev = std::max(dev, std::fabs(r.y_hat[i] - 2.0));
        for (std::size_t i = 0; i < 4; ++i)
            dev = std::max(dev, std::fabs(r.weights[i] - 0.5));
        out.push_back({"hat-oracle-mean", dev, 1e-12});
    }
    {  // orthonormal square design: hat matrix is the identity
        Rng rng = root.split("ortho");
        const Tensor Q = mgs_q(randn({5, 5}, rng));
        const HatResult r = hat_predict({Q, randn({5}, rng)});
        double dev = 0.0;
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j)
                dev = std::max(dev, std::fabs(r.weights[i * 5 + j] -
                                              (i == j ? 1.0 : 0.0)));
        out.push_back({"hat-orthonormal-identity", dev, 1e-8});
    }
    {  // projection properties over random instances (one with a duplicated
       // row, which must keep the weights symmetric)
        Rng rng = root.split("proj");
        double idem = 0.0, sym = 0.0, trace_dev = 0.0;
        for (std::size_t it = 0; it < 20; ++it) {
            const std::size_t d = 1 + rng.index(4);
            const std::size_t n = d + 2 + rng.index(8);
            Tensor X = randn({n, d}, rng);
            if (it == 0)
                for (std::size_t j = 0; j < d; ++j) X.mut()[d + j] = X[j];
            const HatResult r = hat_predict({X, randn({n}, rng)});
            const Tensor HH = matmul(r.weights, r.weights);
            idem = std::max(idem, max_abs_diff(HH, r.weights));
            double tr = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                tr += r.weights[i * n + i];
                for (std::size_t j = 0; j < n; ++j)
                    sym = std::max(sym, std::fabs(r.weights[i * n + j] -
                                                  r.weights[j * n + i]));
            }
            trace_dev = std::max(trace_dev, std::fabs(tr - static_cast<double>(d)));
        }
        out.push_back({"hat-idempotent", idem, 1e-8});
        out.push_back({"hat-symmetric", sym, 1e-8});
        out.push_back({"hat-trace-rank", trace_dev, 1e-8});
    }
    out.push_back(
        {"regression-two-solver", two_solver_check(seed, 100, 20, 5), 1e-8});
    {  // d=1 constant column on a larger sample: least squares is the mean
        Rng rng = root.split("mean");
        const std::size_t n = 9;
        const Tensor y = randn({n}, rng);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += y[i];
        mean /= static_cast<double>(n);
        const HatResult r = hat_predict({Tensor::full({n, 1}, 1.0), y});
        double dev = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            dev = std::max(dev, std::fabs(r.y_hat[i] - mean));
        out.push_back({"regression-constant-mean", dev, 1e-10});
    }
    {  // one-step scan: the single weight is sum_s C[s] B_bar[i,s]
        Rng rng = root.split("t1");
        const std::size_t di = 3, ds = 2;
        const auto steps = random_steps(1, di, ds, rng);
        const MaterializedAttention mat =
            materialize_scan_attention(steps, Tensor::zeros({di}));
        double dev = 0.0;
        for (std::size_t i = 0; i < di; ++i) {
            double want = 0.0;
            for (std::size_t s = 0; s < ds; ++s)
                want += steps[0].C_k[s] * steps[0].B_bar[i * ds + s];
            dev = std::max(dev, std::fabs(mat.W[i] - want));
        }
        out.push_back({"scan-weights-one-step", dev, 1e-12});
    }
    {  // A_bar = 1: weights telescope, rows accumulate the B_bar history
        Rng rng = root.split("cumsum");
        const std::size_t T = 6, di = 2, ds = 3;
        std::vector<SsmStep> steps(T);
        for (std::size_t k = 0; k < T; ++k) {
            steps[k].A_bar = Tensor::full({di, ds}, 1.0);
            steps[k].B_bar = randn({di, ds}, rng);
            steps[k].C_k = randn({ds}, rng);
            steps[k].delta_k = Tensor::full({di}, 1.0);
        }
        const Tensor D = randn({di}, rng);
        const Tensor U = randn({di, T}, rng);
        double dev = scan_attention_deviation(steps, D, U);
        const MaterializedAttention mat = materialize_scan_attention(steps, D);
        for (std::size_t i = 0; i < di; ++i)
            for (std::size_t k = 0; k < T; ++k)
                for (std::size_t m = 0; m <= k; ++m) {
                    double want = 0.0;
                    for (std::size_t s = 0; s < ds; ++s)
                        want += steps[k].C_k[s] * steps[m].B_bar[i * ds + s];
                    dev = std::max(dev,
                                   std::fabs(mat.W[(i * T + k) * T + m] - want));
                }
        out.push_back({"scan-weights-telescoped", dev, 1e-10});
    }
    {  // random instances: the scan equals its materialized weighted sum
        Rng rng = root.split("scanattn");
        double dev = 0.0, upper = 0.0;
        for (std::size_t it = 0; it < 20; ++it) {
            const std::size_t T = it < 10 ? 16 : 4 + rng.index(29);  // up to 32
            const std::size_t di = 1 + rng.index(6);
            const std::size_t ds = it < 10 ? 4 : 1 + rng.index(4);
            const auto steps = random_steps(T, di, ds, rng);
            const Tensor D = randn({di}, rng);
            const Tensor U = randn({di, T}, rng);
            dev = std::max(dev, scan_attention_deviation(steps, D, U));
            const MaterializedAttention mat = materialize_scan_attention(steps, D);
            for (std::size_t i = 0; i < di; ++i)
                for (std::size_t k = 0; k < T; ++k)
                    for (std::size_t m = k + 1; m < T; ++m)
                        upper = std::max(
                            upper, std::fabs(mat.W[(i * T + k) * T + m]));
        }
        out.push_back({"scan-as-attention", dev, 1e-8});
        out.push_back({"scan-weights-causal", upper, 1e-15});
    }
    {  // the block output minus its input is exactly the normalized SSM path
        Rng rng = root.split("resid");
        MambaConfig cfg;
        cfg.d_h = 6;
        cfg.expand = 2;
        cfg.d_state = 4;
        MambaParams p = make_mamba_params("dual", cfg, root.split("residp"));
        const Tensor x = randn({9, 6}, rng);
        const Tensor y = block_output(p, x);
        const Tensor branch = reference_branch(p, x);
        double dev = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i)
            dev = std::max(dev, std::fabs((y[i] - x[i]) - branch[i]));
        out.push_back({"residual-decomposition", dev, 1e-10});

        // scaling the output norm's affine pair scales the branch linearly
        const double alpha = 2.5;
        for (std::size_t i = 0; i < p.norm_out.gamma.value.size(); ++i) {
            p.norm_out.gamma.value.mut()[i] *= alpha;
            p.norm_out.beta.value.mut()[i] *= alpha;
        }
        const Tensor y2 = block_output(p, x);
        double adev = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i)
            adev = std::max(adev,
                            std::fabs((y2[i] - x[i]) - alpha * (y[i] - x[i])));
        out.push_back({"residual-alpha-linearity", adev, 1e-10});
    }
    {  // zero out-projection: the branch collapses to the norm's beta
        Rng rng = root.split("beta");
        MambaConfig cfg;
        cfg.d_h = 5;
        cfg.expand = 2;
        cfg.d_state = 3;
        MambaParams p = make_mamba_params("dualz", cfg, root.split("betap"));
        for (std::size_t i = 0; i < p.out_proj.W.value.size(); ++i)
            p.out_proj.W.value.mut()[i] = 0.0;
        for (std::size_t i = 0; i < p.out_proj.b.value.size(); ++i)
            p.out_proj.b.value.mut()[i] = 0.0;
        for (std::size_t i = 0; i < p.norm_out.beta.value.size(); ++i)
            p.norm_out.beta.value.mut()[i] = 0.25;
        const Tensor x = randn({7, 5}, rng);
        const Tensor y = block_output(p, x);
        double dev = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i)
            dev = std::max(dev, std::fabs((y[i] - x[i]) - 0.25));
        out.push_back({"residual-beta-constant", dev, 1e-12});
    }
    return out;
}

std::string format_duality_table(const std::vector<DualityCheck>& checks) {
    std::ostringstream os;
    char buf[128];
    for (const DualityCheck& c : checks) {
        std::snprintf(buf, sizeof buf, "%-28s deviation=%-12.3e tolerance=%-9.0e %s\n",
                      c.name.c_str(), c.deviation, c.tolerance,
                      c.pass() ? "PASS" : "FAIL");
        os << buf;
    }
    return os.str();
}

}  // namespace stms
