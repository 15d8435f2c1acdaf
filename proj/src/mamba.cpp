#include "stms/mamba.hpp"

#include <cmath>

namespace stms {

namespace {

constexpr double kLnEps = kMambaLnEps;
constexpr double kZohGuard = 1e-8;

}  // namespace

Tensor hippo_init(std::size_t d_inner, std::size_t d_state) {
    check_arg(d_inner > 0 && d_state > 0, "hippo_init: dims must be positive");
    Tensor a = Tensor::zeros({d_inner, d_state});
    double* p = a.mut();
    for (std::size_t i = 0; i < d_inner; ++i)
        for (std::size_t j = 0; j < d_state; ++j)
            p[i * d_state + j] = -static_cast<double>(j + 1);
    return a;
}

Tensor hippo_a_log(std::size_t d_inner, std::size_t d_state) {
    check_arg(d_inner > 0 && d_state > 0, "hippo_a_log: dims must be positive");
    Tensor a = Tensor::zeros({d_inner, d_state});
    double* p = a.mut();
    for (std::size_t i = 0; i < d_inner; ++i)
        for (std::size_t j = 0; j < d_state; ++j)
            p[i * d_state + j] = std::log(static_cast<double>(j + 1));
    return a;
}

MambaParams make_mamba_params(const std::string& name, const MambaConfig& cfg,
                              const Rng& root) {
    check_arg(cfg.d_h > 0 && cfg.expand > 0 && cfg.d_state > 0,
              "mamba: dims must be positive");
    const std::size_t di = cfg.d_inner();
    MambaParams p;
    p.in_proj = make_linear(name + ".in_proj", cfg.d_h, di, true, root);
    p.A_log = make_param(name + ".A_log", hippo_a_log(di, cfg.d_state));
    p.proj_B = make_linear(name + ".proj_B", di, cfg.d_state, false, root);
    p.proj_C = make_linear(name + ".proj_C", di, cfg.d_state, false, root);
    p.proj_dt = make_linear(name + ".proj_dt", di, di, false, root);
    p.dt_bias = make_param(name + ".dt_bias", Tensor::zeros({di}));
    p.D = make_param(name + ".D", Tensor::full({di}, 1.0));
    p.out_proj = make_linear(name + ".out_proj", di, cfg.d_h, true, root);
    p.norm_in = make_layer_norm(name + ".norm_in", cfg.d_h);
    p.norm_out = make_layer_norm(name + ".norm_out", cfg.d_h);
    return p;
}

void collect_params(MambaParams& p, std::vector<Parameter*>& out) {
    collect_params(p.in_proj, out);
    out.push_back(&p.A_log);
    collect_params(p.proj_B, out);
    collect_params(p.proj_C, out);
    collect_params(p.proj_dt, out);
    out.push_back(&p.dt_bias);
    out.push_back(&p.D);
    collect_params(p.out_proj, out);
    out.push_back(&p.norm_in.gamma);
    out.push_back(&p.norm_in.beta);
    out.push_back(&p.norm_out.gamma);
    out.push_back(&p.norm_out.beta);
}

Tensor st_mix(const Tensor& z) {
    check_arg(z.rank() == 3, "st_mix: input must be (T,N,d_h)");
    return z.reshaped({z.dim(0) * z.dim(1), z.dim(2)});
}

Tensor st_unmix(const Tensor& m, std::size_t T, std::size_t N) {
    check_arg(m.rank() == 2, "st_unmix: input must be rank-2");
    check_arg(m.dim(0) == T * N, "st_unmix: row count is not T*N");
    return m.reshaped({T, N, m.dim(1)});
}

Var st_mix(const Var& z) {
    const Tensor& zv = z.val();
    check_arg(zv.rank() == 3, "st_mix: input must be (T,N,d_h)");
    return reshape(z, {zv.dim(0) * zv.dim(1), zv.dim(2)});
}

Var st_unmix(const Var& m, std::size_t T, std::size_t N) {
    const Tensor& mv = m.val();
    check_arg(mv.rank() == 2, "st_unmix: input must be rank-2");
    check_arg(mv.dim(0) == T * N, "st_unmix: row count is not T*N");
    return reshape(m, {T, N, mv.dim(1)});
}

SsmProjection ssm_project(MambaParams& p, const Tensor& h_in) {
    check_arg(h_in.rank() == 2, "ssm_project: input must be (L, d_h)");
    check_arg(h_in.dim(1) == p.in_proj.d_in(),
              "ssm_project: width does not match in_proj");
    Binder eval(false);
    Var h = Var::constant(h_in);
    Var U = apply_linear(eval, p.in_proj, h);                          // (L, di)
    Var B = apply_linear(eval, p.proj_B, U);                           // (L, ds)
    Var C = apply_linear(eval, p.proj_C, U);                           // (L, ds)
    Var dt = softplus(add(apply_linear(eval, p.proj_dt, U),
                          Var::constant(p.dt_bias.value)));            // (L, di)
    SsmProjection out;
    out.U = transpose2d(U.val());
    out.B = transpose2d(B.val());
    out.C = transpose2d(C.val());
    out.delta = transpose2d(dt.val());
    return out;
}

SsmStep discretize(const Tensor& A, const Tensor& B_k, const Tensor& delta_k) {
    check_arg(A.rank() == 2, "discretize: A must be (d_inner, d_state)");
    const std::size_t di = A.dim(0), ds = A.dim(1);
    check_arg(B_k.size() == ds, "discretize: B_k must have d_state entries");
    check_arg(delta_k.size() == di,
              "discretize: delta_k must have d_inner entries");
    for (std::size_t i = 0; i < di; ++i)
        check_arg(delta_k[i] > 0.0, "discretize: delta must be positive");

    SsmStep s;
    s.A_bar = Tensor::zeros({di, ds});
    s.B_bar = Tensor::zeros({di, ds});
    s.C_k = Tensor::zeros({ds});
    s.delta_k = delta_k.clone();
    double* ab = s.A_bar.mut();
    double* bb = s.B_bar.mut();
    const double* a = A.data();
    for (std::size_t i = 0; i < di; ++i) {
        const double dt = delta_k[i];
        for (std::size_t j = 0; j < ds; ++j) {
            const double x = dt * a[i * ds + j];
            ab[i * ds + j] = std::exp(x);
            if (std::fabs(x) < kZohGuard) {
                bb[i * ds + j] = dt * B_k[j];
            } else {
                bb[i * ds + j] = std::expm1(x) / a[i * ds + j] * B_k[j];
            }
        }
    }
    return s;
}

Tensor selective_scan(const std::vector<SsmStep>& steps, const Tensor& U,
                      const Tensor& D) {
    check_arg(U.rank() == 2, "selective_scan: U must be (d_inner, L)");
    const std::size_t di = U.dim(0), L = U.dim(1);
    check_arg(steps.size() == L,
              "selective_scan: need exactly one step per column of U");
    check_arg(D.size() == di, "selective_scan: D must have d_inner entries");
    check_arg(L > 0, "selective_scan: empty sequence");
    const std::size_t ds = steps[0].A_bar.dim(1);

    Tensor Y = Tensor::zeros({di, L});
    std::vector<double> H(di * ds, 0.0);
    double* y = Y.mut();
    for (std::size_t k = 0; k < L; ++k) {
        const SsmStep& s = steps[k];
        check_arg(s.A_bar.dim(0) == di && s.A_bar.dim(1) == ds &&
                      s.B_bar.same_shape(s.A_bar) && s.C_k.size() == ds,
                  "selective_scan: step shapes disagree");
        const double* ab = s.A_bar.data();
        const double* bb = s.B_bar.data();
        const double* c = s.C_k.data();
        for (std::size_t i = 0; i < di; ++i) {
            const double u = U[i * L + k];
            double acc = 0.0;
            for (std::size_t j = 0; j < ds; ++j) {
                double h = ab[i * ds + j] * H[i * ds + j] + bb[i * ds + j] * u;
                H[i * ds + j] = h;
                acc += c[j] * h;
            }
            y[i * L + k] = acc + D[i] * u;
        }
    }
    return Y;
}

Var mamba_block(Binder& bind, MambaParams& p, const Var& x_bar) {
    const Tensor& xv = x_bar.val();
    check_arg(xv.rank() == 2, "mamba_block: input must be (L, d_h)");
    const std::size_t L = xv.dim(0);
    const std::size_t di = p.in_proj.d_out();
    const std::size_t ds = p.A_log.value.dim(1);

    Var xn = layer_norm(x_bar, bind(p.norm_in.gamma), bind(p.norm_in.beta),
                        kLnEps);
    Var U = apply_linear(bind, p.in_proj, xn);                  // (L, di)
    Var B = apply_linear(bind, p.proj_B, U);                    // (L, ds)
    Var C = apply_linear(bind, p.proj_C, U);                    // (L, ds)
    Var dt = softplus(add(apply_linear(bind, p.proj_dt, U),
                          bind(p.dt_bias)));                    // (L, di)

    // Batched zero-order hold. expm1x carries the small-argument guard, so
    // B_bar = dt * expm1x(dt*A) * B matches the per-step rule exactly.
    Var A = neg(exp(bind(p.A_log)));                            // (di, ds)
    Var dt3 = reshape(dt, {L, di, 1});
    Var dA = mul(dt3, reshape(A, {1, di, ds}));                 // (L, di, ds)
    Var A_bar = exp(dA);
    Var B_bar = mul(mul(dt3, expm1x(dA)), reshape(B, {L, 1, ds}));

    Var Y = selective_scan_graph(A_bar, B_bar, C, U, bind(p.D));  // (L, di)
    Var y = apply_linear(bind, p.out_proj, Y);                    // (L, d_h)
    Var yn = layer_norm(y, bind(p.norm_out.gamma), bind(p.norm_out.beta),
                        kLnEps);
    return add(yn, x_bar);
}

}  // namespace stms
