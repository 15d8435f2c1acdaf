#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "stms/gradcheck.hpp"
#include "stms/mamba.hpp"
#include "test_util.hpp"

using namespace stms;
using testutil::rand_tensor;

namespace {

MambaConfig toy_cfg(std::size_t d_h = 4, std::size_t d_state = 3) {
    MambaConfig cfg;
    cfg.d_h = d_h;
    cfg.expand = 2;
    cfg.d_state = d_state;
    return cfg;
}

// Unrolled convolution form of the recurrence, used as an independent oracle:
// Y_k = sum_{m<=k} C_k (*) (prod_{r=m+1..k} A_bar_r) (*) B_bar_m U_m + D U_k.
Tensor unrolled_scan(const std::vector<SsmStep>& steps, const Tensor& U,
                     const Tensor& D) {
    const std::size_t di = U.dim(0), L = U.dim(1);
    const std::size_t ds = steps[0].A_bar.dim(1);
    Tensor Y = Tensor::zeros({di, L});
    for (std::size_t k = 0; k < L; ++k) {
        for (std::size_t i = 0; i < di; ++i) {
            double acc = 0.0;
            for (std::size_t m = 0; m <= k; ++m) {
                for (std::size_t j = 0; j < ds; ++j) {
                    double w = steps[m].B_bar.at({i, j}) * U.at({i, m});
                    for (std::size_t r = m + 1; r <= k; ++r)
                        w *= steps[r].A_bar.at({i, j});
                    acc += steps[k].C_k.at({j}) * w;
                }
            }
            Y.mut()[i * L + k] = acc + D.at({i}) * U.at({i, k});
        }
    }
    return Y;
}

std::vector<SsmStep> random_steps(std::size_t L, std::size_t di,
                                  std::size_t ds, Rng& rng) {
    Tensor A = Tensor::zeros({di, ds});
    for (std::size_t i = 0; i < A.size(); ++i)
        A.mut()[i] = -rng.uniform(0.2, 3.0);
    std::vector<SsmStep> steps;
    for (std::size_t k = 0; k < L; ++k) {
        Tensor B = rand_tensor({ds}, rng);
        Tensor dt = Tensor::zeros({di});
        for (std::size_t i = 0; i < di; ++i) dt.mut()[i] = rng.uniform(0.05, 1.5);
        SsmStep s = discretize(A, B, dt);
        s.C_k = rand_tensor({ds}, rng);
        steps.push_back(std::move(s));
    }
    return steps;
}

}  // namespace

TEST_CASE("hippo initialization") {
    Tensor A = hippo_init(3, 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(A.at({i, 0}) == -1.0);
        CHECK(A.at({i, 1}) == -2.0);
        CHECK(A.at({i, 2}) == -3.0);
    }
    Tensor alog = hippo_a_log(5, 4);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double a = -std::exp(alog.at({i, j}));
            CHECK(a == doctest::Approx(-(static_cast<double>(j) + 1.0))
                           .epsilon(1e-12));
            CHECK(a < 0.0);
        }
    CHECK_THROWS_AS(hippo_init(0, 3), std::invalid_argument);
}

TEST_CASE("st_mix layout and round trip") {
    Rng rng(1);
    Tensor z = rand_tensor({2, 3, 5}, rng);
    Tensor m = st_mix(z);
    CHECK(m.shape() == Shape{6, 5});
    // row 4 = frame 1, node 1
    for (std::size_t j = 0; j < 5; ++j) CHECK(m.at({4, j}) == z.at({1, 1, j}));
    Tensor back = st_unmix(m, 2, 3);
    CHECK(back.data() == z.data());  // shared buffer: bit-exact by construction

    CHECK(st_mix(Tensor::zeros({12, 170, 80})).dim(0) == 2040);
    CHECK_THROWS_AS(st_unmix(m, 4, 3), std::invalid_argument);
}

TEST_CASE("ssm_project: orientations, positivity, selectivity") {
    MambaConfig cfg = toy_cfg(4, 3);
    Rng root(2);
    MambaParams p = make_mamba_params("m", cfg, root);
    Rng rng(3);
    const std::size_t L = 6;
    Tensor h = rand_tensor({L, cfg.d_h}, rng, -5.0, 5.0);
    SsmProjection pr = ssm_project(p, h);
    CHECK(pr.U.shape() == Shape{cfg.d_inner(), L});
    CHECK(pr.B.shape() == Shape{cfg.d_state, L});
    CHECK(pr.C.shape() == Shape{cfg.d_state, L});
    CHECK(pr.delta.shape() == Shape{cfg.d_inner(), L});
    for (std::size_t i = 0; i < pr.delta.size(); ++i) CHECK(pr.delta[i] > 0.0);

    // zero projection + zero bias -> delta = softplus(0) = ln 2
    p.proj_dt.W.value = Tensor::zeros(p.proj_dt.W.value.shape());
    p.dt_bias.value = Tensor::zeros(p.dt_bias.value.shape());
    SsmProjection pr0 = ssm_project(p, h);
    for (std::size_t i = 0; i < pr0.delta.size(); ++i)
        CHECK(pr0.delta[i] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // changing h row k moves only column k of B and C
    Tensor h2 = h.clone();
    for (std::size_t j = 0; j < cfg.d_h; ++j) h2.mut()[2 * cfg.d_h + j] += 1.0;
    SsmProjection pr2 = ssm_project(p, h2);
    for (std::size_t j = 0; j < cfg.d_state; ++j)
        for (std::size_t k = 0; k < L; ++k) {
            if (k == 2) continue;
            CHECK(pr2.B.at({j, k}) == pr.B.at({j, k}));
            CHECK(pr2.C.at({j, k}) == pr.C.at({j, k}));
        }

    CHECK_THROWS_AS(ssm_project(p, Tensor::zeros({3, cfg.d_h + 1})),
                    std::invalid_argument);
}

TEST_CASE("discretize: closed-form oracles and the small-step guard") {
    Tensor A = Tensor::from_vector({1, 1}, {-1.0});
    Tensor B = Tensor::from_vector({1}, {2.0});

    SsmStep s = discretize(A, B, Tensor::from_vector({1}, {std::log(2.0)}));
    CHECK(std::fabs(s.A_bar[0] - 0.5) < 1e-12);
    CHECK(std::fabs(s.B_bar[0] - 1.0) < 1e-12);

    // delta -> 0: A_bar -> 1 and B_bar ~ delta*b via the guard
    SsmStep tiny = discretize(A, B, Tensor::from_vector({1}, {1e-12}));
    CHECK(tiny.A_bar[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(tiny.B_bar[0] == 1e-12 * 2.0);  // exact: guard path multiplies

    // saturation: huge step forgets the state, gain -> -b/a
    SsmStep sat = discretize(A, B, Tensor::from_vector({1}, {100.0}));
    CHECK(std::fabs(sat.A_bar[0]) < 1e-40);
    CHECK(sat.B_bar[0] == doctest::Approx(2.0).epsilon(1e-12));

    CHECK_THROWS_AS(discretize(A, B, Tensor::from_vector({1}, {0.0})),
                    std::invalid_argument);
    CHECK_THROWS_AS(discretize(A, B, Tensor::from_vector({1}, {-0.1})),
                    std::invalid_argument);

    // near-zero |delta*a|: B_bar/delta must approach b regardless of which
    // branch computes it
    const double dt = 1e-7;
    for (double a : {-1.0, -0.05, -0.01}) {
        Tensor Aa = Tensor::from_vector({1, 1}, {a});
        SsmStep g = discretize(Aa, B, Tensor::from_vector({1}, {dt}));
        CHECK(std::fabs(g.B_bar[0] / dt - 2.0) < 1e-6);
    }
}

TEST_CASE("selective_scan: hand values and structure") {
    // single step: H1 = 3, Y1 = 2*3 + 0.5*3 = 7.5
    std::vector<SsmStep> steps(1);
    steps[0].A_bar = Tensor::from_vector({1, 1}, {0.3});
    steps[0].B_bar = Tensor::from_vector({1, 1}, {1.0});
    steps[0].C_k = Tensor::from_vector({1}, {2.0});
    steps[0].delta_k = Tensor::from_vector({1}, {1.0});
    Tensor U = Tensor::from_vector({1, 1}, {3.0});
    Tensor D = Tensor::from_vector({1}, {0.5});
    Tensor Y = selective_scan(steps, U, D);
    CHECK(Y[0] == doctest::Approx(7.5).epsilon(1e-15));

    // zero input -> zero output
    Rng rng(4);
    auto rsteps = random_steps(5, 2, 3, rng);
    Tensor U0 = Tensor::zeros({2, 5});
    Tensor D0 = rand_tensor({2}, rng);
    Tensor Y0 = selective_scan(rsteps, U0, D0);
    for (std::size_t i = 0; i < Y0.size(); ++i) CHECK(Y0[i] == 0.0);

    // A_bar == 0 -> memoryless
    auto msteps = rsteps;
    for (auto& s : msteps) s.A_bar = Tensor::zeros({2, 3});
    Tensor Ua = rand_tensor({2, 5}, rng);
    Tensor Ub = Ua.clone();
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < 3; ++k) Ub.mut()[i * 5 + k] += 7.0;
    Tensor Ya = selective_scan(msteps, Ua, D0);
    Tensor Yb = selective_scan(msteps, Ub, D0);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 3; k < 5; ++k)
            CHECK(Ya.at({i, k}) == Yb.at({i, k}));
}

TEST_CASE("selective_scan: linearity and causality") {
    Rng rng(5);
    const std::size_t di = 3, ds = 2, L = 8;
    auto steps = random_steps(L, di, ds, rng);
    Tensor D = rand_tensor({di}, rng);
    Tensor U1 = rand_tensor({di, L}, rng);
    Tensor U2 = rand_tensor({di, L}, rng);

    const double al = 1.7, be = -0.6;
    Tensor Umix = Tensor::zeros({di, L});
    for (std::size_t i = 0; i < Umix.size(); ++i)
        Umix.mut()[i] = al * U1[i] + be * U2[i];
    Tensor Ymix = selective_scan(steps, Umix, D);
    Tensor Y1 = selective_scan(steps, U1, D);
    Tensor Y2 = selective_scan(steps, U2, D);
    for (std::size_t i = 0; i < Ymix.size(); ++i)
        CHECK(std::fabs(Ymix[i] - (al * Y1[i] + be * Y2[i])) < 1e-10);

    // causality: a bump at column 4 leaves columns 0..3 untouched
    Tensor Up = U1.clone();
    for (std::size_t i = 0; i < di; ++i) Up.mut()[i * L + 4] += 3.0;
    Tensor Yp = selective_scan(steps, Up, D);
    for (std::size_t i = 0; i < di; ++i)
        for (std::size_t k = 0; k < 4; ++k)
            CHECK(Yp.at({i, k}) == Y1.at({i, k}));
}

TEST_CASE("selective_scan equals the unrolled oracle") {
    Rng rng(6);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t di = 1 + rng.index(4);
        const std::size_t ds = 1 + rng.index(3);
        const std::size_t L = 2 + rng.index(14);
        auto steps = random_steps(L, di, ds, rng);
        Tensor U = rand_tensor({di, L}, rng);
        Tensor D = rand_tensor({di}, rng);
        Tensor got = selective_scan(steps, U, D);
        Tensor want = unrolled_scan(steps, U, D);
        CHECK(max_abs_diff(got, want) < 1e-8);
    }
}

TEST_CASE("stability: 0 < A_bar < 1 for negative A and positive delta") {
    Rng rng(7);
    Tensor A = hippo_init(4, 3);
    for (int rep = 0; rep < 50; ++rep) {
        Tensor B = rand_tensor({3}, rng);
        Tensor dt = Tensor::zeros({4});
        for (std::size_t i = 0; i < 4; ++i) dt.mut()[i] = rng.uniform(1e-6, 10.0);
        SsmStep s = discretize(A, B, dt);
        for (std::size_t i = 0; i < s.A_bar.size(); ++i) {
            CHECK(s.A_bar[i] > 0.0);
            CHECK(s.A_bar[i] < 1.0);
        }
    }
}

TEST_CASE("scan matches the continuous solution for a constant input") {
    // h' = a h + b u with constant u and h(0)=0 has
    // h(t) = (e^{a t} - 1)/a * b * u; zero-order hold reproduces it exactly
    // at the step boundaries.
    const double a = -0.7, b = 1.3, c = 0.9, dd = 0.2, u = 2.0, dt = 0.05;
    const std::size_t K = 32;
    Tensor A = Tensor::from_vector({1, 1}, {a});
    Tensor B = Tensor::from_vector({1}, {b});
    Tensor D = Tensor::from_vector({1}, {dd});
    std::vector<SsmStep> steps;
    for (std::size_t k = 0; k < K; ++k) {
        SsmStep s = discretize(A, B, Tensor::from_vector({1}, {dt}));
        s.C_k = Tensor::from_vector({1}, {c});
        steps.push_back(std::move(s));
    }
    Tensor U = Tensor::full({1, K}, u);
    Tensor Y = selective_scan(steps, U, D);
    for (std::size_t k = 0; k < K; ++k) {
        const double t = dt * static_cast<double>(k + 1);
        const double h = (std::exp(a * t) - 1.0) / a * b * u;
        CHECK(std::fabs(Y.at({0, k}) - (c * h + dd * u)) < 1e-8);
    }
}

TEST_CASE("mamba_block: residual cold start, shape, gradient") {
    MambaConfig cfg = toy_cfg(4, 3);
    Rng root(8);
    MambaParams p = make_mamba_params("m", cfg, root);
    Rng rng(9);
    Tensor x = rand_tensor({6, 4}, rng);

    // zero out_proj: block output = input + norm_out beta
    MambaParams pz = make_mamba_params("m", cfg, root);
    pz.out_proj.W.value = Tensor::zeros(pz.out_proj.W.value.shape());
    pz.out_proj.b.value = Tensor::zeros(pz.out_proj.b.value.shape());
    pz.norm_out.beta.value = Tensor::full({4}, 0.25);
    Binder bind(false);
    Tensor y = mamba_block(bind, pz, Var::constant(x)).val();
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(y[i] == doctest::Approx(x[i] + 0.25).epsilon(1e-12));

    Tensor y2 = mamba_block(bind, p, Var::constant(x)).val();
    CHECK(y2.shape() == x.shape());

    Tensor w = rand_tensor({6, 4}, rng);
    auto f = [&](const Var& v) {
        Binder b2(false);
        return sum_all(mul(mamba_block(b2, p, v), Var::constant(w)));
    };
    CHECK(grad_check(f, x) < 1e-4);
}

TEST_CASE("mamba_block graph path agrees with the composed reference ops") {
    MambaConfig cfg = toy_cfg(4, 3);
    Rng root(10);
    MambaParams p = make_mamba_params("m", cfg, root);
    Rng rng(11);
    const std::size_t L = 7;
    Tensor x = rand_tensor({L, cfg.d_h}, rng);

    Binder bind(false);
    Tensor got = mamba_block(bind, p, Var::constant(x)).val();

    // reference: public per-step ops glued together by hand
    Tensor xn = layer_norm(x, p.norm_in.gamma.value, p.norm_in.beta.value, 1e-5);
    SsmProjection pr = ssm_project(p, xn);
    Tensor A = Tensor::zeros(p.A_log.value.shape());
    for (std::size_t i = 0; i < A.size(); ++i)
        A.mut()[i] = -std::exp(p.A_log.value[i]);
    std::vector<SsmStep> steps;
    for (std::size_t k = 0; k < L; ++k) {
        Tensor Bk = Tensor::zeros({cfg.d_state});
        Tensor dk = Tensor::zeros({cfg.d_inner()});
        for (std::size_t j = 0; j < cfg.d_state; ++j) Bk.mut()[j] = pr.B.at({j, k});
        for (std::size_t i = 0; i < cfg.d_inner(); ++i)
            dk.mut()[i] = pr.delta.at({i, k});
        SsmStep s = discretize(A, Bk, dk);
        s.C_k = Tensor::zeros({cfg.d_state});
        for (std::size_t j = 0; j < cfg.d_state; ++j)
            s.C_k.mut()[j] = pr.C.at({j, k});
        steps.push_back(std::move(s));
    }
    Tensor Yt = selective_scan(steps, pr.U, p.D.value);  // (d_inner, L)
    Tensor Y = transpose2d(Yt);                          // (L, d_inner)
    Tensor yo = matmul(Y, p.out_proj.W.value);
    for (std::size_t r = 0; r < L; ++r)
        for (std::size_t j = 0; j < cfg.d_h; ++j)
            yo.mut()[r * cfg.d_h + j] += p.out_proj.b.value[j];
    Tensor yn = layer_norm(yo, p.norm_out.gamma.value, p.norm_out.beta.value,
                           1e-5);
    Tensor want = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < want.size(); ++i)
        want.mut()[i] = yn[i] + x[i];

    CHECK(max_abs_diff(got, want) < 1e-10);
}
