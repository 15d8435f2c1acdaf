#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stms/duality.hpp"
#include "stms/rng.hpp"

using namespace stms;

namespace {

Tensor randu(const Rng& r, const Shape& shape, double lo, double hi) {
    Tensor t = Tensor::zeros(shape);
    Rng s = r;
    for (std::size_t i = 0; i < t.size(); ++i)
        t.mut()[i] = lo + (hi - lo) * s.uniform();
    return t;
}

}  // namespace

TEST_CASE("hat matrix: intercept-only oracle") {
    HatSystem sys{Tensor::from_vector({2, 1}, {1.0, 1.0}),
                  Tensor::from_vector({2}, {1.0, 3.0})};
    const HatResult r = hat_predict(sys);
    CHECK(std::fabs(r.y_hat.at({0}) - 2.0) < 1e-12);
    CHECK(std::fabs(r.y_hat.at({1}) - 2.0) < 1e-12);
    // averaging weights: every coefficient is 1/n
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(std::fabs(r.weights.at({i, j}) - 0.5) < 1e-12);
}

TEST_CASE("hat matrix: projector identities on random systems") {
    Rng root(404);
    for (std::size_t inst = 0; inst < 10; ++inst) {
        Rng r = root.split(inst);
        const std::size_t n = 6 + inst % 5;
        const std::size_t d = 2 + inst % 3;
        HatSystem sys{randu(r.split("x"), {n, d}, -2.0, 2.0),
                      randu(r.split("y"), {n}, -1.0, 1.0)};
        const HatResult hr = hat_predict(sys);
        const Tensor& H = hr.weights;

        double max_idem = 0.0, max_sym = 0.0, trace = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            trace += H.at({i, i});
            for (std::size_t j = 0; j < n; ++j) {
                double hh = 0.0;
                for (std::size_t k = 0; k < n; ++k)
                    hh += H.at({i, k}) * H.at({k, j});
                max_idem = std::max(max_idem, std::fabs(hh - H.at({i, j})));
                max_sym =
                    std::max(max_sym, std::fabs(H.at({i, j}) - H.at({j, i})));
            }
        }
        CHECK(max_idem < 1e-10);   // H H = H
        CHECK(max_sym < 1e-10);    // H = Ht
        CHECK(std::fabs(trace - double(d)) < 1e-8);  // tr H = rank = d

        // rows act as weights over the samples: H y reproduces y_hat
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                dot += H.at({i, j}) * sys.y.at({j});
            CHECK(std::fabs(dot - hr.y_hat.at({i})) < 1e-12);
        }
    }
}

TEST_CASE("hat matrix: rank-deficient design is rejected") {
    // second column duplicates the first -> XtX singular
    HatSystem sys{
        Tensor::from_vector({3, 2}, {1.0, 1.0, 2.0, 2.0, 3.0, 3.0}),
        Tensor::from_vector({3}, {1.0, 2.0, 3.0})};
    CHECK_THROWS_AS(hat_predict(sys), std::domain_error);
    CHECK_THROWS_AS(hat_predict_new(sys, Tensor::from_vector({2}, {1.0, 1.0})),
                    std::domain_error);
}

TEST_CASE("hat matrix: out-of-sample query") {
    // exactly linear data: y = 2x + 1, design [1, x]
    HatSystem sys{Tensor::from_vector({3, 2}, {1.0, 0.0, 1.0, 1.0, 1.0, 2.0}),
                  Tensor::from_vector({3}, {1.0, 3.0, 5.0})};
    const Tensor q = Tensor::from_vector({2}, {1.0, 4.0});
    const HatRowResult r = hat_predict_new(sys, q);
    CHECK(std::fabs(r.y_hat - 9.0) < 1e-10);
    // the weights are the linear-smoother coefficients over the samples
    double dot = 0.0;
    for (std::size_t j = 0; j < 3; ++j)
        dot += r.weights.at({j}) * sys.y.at({j});
    CHECK(std::fabs(dot - r.y_hat) < 1e-12);

    CHECK_THROWS_AS(hat_predict_new(sys, Tensor::from_vector({3}, {1, 2, 3})),
                    std::invalid_argument);
}

TEST_CASE("two independent solvers agree") {
    CHECK(two_solver_check(2024, 100) < 1e-8);
}

TEST_CASE("jacobi eigenvalues of a 2x2") {
    const Tensor S = Tensor::from_vector({2, 2}, {2.0, 1.0, 1.0, 2.0});
    std::vector<double> ev = symmetric_eigenvalues(S);
    std::sort(ev.begin(), ev.end());
    REQUIRE(ev.size() == 2);
    CHECK(std::fabs(ev[0] - 1.0) < 1e-12);
    CHECK(std::fabs(ev[1] - 3.0) < 1e-12);
}

namespace {

// random discretized steps with C filled in (the discretizer leaves C zero)
std::vector<SsmStep> sample_steps(const Rng& r, std::size_t d_inner,
                                  std::size_t d_state, std::size_t T) {
    const Tensor A = randu(r.split("a"), {d_inner, d_state}, -2.0, -0.2);
    std::vector<SsmStep> steps;
    for (std::size_t k = 0; k < T; ++k) {
        Rng rk = r.split(k);
        const Tensor Bk = randu(rk.split("b"), {d_state}, -1.0, 1.0);
        const Tensor dk = randu(rk.split("dt"), {d_inner}, 0.01, 0.5);
        SsmStep s = discretize(A, Bk, dk);
        s.C_k = randu(rk.split("c"), {d_state}, -1.0, 1.0);
        steps.push_back(std::move(s));
    }
    return steps;
}

}  // namespace

TEST_CASE("materialized scan weights: one step closed form") {
    Rng r(77);
    const std::size_t di = 3, ds = 4;
    std::vector<SsmStep> steps = sample_steps(r, di, ds, 1);
    const Tensor D = randu(r.split("d"), {di}, -0.5, 0.5);
    const MaterializedAttention mat = materialize_scan_attention(steps, D);
    REQUIRE(mat.W.shape() == Shape{di, 1, 1});
    for (std::size_t i = 0; i < di; ++i) {
        double want = 0.0;
        for (std::size_t s = 0; s < ds; ++s)
            want += steps[0].C_k.at({s}) * steps[0].B_bar.at({i, s});
        CHECK(std::fabs(mat.W.at({i, 0, 0}) - want) < 1e-12);
        CHECK(mat.D.at({i}) == D.at({i}));
    }
}

TEST_CASE("materialized scan weights: unit decay gives cumulative sums") {
    // A_bar = 1, B_bar = 1, C = 1, D = 0 turns the scan into a running sum,
    // so every in-window weight is exactly 1
    const std::size_t di = 2, ds = 1, T = 5;
    std::vector<SsmStep> steps;
    for (std::size_t k = 0; k < T; ++k) {
        SsmStep s;
        s.A_bar = Tensor::full({di, ds}, 1.0);
        s.B_bar = Tensor::full({di, ds}, 1.0);
        s.C_k = Tensor::full({ds}, 1.0);
        s.delta_k = Tensor::full({di}, 1.0);
        steps.push_back(std::move(s));
    }
    const Tensor D = Tensor::zeros({di});
    const MaterializedAttention mat = materialize_scan_attention(steps, D);
    for (std::size_t i = 0; i < di; ++i)
        for (std::size_t k = 0; k < T; ++k)
            for (std::size_t m = 0; m < T; ++m) {
                const double want = m <= k ? 1.0 : 0.0;
                CHECK(std::fabs(mat.W.at({i, k, m}) - want) < 1e-12);
            }

    Rng r(11);
    const Tensor U = randu(r, {di, T}, -2.0, 2.0);
    const Tensor Y = selective_scan(steps, U, D);
    for (std::size_t i = 0; i < di; ++i) {
        double run = 0.0;
        for (std::size_t k = 0; k < T; ++k) {
            run += U.at({i, k});
            CHECK(std::fabs(Y.at({i, k}) - run) < 1e-10);
        }
    }
}

TEST_CASE("materialized scan weights: equality and causality at random") {
    Rng root(505);
    for (std::size_t inst = 0; inst < 8; ++inst) {
        Rng r = root.split(inst);
        const std::size_t di = 2 + inst % 3;
        const std::size_t ds = 1 + inst % 4;
        const std::size_t T = 4 + inst * 2;
        std::vector<SsmStep> steps = sample_steps(r, di, ds, T);
        const Tensor D = randu(r.split("skip"), {di}, -0.5, 0.5);
        const Tensor U = randu(r.split("u"), {di, T}, -2.0, 2.0);

        CHECK(scan_attention_deviation(steps, D, U) < 1e-12);

        const MaterializedAttention mat = materialize_scan_attention(steps, D);
        for (std::size_t i = 0; i < di; ++i)
            for (std::size_t k = 0; k < T; ++k)
                for (std::size_t m = k + 1; m < T; ++m)
                    CHECK(mat.W.at({i, k, m}) == 0.0);
    }
}

TEST_CASE("verification suite passes and formats") {
    const std::vector<DualityCheck> checks = run_duality_suite(99);
    REQUIRE(checks.size() >= 12);
    for (const DualityCheck& c : checks) {
        INFO(c.name, " deviation=", c.deviation, " tolerance=", c.tolerance);
        CHECK(c.pass());
    }
    // the named checks the table promises are all present
    auto has = [&](const char* n) {
        return std::any_of(checks.begin(), checks.end(),
                           [&](const DualityCheck& c) { return c.name == n; });
    };
    CHECK(has("hat-idempotent"));
    CHECK(has("regression-two-solver"));
    CHECK(has("scan-as-attention"));
    CHECK(has("residual-decomposition"));

    const std::string table = format_duality_table(checks);
    CHECK(table.find("PASS") != std::string::npos);
    CHECK(table.find("FAIL") == std::string::npos);
    CHECK(table.find("scan-as-attention") != std::string::npos);

    DualityCheck bad{"x", 1.0, 0.5};
    CHECK(!bad.pass());
    CHECK(format_duality_table({bad}).find("FAIL") != std::string::npos);
}
