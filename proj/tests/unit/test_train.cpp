#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "stms/metrics.hpp"
#include "stms/optim.hpp"
#include "stms/train.hpp"

using namespace stms;

namespace {

std::string tmp_path(const std::string& stem) {
    return (std::filesystem::temp_directory_path() / stem).string();
}

std::string slurp(const std::string& p) {
    std::ifstream is(p);
    return std::string((std::istreambuf_iterator<char>(is)), {});
}

// small data + model for fast loops
struct Toy {
    TrafficDataset ds;
    WindowSplits splits;
    Scaler scaler;
    ModelConfig cfg;

    explicit Toy(std::size_t days = 1, std::size_t M = 3, std::size_t Z = 2) {
        ds = generate_synthetic(3, days, 5);
        splits = make_windows(ds, M, Z, {6, 2, 2});
        // keep loops quick: thin the window sets
        auto thin = [](std::vector<TrafficWindow>& v, std::size_t keep) {
            if (v.size() > keep) v.resize(keep);
        };
        thin(splits.train, 12);
        thin(splits.val, 4);
        thin(splits.test, 4);
        scaler = standardize(splits, ds.sensor_ids);
        cfg.embed.d = 1;
        cfg.embed.d_e = 2;
        cfg.embed.d_s = 2;  // d_h = 8
        cfg.embed.M = M;
        cfg.embed.N = 3;
        cfg.embed.steps_per_day = ds.steps_per_day;
        cfg.heads = 2;
        cfg.n_attention_layers = 1;
        cfg.n_mamba_layers = 1;
        cfg.d_state = 3;
        cfg.Z = Z;
    }
};

}  // namespace

TEST_CASE("adam first-step and zero-grad behavior") {
    Parameter p{"w", Tensor::from_vector({2}, {1.0, -2.0}),
                Tensor::zeros({2})};
    std::vector<Parameter*> params{&p};
    AdamState st = make_adam_state(params);

    // zero gradient leaves the parameter untouched
    adam_step(params, st, 0.01);
    CHECK(p.value[0] == 1.0);
    CHECK(p.value[1] == -2.0);
    CHECK(st.t == 1);

    // |g| >> eps: the bias-corrected first step is ~ -lr * sign(g)
    p.grad = Tensor::from_vector({2}, {0.5, -0.25});
    AdamState fresh = make_adam_state(params);
    adam_step(params, fresh, 0.01);
    CHECK(std::fabs((p.value[0] - 1.0) + 0.01) < 1e-6);
    CHECK(std::fabs((p.value[1] + 2.0) - 0.01) < 1e-6);

    // deterministic: same start, same grads -> identical trajectory
    Parameter a{"a", Tensor::from_vector({1}, {0.3}), Tensor::from_vector({1}, {0.7})};
    Parameter b{"b", Tensor::from_vector({1}, {0.3}), Tensor::from_vector({1}, {0.7})};
    std::vector<Parameter*> pa{&a}, pb{&b};
    AdamState sa = make_adam_state(pa), sb = make_adam_state(pb);
    for (int i = 0; i < 5; ++i) {
        adam_step(pa, sa, 0.003);
        adam_step(pb, sb, 0.003);
    }
    CHECK(a.value[0] == b.value[0]);

    AdamState wrong;
    CHECK_THROWS_AS(adam_step(params, wrong, 0.01), std::invalid_argument);
}

TEST_CASE("lr schedule halves at milestones") {
    TrainConfig cfg;
    cfg.lr0 = 0.001;
    cfg.lr_milestones = {25, 50};
    CHECK(lr_at_epoch(cfg, 1) == 0.001);
    CHECK(lr_at_epoch(cfg, 24) == 0.001);
    CHECK(lr_at_epoch(cfg, 25) == doctest::Approx(0.0005).epsilon(1e-15));
    CHECK(lr_at_epoch(cfg, 49) == doctest::Approx(0.0005).epsilon(1e-15));
    CHECK(lr_at_epoch(cfg, 50) == doctest::Approx(0.00025).epsilon(1e-15));
    CHECK(lr_at_epoch(cfg, 300) == doctest::Approx(0.00025).epsilon(1e-15));
}

TEST_CASE("evaluate: perfect predictor, consistency, shapes") {
    Toy toy;
    Model m = make_model(toy.cfg, 17);

    // a perfect predictor scores zero: rewrite targets as the predictions
    std::vector<TrafficWindow> perfect = toy.splits.test;
    for (TrafficWindow& w : perfect)
        w.y = toy.scaler.inverse_transform(
            model_predict(m, w.x, w.weekday_idx, w.tod_idx));
    const EvalReport zero = evaluate(m, perfect, toy.scaler, 1e-9);
    CHECK(zero.overall.mae == 0.0);
    CHECK(zero.overall.rmse == 0.0);
    CHECK(zero.overall.mape == 0.0);

    // real targets: per-step vector has length Z and aggregates match
    const EvalReport rep = evaluate(m, toy.splits.test, toy.scaler, 1e-3);
    REQUIRE(rep.per_step.size() == toy.cfg.Z);
    double mean_mae = 0.0, mean_sq = 0.0;
    for (const StepMetrics& s : rep.per_step) {
        mean_mae += s.mae;
        mean_sq += s.rmse * s.rmse;
        CHECK(std::isfinite(s.mape));
    }
    mean_mae /= double(rep.per_step.size());
    mean_sq /= double(rep.per_step.size());
    CHECK(rep.overall.mae == doctest::Approx(mean_mae).epsilon(1e-12));
    CHECK(rep.overall.rmse ==
          doctest::Approx(std::sqrt(mean_sq)).epsilon(1e-12));

    CHECK_THROWS_AS(evaluate(m, {}, toy.scaler, 1e-3), std::invalid_argument);
}

TEST_CASE("train: early stopping with patience 1 stops after epoch 2") {
    Toy toy;
    Model m = make_model(toy.cfg, 3);
    TrainConfig tc;
    tc.lr0 = 30.0;  // absurd rate: validation loss strictly worsens
    tc.batch_size = 8;
    tc.patience = 1;
    tc.max_epochs = 10;
    tc.seed = 1;
    const RunReport rep = train_model(m, toy.splits, toy.scaler, tc);
    REQUIRE(rep.epochs.size() == 2);
    CHECK(rep.epochs[0].is_best);
    CHECK(!rep.epochs[1].is_best);
    CHECK(rep.best_epoch == 1);
    CHECK(rep.epochs[1].val_mae > rep.epochs[0].val_mae);

    // the best-epoch parameters were restored: re-evaluating the validation
    // split reproduces the recorded best exactly
    double val = 0.0;
    for (const TrafficWindow& w : toy.splits.val)
        val += mae(toy.scaler.inverse_transform(
                       model_predict(m, w.x, w.weekday_idx, w.tod_idx)),
                   w.y);
    val /= double(toy.splits.val.size());
    CHECK(val == rep.best_val_mae);
}

TEST_CASE("train: determinism, schedule bookkeeping, config errors") {
    Toy toy;
    TrainConfig tc;
    tc.lr0 = 0.01;
    tc.lr_milestones = {2};
    tc.batch_size = 8;
    tc.patience = 10;
    tc.max_epochs = 3;
    tc.seed = 9;

    Model m1 = make_model(toy.cfg, 21);
    const RunReport r1 = train_model(m1, toy.splits, toy.scaler, tc);
    Model m2 = make_model(toy.cfg, 21);
    const RunReport r2 = train_model(m2, toy.splits, toy.scaler, tc);
    REQUIRE(r1.epochs.size() == 3);
    REQUIRE(r2.epochs.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(r1.epochs[e].train_mae == r2.epochs[e].train_mae);
        CHECK(r1.epochs[e].val_mae == r2.epochs[e].val_mae);
    }
    CHECK(r1.epochs[0].lr == 0.01);
    CHECK(r1.epochs[1].lr == doctest::Approx(0.005).epsilon(1e-15));
    CHECK(r1.epochs[2].lr == doctest::Approx(0.005).epsilon(1e-15));
    CHECK(r1.test.per_step.size() == toy.cfg.Z);
    CHECK(r1.total_seconds > 0.0);

    // empty splits are config errors
    WindowSplits empty_train = toy.splits;
    empty_train.train.clear();
    Model m3 = make_model(toy.cfg, 21);
    CHECK_THROWS_AS(train_model(m3, empty_train, toy.scaler, tc),
                    std::invalid_argument);
    WindowSplits empty_val = toy.splits;
    empty_val.val.clear();
    CHECK_THROWS_AS(train_model(m3, empty_val, toy.scaler, tc),
                    std::invalid_argument);
    TrainConfig bad = tc;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train_model(m3, toy.splits, toy.scaler, bad),
                    std::invalid_argument);

    // stop_train_mae short-circuits immediately when already satisfied
    TrainConfig stop = tc;
    stop.stop_train_mae = 1e9;
    Model m4 = make_model(toy.cfg, 21);
    const RunReport rs = train_model(m4, toy.splits, toy.scaler, stop);
    CHECK(rs.epochs.size() == 1);
}

TEST_CASE("csv writers emit stable text") {
    RunReport rep;
    // dyadic values so the %.17g rendering is the short form
    EpochRow r1{1, 0.5, 1.5, 2.25, true, 0.0};
    EpochRow r2{2, 0.25, 0.75, 2.5, false, 0.0};
    rep.epochs = {r1, r2};
    const std::string ep = tmp_path("stms_epochs_test.csv");
    write_epoch_csv(ep, rep);
    CHECK(slurp(ep) ==
          "epoch,lr,train_mae,val_mae,is_best\n"
          "1,0.5,1.5,2.25,1\n"
          "2,0.25,0.75,2.5,0\n");

    EvalReport ev;
    ev.per_step = {{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}};
    ev.overall = {2.5, 3.5, 4.5};
    const std::string mp = tmp_path("stms_metrics_test.csv");
    write_metrics_csv(mp, ev);
    CHECK(slurp(mp) ==
          "step,mae,rmse,mape\n"
          "1,1,2,3\n"
          "2,4,5,6\n"
          "all,2.5,3.5,4.5\n");

    std::filesystem::remove(ep);
    std::filesystem::remove(mp);
}
