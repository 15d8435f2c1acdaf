#include "stms/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "stms/autodiff.hpp"
#include "stms/metrics.hpp"
#include "stms/optim.hpp"
#include "stms/rng.hpp"

namespace stms {

namespace {

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
    double lr = cfg.lr0;
    for (std::size_t m : cfg.lr_milestones)
        if (m <= epoch) lr *= 0.5;
    return lr;
}

EvalReport evaluate(Model& m, const std::vector<TrafficWindow>& windows,
                    const Scaler& scaler, double mape_floor) {
    if (windows.empty())
        throw std::invalid_argument("evaluate: empty window set");
    const std::size_t Z = m.cfg.Z;

    // per-step accumulators over every (window, node, channel) element
    std::vector<double> abs_sum(Z, 0.0), sq_sum(Z, 0.0), pct_sum(Z, 0.0);
    std::vector<std::size_t> n_elem(Z, 0), n_kept(Z, 0);
    for (const TrafficWindow& w : windows) {
        const Tensor pred =
            scaler.inverse_transform(model_predict(m, w.x, w.weekday_idx, w.tod_idx));
        const std::size_t inner = pred.dim(1) * pred.dim(2);
        for (std::size_t k = 0; k < Z; ++k)
            for (std::size_t j = 0; j < inner; ++j) {
                const double yh = pred[k * inner + j];
                const double yt = w.y[k * inner + j];
                const double e = yh - yt;
                abs_sum[k] += std::fabs(e);
                sq_sum[k] += e * e;
                ++n_elem[k];
                if (std::fabs(yt) > mape_floor) {
                    pct_sum[k] += std::fabs(e) / std::fabs(yt);
                    ++n_kept[k];
                }
            }
    }

    EvalReport rep;
    rep.per_step.resize(Z);
    double tot_abs = 0.0, tot_sq = 0.0, tot_pct = 0.0;
    std::size_t tot_elem = 0, tot_kept = 0;
    for (std::size_t k = 0; k < Z; ++k) {
        const double cn = static_cast<double>(n_elem[k]);
        rep.per_step[k].mae = abs_sum[k] / cn;
        rep.per_step[k].rmse = std::sqrt(sq_sum[k] / cn);
        if (n_kept[k] == 0)
            throw std::domain_error("evaluate: every step-" +
                                    std::to_string(k + 1) +
                                    " target is at or below the MAPE floor");
        rep.per_step[k].mape = 100.0 * pct_sum[k] / static_cast<double>(n_kept[k]);
        tot_abs += abs_sum[k];
        tot_sq += sq_sum[k];
        tot_pct += pct_sum[k];
        tot_elem += n_elem[k];
        tot_kept += n_kept[k];
    }
    rep.overall.mae = tot_abs / static_cast<double>(tot_elem);
    rep.overall.rmse = std::sqrt(tot_sq / static_cast<double>(tot_elem));
    rep.overall.mape = 100.0 * tot_pct / static_cast<double>(tot_kept);
    return rep;
}

RunReport train_model(Model& m, const WindowSplits& splits,
                      const Scaler& scaler, const TrainConfig& cfg) {
    if (splits.train.empty())
        throw std::invalid_argument("train: training split is empty");
    if (splits.val.empty())
        throw std::invalid_argument("train: validation split is empty");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (cfg.patience < 1) throw std::invalid_argument("train: patience must be >= 1");
    if (cfg.lr0 <= 0.0) throw std::invalid_argument("train: lr0 must be > 0");

    const auto run_start = std::chrono::steady_clock::now();
    auto params = m.params();
    AdamState adam = make_adam_state(params);
    const Var std_c = Var::constant(scaler.std);
    const Var mean_c = Var::constant(scaler.mean);
    const Rng root(cfg.seed);

    RunReport rep;
    std::vector<Tensor> best_params;
    std::size_t bad_epochs = 0;
    std::vector<std::size_t> order(splits.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        const double lr = lr_at_epoch(cfg, epoch);

        // Fisher-Yates with an epoch-derived stream: the permutation depends
        // only on (seed, epoch), never on how previous epochs consumed draws.
        Rng shuf = root.split("shuffle").split(static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuf.index(i)]);

        double loss_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t hi = std::min(b + cfg.batch_size, order.size());
            zero_grads(params);
            for (std::size_t s = b; s < hi; ++s) {
                const TrafficWindow& w = splits.train[order[s]];
                Binder bind(true);
                Var pred = model_forward(bind, m, Var::constant(w.x),
                                         w.weekday_idx, w.tod_idx);
                Var raw = add(mul(pred, std_c), mean_c);
                Var loss = mean_all(abs(sub(raw, Var::constant(w.y))));
                backward(loss);
                bind.collect(1.0 / static_cast<double>(hi - b));
                loss_sum += loss.val()[0];
            }
            adam_step(params, adam, lr);
        }

        EpochRow row;
        row.epoch = epoch;
        row.lr = lr;
        row.train_mae = loss_sum / static_cast<double>(order.size());

        double val_sum = 0.0;
        for (const TrafficWindow& w : splits.val) {
            const Tensor pred = scaler.inverse_transform(
                model_predict(m, w.x, w.weekday_idx, w.tod_idx));
            val_sum += mae(pred, w.y);
        }
        row.val_mae = val_sum / static_cast<double>(splits.val.size());

        if (row.val_mae < rep.best_val_mae) {
            rep.best_val_mae = row.val_mae;
            rep.best_epoch = epoch;
            row.is_best = true;
            bad_epochs = 0;
            best_params.clear();
            for (const Parameter* p : params) best_params.push_back(p->value.clone());
        } else {
            ++bad_epochs;
        }
        row.seconds = seconds_since(epoch_start);
        rep.epochs.push_back(row);
        if (cfg.verbose)
            std::printf("epoch %zu lr %.6g train_mae %.6g val_mae %.6g%s\n",
                        epoch, lr, row.train_mae, row.val_mae,
                        row.is_best ? " *" : "");

        if (cfg.stop_train_mae > 0.0 && row.train_mae < cfg.stop_train_mae) break;
        if (bad_epochs >= cfg.patience) break;
    }

    // restore the best validation epoch exactly
    if (!best_params.empty())
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i]->value = best_params[i].clone();

    if (!splits.test.empty())
        rep.test = evaluate(m, splits.test, scaler, cfg.mape_floor);
    rep.total_seconds = seconds_since(run_start);
    return rep;
}

void write_epoch_csv(const std::string& path, const RunReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_epoch_csv: cannot open " + path);
    os << "epoch,lr,train_mae,val_mae,is_best\n";
    for (const EpochRow& r : report.epochs)
        os << r.epoch << ',' << fmt_g17(r.lr) << ',' << fmt_g17(r.train_mae)
           << ',' << fmt_g17(r.val_mae) << ',' << (r.is_best ? 1 : 0) << '\n';
    os.flush();
    if (!os) throw std::runtime_error("write_epoch_csv: write failed: " + path);
}

void write_metrics_csv(const std::string& path, const EvalReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    os << "step,mae,rmse,mape\n";
    for (std::size_t k = 0; k < report.per_step.size(); ++k) {
        const StepMetrics& s = report.per_step[k];
        os << (k + 1) << ',' << fmt_g17(s.mae) << ',' << fmt_g17(s.rmse) << ','
           << fmt_g17(s.mape) << '\n';
    }
    os << "all," << fmt_g17(report.overall.mae) << ','
       << fmt_g17(report.overall.rmse) << ',' << fmt_g17(report.overall.mape)
       << '\n';
    os.flush();
    if (!os) throw std::runtime_error("write_metrics_csv: write failed: " + path);
}

}  // namespace stms
