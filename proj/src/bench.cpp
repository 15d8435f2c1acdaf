#include "stms/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace stms {

namespace {

double quantile_sorted(const std::vector<double>& v, double p) {
    if (v.empty()) return 0.0;
    const double pos = p * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

BenchStats bench_inference(Model& m, const std::vector<TrafficWindow>& windows,
                           const Scaler& scaler, std::size_t repeats,
                           std::size_t warmup) {
    if (windows.empty())
        throw std::invalid_argument("bench_inference: empty window set");
    if (repeats < 1)
        throw std::invalid_argument("bench_inference: repeats must be >= 1");

    // keep the sweeps honest: consume the predictions so nothing is elided
    volatile double sink = 0.0;
    auto sweep = [&]() {
        double acc = 0.0;
        for (const TrafficWindow& w : windows) {
            const Tensor pred = scaler.inverse_transform(
                model_predict(m, w.x, w.weekday_idx, w.tod_idx));
            acc += pred[0];
        }
        sink = sink + acc;
    };

    for (std::size_t i = 0; i < warmup; ++i) sweep();

    BenchStats st;
    st.windows = windows.size();
    st.samples_s.reserve(repeats);
    for (std::size_t r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        sweep();
        st.samples_s.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count());
    }
    std::vector<double> sorted = st.samples_s;
    std::sort(sorted.begin(), sorted.end());
    st.median_s = quantile_sorted(sorted, 0.5);
    st.iqr_s = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    return st;
}

std::vector<AblationRow> ablation_run(
    const TrafficDataset& ds,
    const std::vector<std::pair<std::size_t, std::size_t>>& grid,
    const ModelConfig& base_cfg, const TrainConfig& tcfg, std::size_t M,
    const SplitSpec& split, const std::string& out_dir) {
    if (grid.empty()) throw std::invalid_argument("ablation_run: empty grid");

    WindowSplits splits = make_windows(ds, M, base_cfg.Z, split);
    const Scaler scaler = standardize(splits, ds.sensor_ids);

    std::vector<AblationRow> rows;
    EvalReport last_eval;
    for (const auto& [a_layers, m_layers] : grid) {
        ModelConfig cfg = base_cfg;
        cfg.embed.N = ds.nodes();
        cfg.embed.d = ds.channels();
        cfg.embed.M = M;
        cfg.n_attention_layers = a_layers;
        cfg.n_mamba_layers = m_layers;

        Model model = make_model(cfg, tcfg.seed);
        const RunReport rr = train_model(model, splits, scaler, tcfg);
        const BenchStats bs = bench_inference(model, splits.test, scaler, 3);

        AblationRow row;
        row.attn_layers = a_layers;
        row.mamba_layers = m_layers;
        row.test = rr.test.overall;
        row.flops_m = static_cast<double>(count_flops(cfg).total) / 1e6;
        row.infer_s = bs.median_s;
        row.train_s = rr.total_seconds;
        rows.push_back(row);
        last_eval = rr.test;
    }

    if (!out_dir.empty()) {
        write_ablation_csv(out_dir + "/ablation.csv", rows);
        write_metrics_csv(out_dir + "/per_step.csv", last_eval);
    }
    return rows;
}

void write_ablation_csv(const std::string& path,
                        const std::vector<AblationRow>& rows) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_ablation_csv: cannot open " + path);
    os << "attn_layers,mamba_layers,mae,rmse,mape,flops_m,infer_s,train_s\n";
    for (const AblationRow& r : rows)
        os << r.attn_layers << ',' << r.mamba_layers << ',' << fmt_g17(r.test.mae)
           << ',' << fmt_g17(r.test.rmse) << ',' << fmt_g17(r.test.mape) << ','
           << fmt_g17(r.flops_m) << ',' << fmt_g17(r.infer_s) << ','
           << fmt_g17(r.train_s) << '\n';
    os.flush();
    if (!os) throw std::runtime_error("write_ablation_csv: write failed: " + path);
}

}  // namespace stms
