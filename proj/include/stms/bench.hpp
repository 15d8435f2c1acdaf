#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stms/data.hpp"
#include "stms/flops.hpp"
#include "stms/train.hpp"

namespace stms {

// Wall-clock samples (monotonic clock) for full sweeps over a window set;
// warm-up sweeps run first and are not recorded.
struct BenchStats {
    std::vector<double> samples_s;
    double median_s = 0.0;
    double iqr_s = 0.0;
    std::size_t windows = 0;
};

BenchStats bench_inference(Model& m, const std::vector<TrafficWindow>& windows,
                           const Scaler& scaler, std::size_t repeats,
                           std::size_t warmup = 1);

struct AblationRow {
    std::size_t attn_layers = 0;
    std::size_t mamba_layers = 0;
    StepMetrics test;
    double flops_m = 0.0;
    double infer_s = 0.0;
    double train_s = 0.0;
};

// Trains every (attention layers, mamba layers) grid point with the same
// seed and TrainConfig, sequentially, and reports test metrics, counted
// FLOPS, and timings. When out_dir is non-empty, writes ablation.csv and
// per_step.csv (per-step metrics of the last grid point) there.
std::vector<AblationRow> ablation_run(
    const TrafficDataset& ds,
    const std::vector<std::pair<std::size_t, std::size_t>>& grid,
    const ModelConfig& base_cfg, const TrainConfig& tcfg, std::size_t M,
    const SplitSpec& split, const std::string& out_dir);

void write_ablation_csv(const std::string& path,
                        const std::vector<AblationRow>& rows);

}  // namespace stms
