#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "stms/data.hpp"
#include "stms/model.hpp"

namespace stms {

struct TrainConfig {
    double lr0 = 0.001;
    // Learning rate halves at the start of each listed (1-based) epoch.
    std::vector<std::size_t> lr_milestones = {25, 50};
    std::size_t batch_size = 16;
    std::size_t patience = 30;  // epochs without val-MAE improvement
    std::size_t max_epochs = 100;
    std::uint64_t seed = 1;
    double mape_floor = 1e-3;
    // When > 0, stop as soon as the epoch's train MAE falls below this.
    double stop_train_mae = 0.0;
    bool verbose = false;
};

struct EpochRow {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_mae = 0.0;
    double val_mae = 0.0;
    bool is_best = false;
    double seconds = 0.0;
};

struct StepMetrics {
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;
};

struct EvalReport {
    StepMetrics overall;
    std::vector<StepMetrics> per_step;  // index k = forecast step k+1
};

struct RunReport {
    std::vector<EpochRow> epochs;
    std::size_t best_epoch = 0;
    double best_val_mae = std::numeric_limits<double>::infinity();
    EvalReport test;  // empty per_step when the test split is empty
    double total_seconds = 0.0;
};

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

// Adam training on the de-standardized mean-absolute-error loss, with
// milestone lr decay and early stopping on validation MAE. The best-epoch
// parameters are restored into the model before the final test evaluation.
// Throws std::invalid_argument when the train or val split is empty.
RunReport train_model(Model& m, const WindowSplits& splits,
                      const Scaler& scaler, const TrainConfig& cfg);

// Per-forecast-step and aggregate metrics in raw units, deterministic
// iteration order. Throws std::invalid_argument on an empty window set.
EvalReport evaluate(Model& m, const std::vector<TrafficWindow>& windows,
                    const Scaler& scaler, double mape_floor);

// epoch,lr,train_mae,val_mae,is_best — doubles printed as %.17g so equal
// runs produce byte-identical files.
void write_epoch_csv(const std::string& path, const RunReport& report);

// step,mae,rmse,mape rows for steps 1..Z plus a trailing "all" row.
void write_metrics_csv(const std::string& path, const EvalReport& report);

}  // namespace stms
