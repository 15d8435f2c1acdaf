#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stms/tensor.hpp"

namespace stms {

// A traffic series: values is (T_total, N, d) with d feature channels per
// sensor (d = 1 for flow-only data). Immutable after construction.
struct TrafficDataset {
    Tensor values;
    std::size_t steps_per_day = 288;
    std::size_t start_weekday = 0;  // 0..6, weekday of frame 0
    std::string name;
    std::vector<std::string> sensor_ids;  // header names, size N

    std::size_t frames() const { return values.dim(0); }
    std::size_t nodes() const { return values.dim(1); }
    std::size_t channels() const { return values.dim(2); }
};

// Chronological train:val:test ratio, e.g. {6,2,2} or {7,1,2}.
struct SplitSpec {
    unsigned train = 6;
    unsigned val = 2;
    unsigned test = 2;
};

// One supervised sample: x holds frames [t0, t0+M), y the Z frames that
// immediately follow. Calendar indices cover the M input frames.
struct TrafficWindow {
    std::size_t t0 = 0;
    Tensor x;  // (M, N, d)
    Tensor y;  // (Z, N, d)
    std::vector<std::size_t> weekday_idx;
    std::vector<std::size_t> tod_idx;
};

// Windowed splits plus the frame ranges they were cut from, so callers can
// report segments too short to yield any window.
struct WindowSplits {
    std::vector<TrafficWindow> train, val, test;
    std::size_t train_frames = 0, val_frames = 0, test_frames = 0;

    std::string report() const;
};

// Per-sensor affine scaler fit on training inputs: shape (N, d) each.
struct Scaler {
    Tensor mean;
    Tensor std;

    Tensor transform(const Tensor& x) const;          // (x - mean) / std
    Tensor inverse_transform(const Tensor& z) const;  // z * std + mean
};

// CSV ingestion: header row of N sensor ids, then one row per 5-minute
// frame. Empty cells are imputed (forward fill; leading gaps back-filled);
// a column with no reading at all is an error. Ragged or non-numeric rows
// raise std::invalid_argument naming the 1-based line.
TrafficDataset load_csv(const std::string& path, std::size_t steps_per_day,
                        std::size_t start_weekday);

// Writes the CSV with full round-trip precision (%.17g) plus a key=value
// metadata sidecar at path + ".meta" (name, steps_per_day, start_weekday).
void save_dataset(const TrafficDataset& ds, const std::string& path);

// Loads a CSV written by save_dataset, reading calendar metadata from the
// sidecar. Throws std::runtime_error when the sidecar is missing.
TrafficDataset load_dataset(const std::string& path);

// Seeded synthetic generator: per node, a daily sinusoid over a base level
// with a weekend dip (weekdays 5 and 6) and Gaussian noise, clipped at 0.
// noise_scale multiplies every node's noise sigma (0 = deterministic).
TrafficDataset generate_synthetic(std::size_t N, std::size_t days,
                                  std::uint64_t seed,
                                  double noise_scale = 1.0);

// Stride-1 windows cut inside each chronological split segment; a window
// never straddles a split boundary. Segments shorter than M+Z yield empty
// collections (reported, not an error).
WindowSplits make_windows(const TrafficDataset& ds, std::size_t M,
                          std::size_t Z, const SplitSpec& split);

// Fits per-sensor mean/std on the train windows' x-values only, then
// z-scores x in place across all three splits. Targets stay in raw units.
// A zero-variance sensor raises std::invalid_argument naming it.
Scaler standardize(WindowSplits& splits,
                   const std::vector<std::string>& sensor_ids = {});

}  // namespace stms
