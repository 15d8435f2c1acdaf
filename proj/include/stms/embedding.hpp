#pragma once

#include <cstddef>
#include <vector>

#include "stms/nn.hpp"

namespace stms {

// Widths of the hidden representation built from raw frames plus calendar
// context. The hidden width is always 3*d_e + d_s: feature, weekday and
// time-of-day embeddings are d_e each, the adaptive embedding d_s.
struct EmbedConfig {
    std::size_t d = 1;        // raw feature width per node
    std::size_t d_e = 24;     // feature/calendar embedding width
    std::size_t d_s = 8;      // adaptive embedding width
    std::size_t M = 12;       // input window length in frames
    std::size_t N = 0;        // node count
    std::size_t steps_per_day = 288;
    std::size_t days_per_week = 7;

    std::size_t d_h() const { return 3 * d_e + d_s; }
};

struct EmbedParams {
    LinearMap feature_map;   // d -> d_e
    Parameter weekday_table; // (days_per_week, d_e)
    Parameter tod_table;     // (steps_per_day, d_e)
    Parameter adaptive;      // (M, N, d_s), shared across windows
};

EmbedParams make_embed_params(const EmbedConfig& cfg, const Rng& root);

void collect_params(EmbedParams& p, std::vector<Parameter*>& out);

// Dense map over the last axis: (M,N,d) -> (M,N,d_e).
Var embed_features(Binder& bind, EmbedParams& p, const Var& x);

// Table lookups broadcast across nodes: -> (M,N,2*d_e), order
// [weekday | time-of-day]. Out-of-range indices throw std::out_of_range.
Var embed_calendar(Binder& bind, EmbedParams& p,
                   const std::vector<std::size_t>& weekday_idx,
                   const std::vector<std::size_t>& tod_idx, std::size_t N);

// Fixed concatenation [feature | calendar | adaptive] -> (M,N,3*d_e+d_s).
Var assemble_hidden(const Var& zf, const Var& zc, const Var& zs);

// Full path: features + calendar + adaptive for one window.
Var embed_window(Binder& bind, EmbedParams& p, const Var& x,
                 const std::vector<std::size_t>& weekday_idx,
                 const std::vector<std::size_t>& tod_idx);

// Maps an absolute start frame to per-frame calendar indices:
//   tod[k]     = (t0+k) mod steps_per_day
//   weekday[k] = (start_weekday + (t0+k)/steps_per_day) mod 7
void calendar_indices(std::size_t t0, std::size_t M, std::size_t steps_per_day,
                      std::size_t start_weekday,
                      std::vector<std::size_t>& weekday_idx,
                      std::vector<std::size_t>& tod_idx);

}  // namespace stms
