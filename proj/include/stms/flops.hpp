#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stms/model.hpp"

namespace stms {

struct FlopsEntry {
    std::string label;
    std::uint64_t macs = 0;
};

// Closed-form multiply-add counts per sublayer for one forward pass over a
// single window. Counts cover dense contractions only (projections, score
// and value products, the scan recurrence, discretization products); norms,
// softmax exponentials, activations, and bias adds are excluded. Pure in
// the config: no data, no measurement.
struct FlopsReport {
    std::string version = "flops-v1";
    std::string config_echo;
    std::vector<FlopsEntry> entries;
    std::uint64_t total = 0;

    // 0 when no entry carries the label
    std::uint64_t find(const std::string& label) const;
    // sum over entries whose label starts with the prefix
    std::uint64_t sum_prefix(const std::string& prefix) const;
};

FlopsReport count_flops(const ModelConfig& cfg);

std::string format_flops(const FlopsReport& rep);

}  // namespace stms
