#pragma once

#include <cstddef>
#include <vector>

#include "stms/nn.hpp"

namespace stms {

// Per-parameter first/second moment estimates plus the shared step counter.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t t = 0;
};

AdamState make_adam_state(const std::vector<Parameter*>& params);

// One bias-corrected Adam update from the gradients currently stored on the
// parameters. Gradients are left untouched (callers zero them per step).
void adam_step(std::vector<Parameter*>& params, AdamState& st, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

void zero_grads(std::vector<Parameter*>& params);

}  // namespace stms
