#pragma once

#include <cstdint>
#include <vector>

#include "stms/attention.hpp"
#include "stms/embedding.hpp"
#include "stms/mamba.hpp"
#include "stms/nn.hpp"

namespace stms {

struct ModelConfig {
    EmbedConfig embed;
    std::size_t heads = 4;
    std::size_t n_attention_layers = 1;
    std::size_t n_mamba_layers = 1;
    std::size_t expand = 2;
    std::size_t d_state = 16;
    std::size_t Z = 12;  // forecast horizon in frames

    MambaConfig mamba() const {
        MambaConfig m;
        m.d_h = embed.d_h();
        m.expand = expand;
        m.d_state = d_state;
        return m;
    }
};

// Full forecasting network: embedding -> attention block(s) -> flatten ->
// state-space block(s) -> per-node regression head.
struct Model {
    ModelConfig cfg;
    EmbedParams embed;
    std::vector<StBlockParams> attn;
    std::vector<MambaParams> mamba;
    LinearMap head;  // (M*d_h) -> (Z*d), applied per node

    // Stable traversal order; the same order backs optimizer state and
    // checkpoints.
    std::vector<Parameter*> params();
    std::size_t num_scalars();
};

Model make_model(const ModelConfig& cfg, std::uint64_t seed);

// Closed-form learnable-scalar count for a config; construction asserts the
// registry agrees with it.
std::size_t count_params(const ModelConfig& cfg);

// Graph forward: x (M,N,d) -> (Z,N,d).
Var model_forward(Binder& bind, Model& m, const Var& x,
                  const std::vector<std::size_t>& weekday_idx,
                  const std::vector<std::size_t>& tod_idx);

// Evaluation-only forward (no tape).
Tensor model_predict(Model& m, const Tensor& x,
                     const std::vector<std::size_t>& weekday_idx,
                     const std::vector<std::size_t>& tod_idx);

}  // namespace stms
