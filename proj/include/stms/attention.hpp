#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stms/nn.hpp"

namespace stms {

struct LayerNormParams {
    Parameter gamma;
    Parameter beta;
};

LayerNormParams make_layer_norm(const std::string& name, std::size_t width);

// One multi-head self-attention block: Q/K/V projections whose column blocks
// are the per-head maps, output projection, then post-norm residual wiring
// with a position-wise ReLU feed-forward sublayer of width 4*d_h.
struct AttnParams {
    std::size_t heads = 4;
    LinearMap Wq, Wk, Wv;  // d_h -> d_h
    LinearMap Wo;          // d_h -> d_h
    LinearMap ffn1;        // d_h -> 4 d_h
    LinearMap ffn2;        // 4 d_h -> d_h
    LayerNormParams ln_attn, ln_ffn;
};

AttnParams make_attn_params(const std::string& name, std::size_t d_h,
                            std::size_t heads, const Rng& root);

void collect_params(AttnParams& p, std::vector<Parameter*>& out);

// Attention over the frame axis, each node independent: (T,N,d_h) ->
// (T,N,d_h). When `probs` is given it receives the softmax weights with
// shape (N*heads, T, T).
Var temporal_attention(Binder& bind, AttnParams& p, const Var& z,
                       Tensor* probs = nullptr);

// Attention over the node axis, each frame independent; weights come out as
// (T*heads, N, N).
Var spatial_attention(Binder& bind, AttnParams& p, const Var& z,
                      Tensor* probs = nullptr);

struct StBlockParams {
    AttnParams temporal;
    AttnParams spatial;
};

StBlockParams make_st_block(const std::string& name, std::size_t d_h,
                            std::size_t heads, const Rng& root);

void collect_params(StBlockParams& p, std::vector<Parameter*>& out);

// Temporal attention followed by spatial attention.
Var st_transformer_block(Binder& bind, StBlockParams& p, const Var& z);

}  // namespace stms
