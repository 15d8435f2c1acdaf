#include "stms/model.hpp"

#include <stdexcept>
#include <string>

namespace stms {

std::vector<Parameter*> Model::params() {
    std::vector<Parameter*> out;
    collect_params(embed, out);
    for (auto& a : attn) collect_params(a, out);
    for (auto& mb : mamba) collect_params(mb, out);
    collect_params(head, out);
    return out;
}

std::size_t Model::num_scalars() {
    std::size_t n = 0;
    for (Parameter* p : params()) n += p->value.size();
    return n;
}

std::size_t count_params(const ModelConfig& cfg) {
    const std::size_t dh = cfg.embed.d_h();
    const std::size_t di = cfg.mamba().d_inner();
    const std::size_t ds = cfg.d_state;

    std::size_t embed = cfg.embed.d * cfg.embed.d_e + cfg.embed.d_e  // feature
                        + cfg.embed.days_per_week * cfg.embed.d_e    // weekday
                        + cfg.embed.steps_per_day * cfg.embed.d_e    // tod
                        + cfg.embed.M * cfg.embed.N * cfg.embed.d_s;

    // One attention sublayer: Q,K,V,O projections, 4*dh-wide FFN, two norms.
    std::size_t attn_one = 4 * (dh * dh + dh)          // Wq Wk Wv Wo
                           + dh * 4 * dh + 4 * dh      // ffn1
                           + 4 * dh * dh + dh          // ffn2
                           + 4 * dh;                   // two norm pairs
    std::size_t attn = cfg.n_attention_layers * 2 * attn_one;

    std::size_t mamba_one = dh * di + di      // in_proj
                            + di * ds         // A_log
                            + 2 * di * ds     // proj_B, proj_C
                            + di * di         // proj_dt
                            + di              // dt_bias
                            + di              // D
                            + di * dh + dh    // out_proj
                            + 4 * dh;         // norm_in, norm_out
    std::size_t mamba = cfg.n_mamba_layers * mamba_one;

    std::size_t head = cfg.embed.M * dh * cfg.Z * cfg.embed.d + cfg.Z * cfg.embed.d;

    return embed + attn + mamba + head;
}

Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
    check_arg(cfg.embed.N > 0, "model: node count must be positive");
    check_arg(cfg.Z > 0, "model: horizon must be positive");
    check_arg(cfg.heads > 0 && cfg.embed.d_h() % cfg.heads == 0,
              "model: hidden width must be divisible by the head count");

    Rng root(seed);
    Model m;
    m.cfg = cfg;
    m.embed = make_embed_params(cfg.embed, root);
    for (std::size_t l = 0; l < cfg.n_attention_layers; ++l) {
        m.attn.push_back(make_st_block("attn" + std::to_string(l),
                                       cfg.embed.d_h(), cfg.heads, root));
    }
    for (std::size_t l = 0; l < cfg.n_mamba_layers; ++l) {
        m.mamba.push_back(
            make_mamba_params("mamba" + std::to_string(l), cfg.mamba(), root));
    }
    m.head = make_linear("head", cfg.embed.M * cfg.embed.d_h(),
                         cfg.Z * cfg.embed.d, true, root);

    const std::size_t expected = count_params(cfg);
    const std::size_t actual = m.num_scalars();
    if (expected != actual)
        throw std::logic_error("model: closed-form parameter count " +
                               std::to_string(expected) +
                               " disagrees with the registry " +
                               std::to_string(actual));
    return m;
}

Var model_forward(Binder& bind, Model& m, const Var& x,
                  const std::vector<std::size_t>& weekday_idx,
                  const std::vector<std::size_t>& tod_idx) {
    const Tensor& xv = x.val();
    const EmbedConfig& e = m.cfg.embed;
    check_arg(xv.rank() == 3, "model: input must be (M,N,d)");
    check_arg(xv.dim(0) == e.M && xv.dim(1) == e.N && xv.dim(2) == e.d,
              "model: input shape does not match the config");
    check_arg(weekday_idx.size() == e.M && tod_idx.size() == e.M,
              "model: calendar index length must equal the window length");

    Var z = embed_window(bind, m.embed, x, weekday_idx, tod_idx);
    for (auto& blk : m.attn) z = st_transformer_block(bind, blk, z);

    Var flat = st_mix(z);  // (M*N, d_h)
    for (auto& blk : m.mamba) flat = mamba_block(bind, blk, flat);
    Var back = st_unmix(flat, e.M, e.N);  // (M,N,d_h)

    // per node: flatten the frame axis, regress all Z*d outputs at once
    Var per_node = reshape(permute(back, {1, 0, 2}), {e.N, e.M * e.d_h()});
    Var out = apply_linear(bind, m.head, per_node);  // (N, Z*d)
    return permute(reshape(out, {e.N, m.cfg.Z, e.d}), {1, 0, 2});
}

Tensor model_predict(Model& m, const Tensor& x,
                     const std::vector<std::size_t>& weekday_idx,
                     const std::vector<std::size_t>& tod_idx) {
    Binder eval(false);
    return model_forward(eval, m, Var::constant(x), weekday_idx, tod_idx).val();
}

}  // namespace stms
