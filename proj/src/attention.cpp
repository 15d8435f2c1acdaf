#include "stms/attention.hpp"

#include <cmath>

namespace stms {

namespace {

constexpr double kLnEps = 1e-5;

// Core scaled dot-product attention with post-norm residual wiring. The
// input arrives as (batch, len, d_h): batch = nodes*heads for the temporal
// direction, frames*heads for the spatial one (the caller permutes).
Var attend(Binder& bind, AttnParams& p, const Var& z, Tensor* probs) {
    const Tensor& zv = z.val();
    check_arg(zv.rank() == 3, "attention: input must be rank-3");
    const std::size_t A = zv.dim(0);   // sequence axis
    const std::size_t B = zv.dim(1);   // batch axis (independent sequences)
    const std::size_t dh = zv.dim(2);
    check_arg(p.heads > 0 && dh % p.heads == 0,
              "attention: width must be divisible by the head count");
    const std::size_t H = p.heads;
    const std::size_t dk = dh / H;

    Var flat = reshape(z, {A * B, dh});
    Var q = apply_linear(bind, p.Wq, flat);
    Var k = apply_linear(bind, p.Wk, flat);
    Var v = apply_linear(bind, p.Wv, flat);

    // (A,B,H,dk) -> (B,H,A,dk) -> (B*H, A, dk)
    auto to_heads = [&](const Var& t) {
        return reshape(permute(reshape(t, {A, B, H, dk}), {1, 2, 0, 3}),
                       {B * H, A, dk});
    };
    Var qh = to_heads(q);
    Var kh = to_heads(k);
    Var vh = to_heads(v);

    Var scores = scale(bmm(qh, permute(kh, {0, 2, 1})),
                       1.0 / std::sqrt(static_cast<double>(dk)));
    Var attn = softmax_rows(scores);  // (B*H, A, A)
    if (probs) *probs = attn.val();
    Var mixed = bmm(attn, vh);  // (B*H, A, dk)

    // back to (A*B, dh)
    Var merged = reshape(
        permute(reshape(mixed, {B, H, A, dk}), {2, 0, 1, 3}), {A * B, dh});
    Var out = apply_linear(bind, p.Wo, merged);

    Var y1 = layer_norm(add(flat, out), bind(p.ln_attn.gamma),
                        bind(p.ln_attn.beta), kLnEps);
    Var ff = apply_linear(bind, p.ffn2, relu(apply_linear(bind, p.ffn1, y1)));
    Var y2 = layer_norm(add(y1, ff), bind(p.ln_ffn.gamma), bind(p.ln_ffn.beta),
                        kLnEps);
    return reshape(y2, {A, B, dh});
}

}  // namespace

LayerNormParams make_layer_norm(const std::string& name, std::size_t width) {
    LayerNormParams ln;
    ln.gamma = make_param(name + ".gamma", Tensor::full({width}, 1.0));
    ln.beta = make_param(name + ".beta", Tensor::zeros({width}));
    return ln;
}

AttnParams make_attn_params(const std::string& name, std::size_t d_h,
                            std::size_t heads, const Rng& root) {
    check_arg(heads > 0 && d_h % heads == 0,
              "attention: width must be divisible by the head count");
    AttnParams p;
    p.heads = heads;
    p.Wq = make_linear(name + ".Wq", d_h, d_h, true, root);
    p.Wk = make_linear(name + ".Wk", d_h, d_h, true, root);
    p.Wv = make_linear(name + ".Wv", d_h, d_h, true, root);
    p.Wo = make_linear(name + ".Wo", d_h, d_h, true, root);
    p.ffn1 = make_linear(name + ".ffn1", d_h, 4 * d_h, true, root);
    p.ffn2 = make_linear(name + ".ffn2", 4 * d_h, d_h, true, root);
    p.ln_attn = make_layer_norm(name + ".ln_attn", d_h);
    p.ln_ffn = make_layer_norm(name + ".ln_ffn", d_h);
    return p;
}

void collect_params(AttnParams& p, std::vector<Parameter*>& out) {
    collect_params(p.Wq, out);
    collect_params(p.Wk, out);
    collect_params(p.Wv, out);
    collect_params(p.Wo, out);
    collect_params(p.ffn1, out);
    collect_params(p.ffn2, out);
    out.push_back(&p.ln_attn.gamma);
    out.push_back(&p.ln_attn.beta);
    out.push_back(&p.ln_ffn.gamma);
    out.push_back(&p.ln_ffn.beta);
}

Var temporal_attention(Binder& bind, AttnParams& p, const Var& z,
                       Tensor* probs) {
    // (T,N,d_h): frames are the sequence, nodes the batch.
    return attend(bind, p, z, probs);
}

Var spatial_attention(Binder& bind, AttnParams& p, const Var& z,
                      Tensor* probs) {
    // Swap roles: nodes become the sequence, frames the batch.
    Var swapped = permute(z, {1, 0, 2});
    Var out = attend(bind, p, swapped, probs);
    return permute(out, {1, 0, 2});
}

StBlockParams make_st_block(const std::string& name, std::size_t d_h,
                            std::size_t heads, const Rng& root) {
    StBlockParams p;
    p.temporal = make_attn_params(name + ".temporal", d_h, heads, root);
    p.spatial = make_attn_params(name + ".spatial", d_h, heads, root);
    return p;
}

void collect_params(StBlockParams& p, std::vector<Parameter*>& out) {
    collect_params(p.temporal, out);
    collect_params(p.spatial, out);
}

Var st_transformer_block(Binder& bind, StBlockParams& p, const Var& z) {
    return spatial_attention(bind, p.spatial,
                             temporal_attention(bind, p.temporal, z));
}

}  // namespace stms
