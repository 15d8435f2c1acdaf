#include "stms/flops.hpp"

#include <sstream>

namespace stms {

std::uint64_t FlopsReport::find(const std::string& label) const {
    for (const FlopsEntry& e : entries)
        if (e.label == label) return e.macs;
    return 0;
}

std::uint64_t FlopsReport::sum_prefix(const std::string& prefix) const {
    std::uint64_t s = 0;
    for (const FlopsEntry& e : entries)
        if (e.label.rfind(prefix, 0) == 0) s += e.macs;
    return s;
}

FlopsReport count_flops(const ModelConfig& cfg) {
    check_arg(cfg.embed.N > 0, "count_flops: config has no nodes");
    const std::uint64_t M = cfg.embed.M, N = cfg.embed.N, d = cfg.embed.d;
    const std::uint64_t dh = cfg.embed.d_h();
    const std::uint64_t di = cfg.mamba().d_inner(), ds = cfg.d_state;
    const std::uint64_t L = M * N;  // fused sequence length
    const std::uint64_t Z = cfg.Z;

    FlopsReport rep;
    auto add = [&](std::string label, std::uint64_t macs) {
        rep.entries.push_back({std::move(label), macs});
        rep.total += macs;
    };

    // feature projection: d -> d_e at every (frame, node)
    add("embed.feature", M * N * d * static_cast<std::uint64_t>(cfg.embed.d_e));

    for (std::size_t l = 0; l < cfg.n_attention_layers; ++l) {
        const std::string base = "attn" + std::to_string(l);
        // temporal: sequences of length M, one per node
        add(base + ".temporal.qkv", 3 * L * dh * dh);
        add(base + ".temporal.scores", N * M * M * dh);  // heads * M^2 * d_k per node
        add(base + ".temporal.av", N * M * M * dh);
        add(base + ".temporal.out", L * dh * dh);
        add(base + ".temporal.ffn", 8 * L * dh * dh);  // d_h -> 4 d_h -> d_h
        // spatial: sequences of length N, one per frame
        add(base + ".spatial.qkv", 3 * L * dh * dh);
        add(base + ".spatial.scores", M * N * N * dh);
        add(base + ".spatial.av", M * N * N * dh);
        add(base + ".spatial.out", L * dh * dh);
        add(base + ".spatial.ffn", 8 * L * dh * dh);
    }

    for (std::size_t l = 0; l < cfg.n_mamba_layers; ++l) {
        const std::string base = "mamba" + std::to_string(l);
        add(base + ".in_proj", L * dh * di);
        add(base + ".proj_b", L * di * ds);
        add(base + ".proj_c", L * di * ds);
        add(base + ".proj_dt", L * di * di);
        // dt*A, then dt * expm1x(dA) * B: three elementwise products per
        // (step, channel, state); the exponentials themselves are excluded
        add(base + ".discretize", 3 * L * di * ds);
        // per step: A_bar*H + B_bar*U (2 MACs) and C*H reduction (1 MAC)
        // per (channel, state), plus the D*U skip per channel
        add(base + ".scan", L * (3 * di * ds + di));
        add(base + ".out_proj", L * di * dh);
    }

    // per-node readout: (M * d_h) -> (Z * d)
    add("head", N * (M * dh) * (Z * d));

    std::ostringstream cfgecho;
    cfgecho << "M=" << M << " N=" << N << " d=" << d << " d_h=" << dh
            << " d_inner=" << di << " d_state=" << ds << " Z=" << Z
            << " attn_layers=" << cfg.n_attention_layers
            << " mamba_layers=" << cfg.n_mamba_layers;
    rep.config_echo = cfgecho.str();
    return rep;
}

std::string format_flops(const FlopsReport& rep) {
    std::ostringstream os;
    os << rep.version << "  [" << rep.config_echo << "]\n";
    for (const FlopsEntry& e : rep.entries)
        os << "  " << e.label << " " << e.macs << "\n";
    os << "  total " << rep.total << " (" << (static_cast<double>(rep.total) / 1e6)
       << "M MACs)\n";
    return os.str();
}

}  // namespace stms
