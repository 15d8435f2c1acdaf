#include "stms/embedding.hpp"

#include <stdexcept>

namespace stms {

EmbedParams make_embed_params(const EmbedConfig& cfg, const Rng& root) {
    check_arg(cfg.N > 0, "embed: node count must be positive");
    check_arg(cfg.M > 0, "embed: window length must be positive");
    check_arg(cfg.d > 0 && cfg.d_e > 0 && cfg.d_s > 0,
              "embed: widths must be positive");
    EmbedParams p;
    p.feature_map = make_linear("embed.feature", cfg.d, cfg.d_e, true, root);
    p.weekday_table = make_param(
        "embed.weekday",
        xavier_uniform_init({cfg.days_per_week, cfg.d_e},
                            root.split("embed.weekday")));
    p.tod_table = make_param(
        "embed.tod", xavier_uniform_init({cfg.steps_per_day, cfg.d_e},
                                         root.split("embed.tod")));
    p.adaptive = make_param(
        "embed.adaptive", xavier_uniform_init({cfg.M, cfg.N, cfg.d_s},
                                              root.split("embed.adaptive")));
    return p;
}

void collect_params(EmbedParams& p, std::vector<Parameter*>& out) {
    collect_params(p.feature_map, out);
    out.push_back(&p.weekday_table);
    out.push_back(&p.tod_table);
    out.push_back(&p.adaptive);
}

Var embed_features(Binder& bind, EmbedParams& p, const Var& x) {
    const Tensor& xv = x.val();
    check_arg(xv.rank() == 3, "embed_features: input must be (M,N,d)");
    const std::size_t M = xv.dim(0), N = xv.dim(1), d = xv.dim(2);
    check_arg(d == p.feature_map.d_in(),
              "embed_features: feature width mismatch");
    Var flat = reshape(x, {M * N, d});
    Var y = apply_linear(bind, p.feature_map, flat);
    return reshape(y, {M, N, p.feature_map.d_out()});
}

Var embed_calendar(Binder& bind, EmbedParams& p,
                   const std::vector<std::size_t>& weekday_idx,
                   const std::vector<std::size_t>& tod_idx, std::size_t N) {
    check_arg(weekday_idx.size() == tod_idx.size(),
              "embed_calendar: index vectors must have equal length");
    check_arg(!weekday_idx.empty(), "embed_calendar: empty index vectors");
    check_arg(N > 0, "embed_calendar: node count must be positive");
    const std::size_t M = weekday_idx.size();
    const std::size_t wrows = p.weekday_table.value.dim(0);
    const std::size_t trows = p.tod_table.value.dim(0);
    for (std::size_t k = 0; k < M; ++k) {
        if (weekday_idx[k] >= wrows)
            throw std::out_of_range("embed_calendar: weekday index " +
                                    std::to_string(weekday_idx[k]) +
                                    " out of range");
        if (tod_idx[k] >= trows)
            throw std::out_of_range("embed_calendar: time-of-day index " +
                                    std::to_string(tod_idx[k]) +
                                    " out of range");
    }
    Var wk = gather_rows(bind(p.weekday_table), weekday_idx);  // (M, d_e)
    Var td = gather_rows(bind(p.tod_table), tod_idx);          // (M, d_e)
    Var cat = concat_last({wk, td});                           // (M, 2 d_e)
    const std::size_t two_de = cat.val().dim(1);
    return broadcast_to(reshape(cat, {M, 1, two_de}), {M, N, two_de});
}

Var assemble_hidden(const Var& zf, const Var& zc, const Var& zs) {
    const Tensor& f = zf.val();
    const Tensor& c = zc.val();
    const Tensor& s = zs.val();
    check_arg(f.rank() == 3 && c.rank() == 3 && s.rank() == 3,
              "assemble_hidden: inputs must be rank-3");
    check_arg(f.dim(0) == c.dim(0) && f.dim(0) == s.dim(0) &&
                  f.dim(1) == c.dim(1) && f.dim(1) == s.dim(1),
              "assemble_hidden: frame/node dims disagree");
    check_arg(c.dim(2) == 2 * f.dim(2),
              "assemble_hidden: calendar width must be twice the feature width");
    return concat_last({zf, zc, zs});
}

Var embed_window(Binder& bind, EmbedParams& p, const Var& x,
                 const std::vector<std::size_t>& weekday_idx,
                 const std::vector<std::size_t>& tod_idx) {
    const Tensor& xv = x.val();
    check_arg(xv.rank() == 3, "embed_window: input must be (M,N,d)");
    check_arg(xv.dim(0) == p.adaptive.value.dim(0) &&
                  xv.dim(1) == p.adaptive.value.dim(1),
              "embed_window: window shape does not match the adaptive table");
    Var zf = embed_features(bind, p, x);
    Var zc = embed_calendar(bind, p, weekday_idx, tod_idx, xv.dim(1));
    Var zs = bind(p.adaptive);
    return assemble_hidden(zf, zc, zs);
}

void calendar_indices(std::size_t t0, std::size_t M, std::size_t steps_per_day,
                      std::size_t start_weekday,
                      std::vector<std::size_t>& weekday_idx,
                      std::vector<std::size_t>& tod_idx) {
    check_arg(steps_per_day > 0, "calendar_indices: steps_per_day must be > 0");
    check_arg(M > 0, "calendar_indices: window must be non-empty");
    weekday_idx.resize(M);
    tod_idx.resize(M);
    for (std::size_t k = 0; k < M; ++k) {
        const std::size_t t = t0 + k;
        tod_idx[k] = t % steps_per_day;
        weekday_idx[k] = (start_weekday + t / steps_per_day) % 7;
    }
}

}  // namespace stms
