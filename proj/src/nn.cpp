#include "stms/nn.hpp"

namespace stms {

Parameter make_param(std::string name, Tensor v) {
    Parameter p;
    p.name = std::move(name);
    p.grad = Tensor::zeros(v.shape());
    p.value = std::move(v);
    return p;
}

Var Binder::operator()(Parameter& p) {
    if (!track_) return Var::constant(p.value);
    Var v = Var::leaf(p.value);
    bound_.emplace_back(&p, v.node());
    return v;
}

void Binder::collect(double scale) {
    for (auto& [param, node] : bound_) {
        if (!node->grad.defined()) continue;
        double* dst = param->grad.mut();
        const double* src = node->grad.data();
        for (std::size_t i = 0; i < param->grad.size(); ++i)
            dst[i] += scale * src[i];
    }
}

LinearMap make_linear(const std::string& name, std::size_t d_in,
                      std::size_t d_out, bool bias, const Rng& root) {
    LinearMap lin;
    lin.W = make_param(name + ".W",
                       xavier_uniform_init({d_in, d_out}, root.split(name + ".W")));
    lin.has_bias = bias;
    if (bias) lin.b = make_param(name + ".b", Tensor::zeros({d_out}));
    return lin;
}

Var apply_linear(Binder& bind, LinearMap& lin, const Var& x) {
    Var y = matmul(x, bind(lin.W));
    if (lin.has_bias) y = add(y, bind(lin.b));
    return y;
}

void collect_params(LinearMap& lin, std::vector<Parameter*>& out) {
    out.push_back(&lin.W);
    if (lin.has_bias) out.push_back(&lin.b);
}

}  // namespace stms
