#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stms/autodiff.hpp"
#include "stms/rng.hpp"
#include "stms/tensor.hpp"

namespace stms {

// A named trainable tensor. `grad` always has the value's shape and is
// accumulated across a batch, then consumed by the optimizer.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

Parameter make_param(std::string name, Tensor v);

// Binds parameters into one forward graph. With tracking off the binder
// hands out constants, so evaluation builds no tape closures.
class Binder {
public:
    explicit Binder(bool track = true) : track_(track) {}

    Var operator()(Parameter& p);

    // Adds scale * d(graph)/d(param) into each bound parameter's grad.
    void collect(double scale);

    bool tracking() const { return track_; }

private:
    bool track_;
    std::vector<std::pair<Parameter*, std::shared_ptr<Node>>> bound_;
};

// y = x W + b with W (d_in, d_out). Bias-free maps keep b undefined.
struct LinearMap {
    Parameter W;
    Parameter b;
    bool has_bias = true;

    std::size_t d_in() const { return W.value.dim(0); }
    std::size_t d_out() const { return W.value.dim(1); }
};

LinearMap make_linear(const std::string& name, std::size_t d_in,
                      std::size_t d_out, bool bias, const Rng& root);

Var apply_linear(Binder& bind, LinearMap& lin, const Var& x);

// Collects every parameter of a module in a stable order.
void collect_params(LinearMap& lin, std::vector<Parameter*>& out);

}  // namespace stms
