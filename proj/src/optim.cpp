#include "stms/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace stms {

AdamState make_adam_state(const std::vector<Parameter*>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (const Parameter* p : params) {
        st.m.push_back(Tensor::zeros(p->value.shape()));
        st.v.push_back(Tensor::zeros(p->value.shape()));
    }
    return st;
}

void adam_step(std::vector<Parameter*>& params, AdamState& st, double lr,
               double beta1, double beta2, double eps) {
    if (st.m.size() != params.size() || st.v.size() != params.size())
        throw std::invalid_argument("adam_step: state/parameter count mismatch");
    st.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        if (p.grad.size() != p.value.size())
            throw std::invalid_argument("adam_step: gradient missing for " + p.name);
        double* m = st.m[i].mut();
        double* v = st.v[i].mut();
        double* w = p.value.mut();
        const Tensor& g = p.grad;
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void zero_grads(std::vector<Parameter*>& params) {
    for (Parameter* p : params) {
        double* g = p->grad.mut();
        for (std::size_t j = 0; j < p->grad.size(); ++j) g[j] = 0.0;
    }
}

}  // namespace stms
