#include "stms/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <unordered_set>

namespace stms {

namespace {

// Row-major strides aligned to a broadcast output of rank `r`: padded or
// size-1 dims get stride 0 so the same element is revisited.
std::vector<std::size_t> aligned_strides(const Shape& s, std::size_t r) {
    std::vector<std::size_t> st(r, 0);
    std::size_t acc = 1;
    for (std::size_t k = s.size(); k-- > 0;) {
        std::size_t pos = r - (s.size() - k);
        st[pos] = (s[k] == 1) ? 0 : acc;
        acc *= s[k];
    }
    return st;
}

template <class F>
Tensor bcast_binary(const Tensor& a, const Tensor& b, F f) {
    if (a.same_shape(b)) {
        Tensor out = Tensor::zeros(a.shape());
        const double* pa = a.data();
        const double* pb = b.data();
        double* po = out.mut();
        for (std::size_t i = 0; i < a.size(); ++i) po[i] = f(pa[i], pb[i]);
        return out;
    }
    Shape os = broadcast_shape(a.shape(), b.shape());
    const std::size_t r = os.size();
    auto sa = aligned_strides(a.shape(), r);
    auto sb = aligned_strides(b.shape(), r);
    Tensor out = Tensor::zeros(os);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.mut();
    std::vector<std::size_t> idx(r, 0);
    std::size_t offa = 0, offb = 0;
    const std::size_t total = out.size();
    for (std::size_t c = 0; c < total; ++c) {
        po[c] = f(pa[offa], pb[offb]);
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            offa += sa[d];
            offb += sb[d];
            if (idx[d] < os[d]) break;
            idx[d] = 0;
            offa -= sa[d] * os[d];
            offb -= sb[d] * os[d];
        }
    }
    return out;
}

Tensor& ensure_grad(const std::shared_ptr<Node>& n) {
    if (!n->grad.defined()) n->grad = Tensor::zeros(n->value.shape());
    return n->grad;
}

std::shared_ptr<Node> new_node(Tensor value, std::initializer_list<Var> ins) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const Var& v : ins) {
        check_arg(v.defined(), "op input is an undefined var");
        if (v.requires_grad()) {
            n->requires_grad = true;
            n->parents.push_back(v.node());
        }
    }
    return n;
}

Tensor permute_copy(const Tensor& t, const std::vector<std::size_t>& axes) {
    const std::size_t r = t.rank();
    check_arg(axes.size() == r, "permute: axes rank mismatch");
    std::vector<bool> seen(r, false);
    for (std::size_t a : axes) {
        check_arg(a < r && !seen[a], "permute: axes must be a permutation");
        seen[a] = true;
    }
    Shape os(r);
    for (std::size_t i = 0; i < r; ++i) os[i] = t.dim(axes[i]);
    std::vector<std::size_t> tst(r, 1);
    for (std::size_t k = r; k-- > 1;) tst[k - 1] = tst[k] * t.dim(k);
    std::vector<std::size_t> ms(r);
    for (std::size_t i = 0; i < r; ++i) ms[i] = tst[axes[i]];
    Tensor out = Tensor::zeros(os);
    const double* src = t.data();
    double* dst = out.mut();
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t c = 0; c < out.size(); ++c) {
        dst[c] = src[off];
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            off += ms[d];
            if (idx[d] < os[d]) break;
            idx[d] = 0;
            off -= ms[d] * os[d];
        }
    }
    return out;
}

std::vector<std::size_t> inverse_axes(const std::vector<std::size_t>& axes) {
    std::vector<std::size_t> inv(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) inv[axes[i]] = i;
    return inv;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1) {
            shape_fail("incompatible broadcast " + shape_str(a) + " x " +
                       shape_str(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

Tensor reduce_to(const Tensor& g, const Shape& target) {
    if (g.shape() == target) return g;
    const std::size_t r = g.rank();
    check_arg(target.size() <= r, "reduce_to: target rank exceeds source");
    Tensor out = Tensor::zeros(target);
    auto so = aligned_strides(target, r);
    // sanity: every non-broadcast dim must match
    for (std::size_t i = 0; i < target.size(); ++i) {
        std::size_t gd = g.dim(r - target.size() + i);
        check_arg(target[i] == gd || target[i] == 1,
                  "reduce_to: shape is not a broadcast contraction");
    }
    const double* src = g.data();
    double* dst = out.mut();
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t c = 0; c < g.size(); ++c) {
        dst[off] += src[c];
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            off += so[d];
            if (idx[d] < g.dim(d)) break;
            idx[d] = 0;
            off -= so[d] * g.dim(d);
        }
    }
    return out;
}

void accum_grad(const std::shared_ptr<Node>& n, const Tensor& g) {
    check_arg(n->value.same_shape(g), "gradient shape mismatch");
    Tensor& dst = ensure_grad(n);
    double* d = dst.mut();
    const double* s = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += s[i];
}

Var Var::constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = false;
    return Var(n);
}

Var Var::leaf(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = true;
    return Var(n);
}

void backward(const Var& out) {
    check_arg(out.defined(), "backward: undefined var");
    check_arg(out.val().size() == 1, "backward: output must be a scalar");
    if (!out.requires_grad()) return;
    accum_grad(out.node(), Tensor::full(out.val().shape(), 1.0));

    struct Frame {
        Node* n;
        std::size_t next;
    };
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<Frame> stack{{out.node().get(), 0}};
    visited.insert(out.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node* p = f.n->parents[f.next++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* nd = *it;
        if (nd->backprop && nd->grad.defined()) nd->backprop();
    }
}

// ---- elementwise binary ----------------------------------------------

Var add(const Var& a, const Var& b) {
    auto n = new_node(
        bcast_binary(a.val(), b.val(), [](double x, double y) { return x + y; }),
        {a, b});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        auto bn = b.node();
        n->backprop = [self, an, bn] {
            if (an->requires_grad)
                accum_grad(an, reduce_to(self->grad, an->value.shape()));
            if (bn->requires_grad)
                accum_grad(bn, reduce_to(self->grad, bn->value.shape()));
        };
    }
    return Var(n);
}

Var sub(const Var& a, const Var& b) {
    auto n = new_node(
        bcast_binary(a.val(), b.val(), [](double x, double y) { return x - y; }),
        {a, b});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        auto bn = b.node();
        n->backprop = [self, an, bn] {
            if (an->requires_grad)
                accum_grad(an, reduce_to(self->grad, an->value.shape()));
            if (bn->requires_grad) {
                Tensor neg = self->grad.clone();
                double* p = neg.mut();
                for (std::size_t i = 0; i < neg.size(); ++i) p[i] = -p[i];
                accum_grad(bn, reduce_to(neg, bn->value.shape()));
            }
        };
    }
    return Var(n);
}

Var mul(const Var& a, const Var& b) {
    auto n = new_node(
        bcast_binary(a.val(), b.val(), [](double x, double y) { return x * y; }),
        {a, b});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        auto bn = b.node();
        n->backprop = [self, an, bn] {
            if (an->requires_grad) {
                Tensor t = bcast_binary(self->grad, bn->value,
                                        [](double g, double y) { return g * y; });
                accum_grad(an, reduce_to(t, an->value.shape()));
            }
            if (bn->requires_grad) {
                Tensor t = bcast_binary(self->grad, an->value,
                                        [](double g, double x) { return g * x; });
                accum_grad(bn, reduce_to(t, bn->value.shape()));
            }
        };
    }
    return Var(n);
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
    Tensor out = a.val().clone();
    double* p = out.mut();
    for (std::size_t i = 0; i < out.size(); ++i) p[i] *= c;
    auto n = new_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        n->backprop = [self, an, c] {
            Tensor t = self->grad.clone();
            double* p = t.mut();
            for (std::size_t i = 0; i < t.size(); ++i) p[i] *= c;
            accum_grad(an, t);
        };
    }
    return Var(n);
}

Var add_scalar(const Var& a, double c) {
    Tensor out = a.val().clone();
    double* p = out.mut();
    for (std::size_t i = 0; i < out.size(); ++i) p[i] += c;
    auto n = new_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        n->backprop = [self, an] { accum_grad(an, self->grad); };
    }
    return Var(n);
}

// ---- matrix products ---------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    Tensor out = matmul(a.val(), b.val());
    auto n = new_node(std::move(out), {a, b});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        auto bn = b.node();
        n->backprop = [self, an, bn] {
            const std::size_t m = an->value.dim(0);
            const std::size_t k = an->value.dim(1);
            const std::size_t nn = bn->value.dim(1);
            if (an->requires_grad) {
                matmul_nt(self->grad.data(), bn->value.data(),
                          ensure_grad(an).mut(), m, nn, k);
            }
            if (bn->requires_grad) {
                matmul_tn(an->value.data(), self->grad.data(),
                          ensure_grad(bn).mut(), k, m, nn);
            }
        };
    }
    return Var(n);
}

Var bmm(const Var& a, const Var& b) {
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    check_arg(A.rank() == 3 && B.rank() == 3, "bmm: expects rank-3 inputs");
    check_arg(A.dim(0) == B.dim(0), "bmm: batch dims differ");
    check_arg(A.dim(2) == B.dim(1), "bmm: inner dims differ");
    const std::size_t bs = A.dim(0), m = A.dim(1), k = A.dim(2), nn = B.dim(2);
    Tensor out = Tensor::zeros({bs, m, nn});
    for (std::size_t i = 0; i < bs; ++i) {
        matmul_nn(A.data() + i * m * k, B.data() + i * k * nn,
                  out.mut() + i * m * nn, m, k, nn);
    }
    auto n = new_node(std::move(out), {a, b});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        auto bn = b.node();
        n->backprop = [self, an, bn, bs, m, k, nn] {
            const double* g = self->grad.data();
            if (an->requires_grad) {
                double* da = ensure_grad(an).mut();
                for (std::size_t i = 0; i < bs; ++i) {
                    matmul_nt(g + i * m * nn, bn->value.data() + i * k * nn,
                              da + i * m * k, m, nn, k);
                }
            }
            if (bn->requires_grad) {
                double* db = ensure_grad(bn).mut();
                for (std::size_t i = 0; i < bs; ++i) {
                    matmul_tn(an->value.data() + i * m * k, g + i * m * nn,
                              db + i * k * nn, k, m, nn);
                }
            }
        };
    }
    return Var(n);
}

// ---- elementwise unary ---------------------------------------------------

namespace {

template <class FwdF, class BwdF>
Var unary_op(const Var& a, FwdF fwd, BwdF dfd_of_x, const char*) {
    Tensor out = Tensor::zeros(a.val().shape());
    const double* px = a.val().data();
    double* po = out.mut();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = fwd(px[i]);
    auto n = new_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        n->backprop = [self, an, dfd_of_x] {
            Tensor& dst = ensure_grad(an);
            double* d = dst.mut();
            const double* g = self->grad.data();
            const double* x = an->value.data();
            for (std::size_t i = 0; i < dst.size(); ++i) d[i] += g[i] * dfd_of_x(x[i]);
        };
    }
    return Var(n);
}

}  // namespace

Var exp(const Var& a) {
    return unary_op(
        a, [](double x) { return std::exp(x); },
        [](double x) { return std::exp(x); }, "exp");
}

Var softplus(const Var& a) {
    auto fwd = [](double x) {
        if (x > 30.0) return x;
        if (x < -30.0) return std::exp(x);
        return std::log1p(std::exp(x));
    };
    auto bwd = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    return unary_op(a, fwd, bwd, "softplus");
}

Var relu(const Var& a) {
    return unary_op(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

Var abs(const Var& a) {
    return unary_op(
        a, [](double x) { return std::fabs(x); },
        [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }, "abs");
}

Var expm1x(const Var& a) {
    auto fwd = [](double x) {
        if (std::fabs(x) < 1e-8) return 1.0;
        return std::expm1(x) / x;
    };
    auto bwd = [](double x) {
        if (std::fabs(x) < 1e-8) return 0.5;
        return (std::exp(x) * (x - 1.0) + 1.0) / (x * x);
    };
    return unary_op(a, fwd, bwd, "expm1x");
}

// ---- row-wise ops -------------------------------------------------------

Var softmax_rows(const Var& a) {
    Tensor out = softmax_rows(a.val());
    auto n = new_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        n->backprop = [self, an] {
            const std::size_t cols = self->value.dim(self->value.rank() - 1);
            const std::size_t rows = self->value.size() / cols;
            const double* y = self->value.data();
            const double* g = self->grad.data();
            double* d = ensure_grad(an).mut();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* yr = y + r * cols;
                const double* gr = g + r * cols;
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j) dot += yr[j] * gr[j];
                double* dr = d + r * cols;
                for (std::size_t j = 0; j < cols; ++j) dr[j] += yr[j] * (gr[j] - dot);
            }
        };
    }
    return Var(n);
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Tensor& xv = x.val();
    check_arg(eps > 0.0, "layer_norm: eps must be positive");
    check_arg(xv.rank() >= 1, "layer_norm: input must have rank >= 1");
    const std::size_t cols = xv.dim(xv.rank() - 1);
    check_arg(gamma.val().size() == cols && beta.val().size() == cols,
              "layer_norm: gamma/beta size must match last axis");
    const std::size_t rows = xv.size() / cols;

    Tensor xhat = Tensor::zeros(xv.shape());
    Tensor inv = Tensor::zeros({rows});
    Tensor out = Tensor::zeros(xv.shape());
    {
        const double* px = xv.data();
        const double* pg = gamma.val().data();
        const double* pb = beta.val().data();
        double* ph = xhat.mut();
        double* pi = inv.mut();
        double* po = out.mut();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = px + r * cols;
            double mean = 0.0;
            for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
            mean /= static_cast<double>(cols);
            double var = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                double d = xr[j] - mean;
                var += d * d;
            }
            var /= static_cast<double>(cols);
            double is = 1.0 / std::sqrt(var + eps);
            pi[r] = is;
            for (std::size_t j = 0; j < cols; ++j) {
                double h = (xr[j] - mean) * is;
                ph[r * cols + j] = h;
                po[r * cols + j] = pg[j] * h + pb[j];
            }
        }
    }

    auto n = new_node(std::move(out), {x, gamma, beta});
    if (n->requires_grad) {
        Node* self = n.get();
        auto xn = x.node();
        auto gn = gamma.node();
        auto bn = beta.node();
        n->backprop = [self, xn, gn, bn, xhat, inv, rows, cols] {
            const double* g = self->grad.data();
            const double* h = xhat.data();
            const double* is = inv.data();
            const double* gam = gn->value.data();
            if (gn->requires_grad) {
                double* dg = ensure_grad(gn).mut();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < cols; ++j)
                        dg[j] += g[r * cols + j] * h[r * cols + j];
            }
            if (bn->requires_grad) {
                double* db = ensure_grad(bn).mut();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < cols; ++j) db[j] += g[r * cols + j];
            }
            if (xn->requires_grad) {
                double* dx = ensure_grad(xn).mut();
                std::vector<double> gg(cols);
                for (std::size_t r = 0; r < rows; ++r) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                        gg[j] = g[r * cols + j] * gam[j];
                        m1 += gg[j];
                        m2 += gg[j] * h[r * cols + j];
                    }
                    m1 /= static_cast<double>(cols);
                    m2 /= static_cast<double>(cols);
                    for (std::size_t j = 0; j < cols; ++j) {
                        dx[r * cols + j] +=
                            is[r] * (gg[j] - m1 - h[r * cols + j] * m2);
                    }
                }
            }
        };
    }
    return Var(n);
}

// ---- shape ops ------------------------------------------------------------

Var reshape(const Var& a, Shape shape) {
    Tensor out = a.val().reshaped(shape);  // shares the buffer
    auto n = new_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        n->backprop = [self, an] {
            accum_grad(an, self->grad.reshaped(an->value.shape()));
        };
    }
    return Var(n);
}

Var permute(const Var& a, const std::vector<std::size_t>& axes) {
    Tensor out = permute_copy(a.val(), axes);
    auto n = new_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        auto inv = inverse_axes(axes);
        n->backprop = [self, an, inv] {
            accum_grad(an, permute_copy(self->grad, inv));
        };
    }
    return Var(n);
}

Var slice_last(const Var& a, std::size_t lo, std::size_t hi) {
    const Tensor& x = a.val();
    const std::size_t cols = x.dim(x.rank() - 1);
    check_arg(lo < hi && hi <= cols, "slice_last: bad range");
    const std::size_t w = hi - lo;
    const std::size_t rows = x.size() / cols;
    Shape os = x.shape();
    os.back() = w;
    Tensor out = Tensor::zeros(os);
    {
        const double* src = x.data();
        double* dst = out.mut();
        for (std::size_t r = 0; r < rows; ++r)
            std::memcpy(dst + r * w, src + r * cols + lo, w * sizeof(double));
    }
    auto n = new_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        n->backprop = [self, an, lo, w, cols, rows] {
            double* d = ensure_grad(an).mut();
            const double* g = self->grad.data();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < w; ++j)
                    d[r * cols + lo + j] += g[r * w + j];
        };
    }
    return Var(n);
}

Var concat_last(const std::vector<Var>& parts) {
    check_arg(!parts.empty(), "concat_last: no inputs");
    const Tensor& first = parts[0].val();
    const std::size_t r = first.rank();
    std::size_t total = 0;
    for (const Var& p : parts) {
        const Tensor& t = p.val();
        check_arg(t.rank() == r, "concat_last: rank mismatch");
        for (std::size_t d = 0; d + 1 < r; ++d)
            check_arg(t.dim(d) == first.dim(d), "concat_last: leading dims differ");
        total += t.dim(r - 1);
    }
    Shape os = first.shape();
    os.back() = total;
    Tensor out = Tensor::zeros(os);
    const std::size_t rows = out.size() / total;
    std::vector<std::size_t> offsets;
    {
        double* dst = out.mut();
        std::size_t off = 0;
        for (const Var& p : parts) {
            const std::size_t w = p.val().dim(r - 1);
            offsets.push_back(off);
            const double* src = p.val().data();
            for (std::size_t row = 0; row < rows; ++row)
                std::memcpy(dst + row * total + off, src + row * w,
                            w * sizeof(double));
            off += w;
        }
    }
    std::vector<Var> ins = parts;
    auto n = std::make_shared<Node>();
    n->value = out;
    for (const Var& v : ins) {
        if (v.requires_grad()) {
            n->requires_grad = true;
            n->parents.push_back(v.node());
        }
    }
    if (n->requires_grad) {
        Node* self = n.get();
        std::vector<std::shared_ptr<Node>> nodes;
        for (const Var& v : ins) nodes.push_back(v.node());
        n->backprop = [self, nodes, offsets, rows, total, r] {
            const double* g = self->grad.data();
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                if (!nodes[i]->requires_grad) continue;
                const std::size_t w = nodes[i]->value.dim(r - 1);
                double* d = ensure_grad(nodes[i]).mut();
                for (std::size_t row = 0; row < rows; ++row)
                    for (std::size_t j = 0; j < w; ++j)
                        d[row * w + j] += g[row * total + offsets[i] + j];
            }
        };
    }
    return Var(n);
}

Var broadcast_to(const Var& a, const Shape& shape) {
    Shape chk = broadcast_shape(a.val().shape(), shape);
    check_arg(chk == shape, "broadcast_to: source does not broadcast to target");
    Tensor out = bcast_binary(a.val(), Tensor::zeros(shape),
                              [](double x, double) { return x; });
    auto n = new_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        n->backprop = [self, an] {
            accum_grad(an, reduce_to(self->grad, an->value.shape()));
        };
    }
    return Var(n);
}

// ---- reductions -----------------------------------------------------------

Var sum_all(const Var& a) {
    double s = 0.0;
    const double* p = a.val().data();
    for (std::size_t i = 0; i < a.val().size(); ++i) s += p[i];
    auto n = new_node(Tensor::scalar(s), {a});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        n->backprop = [self, an] {
            const double g = self->grad.data()[0];
            double* d = ensure_grad(an).mut();
            for (std::size_t i = 0; i < an->value.size(); ++i) d[i] += g;
        };
    }
    return Var(n);
}

Var mean_all(const Var& a) {
    check_arg(a.val().size() > 0, "mean_all: empty tensor");
    return scale(sum_all(a), 1.0 / static_cast<double>(a.val().size()));
}

Var reduce_sum(const Var& a, std::size_t axis) {
    const Tensor& x = a.val();
    check_arg(axis < x.rank(), "reduce_sum: axis out of range");
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
    for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
    const std::size_t nred = x.dim(axis);
    Shape os;
    for (std::size_t d = 0; d < x.rank(); ++d)
        if (d != axis) os.push_back(x.dim(d));
    if (os.empty()) os.push_back(1);
    Tensor out = Tensor::zeros(os);
    {
        const double* src = x.data();
        double* dst = out.mut();
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < nred; ++j)
                for (std::size_t i = 0; i < inner; ++i)
                    dst[o * inner + i] += src[(o * nred + j) * inner + i];
    }
    auto n = new_node(std::move(out), {a});
    if (n->requires_grad) {
        Node* self = n.get();
        auto an = a.node();
        n->backprop = [self, an, outer, inner, nred] {
            const double* g = self->grad.data();
            double* d = ensure_grad(an).mut();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t j = 0; j < nred; ++j)
                    for (std::size_t i = 0; i < inner; ++i)
                        d[(o * nred + j) * inner + i] += g[o * inner + i];
        };
    }
    return Var(n);
}

Var gather_rows(const Var& table, const std::vector<std::size_t>& idx) {
    const Tensor& t = table.val();
    check_arg(t.rank() == 2, "gather_rows: table must be 2-d");
    const std::size_t rowsz = t.dim(1);
    for (std::size_t i : idx)
        check_arg(i < t.dim(0), "gather_rows: index out of range");
    Tensor out = Tensor::zeros({idx.size(), rowsz});
    {
        const double* src = t.data();
        double* dst = out.mut();
        for (std::size_t l = 0; l < idx.size(); ++l)
            std::memcpy(dst + l * rowsz, src + idx[l] * rowsz,
                        rowsz * sizeof(double));
    }
    auto n = new_node(std::move(out), {table});
    if (n->requires_grad) {
        Node* self = n.get();
        auto tn = table.node();
        n->backprop = [self, tn, idx, rowsz] {
            double* d = ensure_grad(tn).mut();
            const double* g = self->grad.data();
            for (std::size_t l = 0; l < idx.size(); ++l)
                for (std::size_t j = 0; j < rowsz; ++j)
                    d[idx[l] * rowsz + j] += g[l * rowsz + j];
        };
    }
    return Var(n);
}

// ---- selective scan ---------------------------------------------------

void scan_kernel(const double* Abar, const double* Bbar, const double* C,
                 const double* U, const double* D, double* Y, double* Hstack,
                 std::size_t T, std::size_t di, std::size_t ds) {
    const std::size_t plane = di * ds;
    for (std::size_t k = 0; k < T; ++k) {
        const double* Ak = Abar + k * plane;
        const double* Bk = Bbar + k * plane;
        const double* Ck = C + k * ds;
        const double* Hp = (k == 0) ? nullptr : Hstack + (k - 1) * plane;
        double* Hk = Hstack + k * plane;
        for (std::size_t i = 0; i < di; ++i) {
            const double u = U[k * di + i];
            double y = 0.0;
            const std::size_t base = i * ds;
            if (Hp) {
                for (std::size_t j = 0; j < ds; ++j) {
                    double h = Ak[base + j] * Hp[base + j] + Bk[base + j] * u;
                    Hk[base + j] = h;
                    y += Ck[j] * h;
                }
            } else {
                for (std::size_t j = 0; j < ds; ++j) {
                    double h = Bk[base + j] * u;
                    Hk[base + j] = h;
                    y += Ck[j] * h;
                }
            }
            Y[k * di + i] = y + D[i] * u;
        }
    }
}

Var selective_scan_graph(const Var& Abar, const Var& Bbar, const Var& C,
                         const Var& U, const Var& D) {
    const Tensor& Av = Abar.val();
    const Tensor& Bv = Bbar.val();
    const Tensor& Cv = C.val();
    const Tensor& Uv = U.val();
    const Tensor& Dv = D.val();
    check_arg(Av.rank() == 3, "scan: Abar must be (T, d_inner, d_state)");
    const std::size_t T = Av.dim(0), di = Av.dim(1), ds = Av.dim(2);
    check_arg(Bv.same_shape(Av), "scan: Bbar shape must match Abar");
    check_arg(Cv.rank() == 2 && Cv.dim(0) == T && Cv.dim(1) == ds,
              "scan: C must be (T, d_state)");
    check_arg(Uv.rank() == 2 && Uv.dim(0) == T && Uv.dim(1) == di,
              "scan: U must be (T, d_inner)");
    check_arg(Dv.size() == di, "scan: D must have d_inner entries");

    Tensor Y = Tensor::zeros({T, di});
    Tensor Hstack = Tensor::zeros({T, di, ds});
    scan_kernel(Av.data(), Bv.data(), Cv.data(), Uv.data(), Dv.data(), Y.mut(),
                Hstack.mut(), T, di, ds);

    auto n = new_node(std::move(Y), {Abar, Bbar, C, U, D});
    if (n->requires_grad) {
        Node* self = n.get();
        auto na = Abar.node();
        auto nb = Bbar.node();
        auto nc = C.node();
        auto nu = U.node();
        auto nd = D.node();
        n->backprop = [self, na, nb, nc, nu, nd, Hstack, T, di, ds] {
            const std::size_t plane = di * ds;
            const double* gY = self->grad.data();
            const double* H = Hstack.data();
            const double* Av = na->value.data();
            const double* Bv = nb->value.data();
            const double* Cv = nc->value.data();
            const double* Uv = nu->value.data();
            const double* Dv = nd->value.data();
            double* dA = na->requires_grad ? ensure_grad(na).mut() : nullptr;
            double* dB = nb->requires_grad ? ensure_grad(nb).mut() : nullptr;
            double* dC = nc->requires_grad ? ensure_grad(nc).mut() : nullptr;
            double* dU = nu->requires_grad ? ensure_grad(nu).mut() : nullptr;
            double* dD = nd->requires_grad ? ensure_grad(nd).mut() : nullptr;

            std::vector<double> carry(plane, 0.0);  // Abar_{k+1} (*) lambda_{k+1}
            std::vector<double> lam(plane, 0.0);
            for (std::size_t k = T; k-- > 0;) {
                const double* Ak = Av + k * plane;
                const double* Bk = Bv + k * plane;
                const double* Ck = Cv + k * ds;
                const double* Hk = H + k * plane;
                const double* Hp = (k == 0) ? nullptr : H + (k - 1) * plane;
                for (std::size_t i = 0; i < di; ++i) {
                    const double gy = gY[k * di + i];
                    const double u = Uv[k * di + i];
                    const std::size_t base = i * ds;
                    double bdot = 0.0;
                    for (std::size_t j = 0; j < ds; ++j) {
                        const double l = carry[base + j] + Ck[j] * gy;
                        lam[base + j] = l;
                        bdot += Bk[base + j] * l;
                    }
                    if (dA && Hp) {
                        for (std::size_t j = 0; j < ds; ++j)
                            dA[k * plane + base + j] += lam[base + j] * Hp[base + j];
                    }
                    if (dB) {
                        for (std::size_t j = 0; j < ds; ++j)
                            dB[k * plane + base + j] += lam[base + j] * u;
                    }
                    if (dC) {
                        for (std::size_t j = 0; j < ds; ++j)
                            dC[k * ds + j] += gy * Hk[base + j];
                    }
                    if (dU) dU[k * di + i] += bdot + Dv[i] * gy;
                    if (dD) dD[i] += gy * u;
                    for (std::size_t j = 0; j < ds; ++j)
                        carry[base + j] = Ak[base + j] * lam[base + j];
                }
            }
        };
    }
    return Var(n);
}

}  // namespace stms
