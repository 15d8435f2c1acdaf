#include "stms/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace stms {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

void shape_fail(const std::string& msg) {
    throw std::invalid_argument("shape error: " + msg);
}

std::size_t Tensor::num_elems(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) {
        if (d == 0) shape_fail("zero-sized dimension in " + shape_str(s));
        n *= d;
    }
    return n;
}

Tensor Tensor::zeros(Shape shape) {
    Tensor t;
    std::size_t n = num_elems(shape);
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(n, 0.0);
    return t;
}

Tensor Tensor::full(Shape shape, double v) {
    Tensor t = zeros(std::move(shape));
    for (double& x : *t.data_) x = v;
    return t;
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> v) {
    if (num_elems(shape) != v.size())
        shape_fail("from_vector: " + shape_str(shape) + " needs " +
                   std::to_string(num_elems(shape)) + " values, got " +
                   std::to_string(v.size()));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<double>>(std::move(v));
    return t;
}

double Tensor::at(const std::vector<std::size_t>& idx) const {
    if (idx.size() != shape_.size()) shape_fail("at: rank mismatch");
    std::size_t flat = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= shape_[i]) shape_fail("at: index out of range");
        flat = flat * shape_[i] + idx[i];
    }
    return (*data_)[flat];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (num_elems(shape) != size())
        shape_fail("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

Tensor Tensor::clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    return t;
}

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] += s;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a + p * m;
        const double* bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double api = ap[i];
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        shape_fail("matmul expects rank-2, got " + shape_str(a.shape()) +
                   " x " + shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        shape_fail("matmul inner mismatch " + shape_str(a.shape()) + " x " +
                   shape_str(b.shape()));
    Tensor c = Tensor::zeros({a.dim(0), b.dim(1)});
    matmul_nn(a.data(), b.data(), c.mut(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

Tensor softmax_rows(const Tensor& a) {
    if (a.rank() < 1) shape_fail("softmax_rows needs rank >= 1");
    std::size_t n = a.dim(a.rank() - 1);
    std::size_t rows = a.size() / n;
    Tensor out = Tensor::zeros(a.shape());
    const double* in = a.data();
    double* o = out.mut();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in + r * n;
        double* orow = o + r * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j)
            if (row[j] > mx) mx = row[j];
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (std::size_t j = 0; j < n; ++j) orow[j] /= sum;
    }
    return out;
}

Tensor layer_norm(const Tensor& y, const Tensor& gamma, const Tensor& beta,
                  double eps) {
    check_arg(eps > 0.0, "layer_norm: eps must be positive");
    if (y.rank() < 1) shape_fail("layer_norm needs rank >= 1");
    std::size_t n = y.dim(y.rank() - 1);
    if (gamma.size() != n || beta.size() != n)
        shape_fail("layer_norm: gamma/beta must have " + std::to_string(n) +
                   " entries");
    std::size_t rows = y.size() / n;
    Tensor out = Tensor::zeros(y.shape());
    const double* in = y.data();
    const double* g = gamma.data();
    const double* b = beta.data();
    double* o = out.mut();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in + r * n;
        double* orow = o + r * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double d = row[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j)
            orow[j] = g[j] * (row[j] - mu) * inv + b[j];
    }
    return out;
}

Tensor xavier_uniform_init(const Shape& shape, Rng rng) {
    check_arg(!shape.empty(), "xavier_uniform_init: empty shape");
    double fan_in, fan_out;
    if (shape.size() == 1) {
        fan_in = 1.0;
        fan_out = static_cast<double>(shape[0]);
    } else {
        fan_in = static_cast<double>(shape.front());
        fan_out = static_cast<double>(shape.back());
    }
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t = Tensor::zeros(shape);
    double* p = t.mut();
    for (std::size_t i = 0; i < t.size(); ++i) p[i] = rng.uniform(-bound, bound);
    return t;
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) shape_fail("transpose2d expects rank-2");
    std::size_t m = a.dim(0), n = a.dim(1);
    Tensor t = Tensor::zeros({n, m});
    const double* in = a.data();
    double* o = t.mut();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) o[j * m + i] = in[i * n + j];
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        shape_fail("max_abs_diff: " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
    double mx = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = std::fabs(a[i] - b[i]);
        if (d > mx) mx = d;
    }
    return mx;
}

}  // namespace stms
