#include "diffquant/tensor.hpp"

#include <cmath>
#include <limits>

#include "diffquant/errors.hpp"
#include "diffquant/parallel.hpp"

namespace diffquant {

namespace {

void check_rank2(const Tensor& t, const char* who) {
    if (t.rank() != 2) throw IncompatibleError(std::string(who) + ": rank-2 tensor required");
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
    if (shape_product(shape) != static_cast<std::int64_t>(data.size())) {
        throw IncompatibleError("tensor: shape does not match element count");
    }
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
    const auto n = shape_product(shape);
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(static_cast<std::size_t>(n), 0.0);
    return t;
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.data) v = value;
    return t;
}

Tensor Tensor::from_vector(std::vector<double> values) {
    Tensor t;
    t.shape = {static_cast<std::int64_t>(values.size())};
    t.data = std::move(values);
    return t;
}

double& Tensor::at(std::int64_t r, std::int64_t c) {
    return data[static_cast<std::size_t>(r * shape[1] + c)];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
    return data[static_cast<std::size_t>(r * shape[1] + c)];
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::int64_t shape_product(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d <= 0) throw IncompatibleError("tensor: dimensions must be positive");
        n *= d;
    }
    return n;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

Tensor reshape(const Tensor& x, std::vector<std::int64_t> shape) {
    if (shape_product(shape) != x.size()) {
        throw IncompatibleError("reshape: element count mismatch");
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data = x.data;
    return t;
}

namespace {

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F&& f, const char* who) {
    if (!same_shape(a, b)) throw IncompatibleError(std::string(who) + ": shape mismatch");
    Tensor out = a;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return zip(a, b, [](double x, double y) { return x + y; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return zip(a, b, [](double x, double y) { return x - y; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return zip(a, b, [](double x, double y) { return x * y; }, "mul");
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (auto& v : out.data) v *= c;
    return out;
}

Tensor add_scalar(const Tensor& a, double c) {
    Tensor out = a;
    for (auto& v : out.data) v += c;
    return out;
}

Tensor add_rowwise_bias(const Tensor& a, const Tensor& bias) {
    check_rank2(a, "add_rowwise_bias");
    if (bias.rank() != 1 || bias.dim(0) != a.dim(1)) {
        throw IncompatibleError("add_rowwise_bias: bias length must equal column count");
    }
    Tensor out = a;
    const std::int64_t rows = a.dim(0), cols = a.dim(1);
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) out.data[static_cast<std::size_t>(i * cols + j)] += bias[j];
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul");
    check_rank2(b, "matmul");
    if (a.dim(1) != b.dim(0)) throw IncompatibleError("matmul: inner dimensions disagree");
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    // Each output row accumulates contributions in ascending k; the per-element
    // addition sequence is identical to a plain dot product loop.
    parallel_for(m, [&](std::int64_t i) {
        double* acc = &out.data[static_cast<std::size_t>(i * n)];
        const double* arow = &a.data[static_cast<std::size_t>(i * k)];
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = &b.data[static_cast<std::size_t>(kk * n)];
            for (std::int64_t j = 0; j < n; ++j) acc[j] += av * brow[j];
        }
    });
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul_nt");
    check_rank2(b, "matmul_nt");
    if (a.dim(1) != b.dim(1)) throw IncompatibleError("matmul_nt: inner dimensions disagree");
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor out = Tensor::zeros({m, n});
    parallel_for(m, [&](std::int64_t i) {
        const double* arow = &a.data[static_cast<std::size_t>(i * k)];
        double* orow = &out.data[static_cast<std::size_t>(i * n)];
        for (std::int64_t j = 0; j < n; ++j) {
            const double* brow = &b.data[static_cast<std::size_t>(j * k)];
            double acc = 0.0;
            for (std::int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            orow[j] = acc;
        }
    });
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    check_rank2(a, "matmul_tn");
    check_rank2(b, "matmul_tn");
    if (a.dim(0) != b.dim(0)) throw IncompatibleError("matmul_tn: inner dimensions disagree");
    const std::int64_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    parallel_for(m, [&](std::int64_t i) {
        double* orow = &out.data[static_cast<std::size_t>(i * n)];
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = a.data[static_cast<std::size_t>(kk * m + i)];
            const double* brow = &b.data[static_cast<std::size_t>(kk * n)];
            for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    });
    return out;
}

double sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data) acc += v;
    return acc;
}

double mean(const Tensor& x) {
    if (x.size() == 0) throw InputError("mean: empty tensor");
    return sum(x) / static_cast<double>(x.size());
}

double min_value(const Tensor& x) {
    if (x.size() == 0) throw InputError("min: empty tensor");
    double m = x[0];
    for (double v : x.data) m = v < m ? v : m;
    return m;
}

double max_value(const Tensor& x) {
    if (x.size() == 0) throw InputError("max: empty tensor");
    double m = x[0];
    for (double v : x.data) m = v > m ? v : m;
    return m;
}

double max_abs(const Tensor& x) {
    if (x.size() == 0) throw InputError("max_abs: empty tensor");
    double m = 0.0;
    for (double v : x.data) {
        const double a = std::fabs(v);
        m = a > m ? a : m;
    }
    return m;
}

Tensor get_row(const Tensor& x, std::int64_t row) {
    check_rank2(x, "get_row");
    const std::int64_t d = x.dim(1);
    Tensor out = Tensor::zeros({1, d});
    for (std::int64_t j = 0; j < d; ++j) out[j] = x.at(row, j);
    return out;
}

void set_row(Tensor& x, std::int64_t row, const Tensor& values) {
    check_rank2(x, "set_row");
    const std::int64_t d = x.dim(1);
    if (values.size() != d) throw IncompatibleError("set_row: length mismatch");
    for (std::int64_t j = 0; j < d; ++j) x.at(row, j) = values[j];
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    check_rank2(a, "concat_cols");
    check_rank2(b, "concat_cols");
    if (a.dim(0) != b.dim(0)) throw IncompatibleError("concat_cols: row counts differ");
    const std::int64_t n = a.dim(0), p = a.dim(1), q = b.dim(1);
    Tensor out = Tensor::zeros({n, p + q});
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < p; ++j) out.at(i, j) = a.at(i, j);
        for (std::int64_t j = 0; j < q; ++j) out.at(i, p + j) = b.at(i, j);
    }
    return out;
}

Tensor take_rows(const Tensor& x, const std::vector<std::int64_t>& rows) {
    check_rank2(x, "take_rows");
    const std::int64_t d = x.dim(1);
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(rows.size()), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::int64_t j = 0; j < d; ++j) {
            out.at(static_cast<std::int64_t>(i), j) = x.at(rows[i], j);
        }
    }
    return out;
}

}  // namespace diffquant
