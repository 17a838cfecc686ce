#pragma once

#include <cstdint>
#include <vector>

namespace diffquant {

// Dense row-major 64-bit float array. Treated as an immutable value by all
// operations (they return fresh tensors); mutation is for construction only.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::int64_t> shape_in, std::vector<double> data_in);

    static Tensor zeros(std::vector<std::int64_t> shape);
    static Tensor full(std::vector<std::int64_t> shape, double value);
    static Tensor from_vector(std::vector<double> values);  // rank-1

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    // Rank-2 element access.
    double& at(std::int64_t r, std::int64_t c);
    double at(std::int64_t r, std::int64_t c) const;

    bool all_finite() const;
};

std::int64_t shape_product(const std::vector<std::int64_t>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

// Returns a copy with a new shape; element count must match.
Tensor reshape(const Tensor& x, std::vector<std::int64_t> shape);

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

// Adds bias[j] to every row element a[i][j]; a rank-2, bias rank-1.
Tensor add_rowwise_bias(const Tensor& a, const Tensor& bias);

// Matrix products with a fixed ascending reduction order per output element,
// parallelized only across independent outputs (bit-identical for any thread
// count). matmul_nt(a, b) = a * b^T; matmul_tn(a, b) = a^T * b.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// Serial fixed-order reductions.
double sum(const Tensor& x);
double mean(const Tensor& x);
double min_value(const Tensor& x);
double max_value(const Tensor& x);
double max_abs(const Tensor& x);

// Row utilities for [n x d] tensors.
Tensor get_row(const Tensor& x, std::int64_t row);
void set_row(Tensor& x, std::int64_t row, const Tensor& values);
Tensor concat_cols(const Tensor& a, const Tensor& b);  // [n x p] ++ [n x q]
Tensor take_rows(const Tensor& x, const std::vector<std::int64_t>& rows);

}  // namespace diffquant
