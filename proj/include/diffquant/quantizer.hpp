#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffquant/tensor.hpp"

namespace diffquant {

enum class Granularity { PerTensor, PerChannel };

// Uniform affine quantizer parameters. Convention used throughout:
//   x_int = clamp(round_half_even(x / s) - z, p_min, p_max)
//   x_sim = s * (x_int + z)
// so the representable window is [s*(p_min+z), s*(p_max+z)]. z is an integer
// offset in step units and may lie outside [p_min, p_max]; it is bounded only
// by a wide guard so s*(k+z) stays exact in doubles.
struct QuantParams {
    std::vector<double> scales;        // one entry per-tensor, or per channel slice
    std::vector<std::int64_t> zero_points;
    int bits = 8;
    bool is_signed = false;
    Granularity granularity = Granularity::PerTensor;
    int axis = 0;  // channel axis when per-channel

    std::int64_t p_min() const;
    std::int64_t p_max() const;
    void validate() const;  // throws ConfigError on any bad field

    static QuantParams per_tensor(double scale, std::int64_t zero_point, int bits,
                                  bool is_signed);
};

// |z| guard: keeps s*(k+z) representable without precision loss.
inline constexpr std::int64_t kZeroPointGuard = std::int64_t(1) << 40;

struct QuantMetric {
    enum class Kind { Lp, L1, Cosine, KL };
    Kind kind = Kind::Lp;
    double p = 2.4;   // Lp only; requires p >= 1
    int bins = 2048;  // KL only; requires bins >= 2

    static QuantMetric lp(double p);
    static QuantMetric l1();
    static QuantMetric cosine();
    static QuantMetric kl(int bins = 2048);
    void validate() const;
    std::string name() const;  // "lp2.4", "l1", "cosine", "kl"
};

struct SearchConfig {
    int num_candidates = 100;
    double min_scale_fraction = 0.2;
    bool symmetric = false;
    void validate() const;
};

double round_half_even(double v);

// Candidate scale i of the search grid over [lo, hi]; endpoints exact.
double candidate_scale(double lo, double hi, int i, int num_candidates);

// Produces the integer tensor (integral values stored as doubles, exact).
Tensor quantize(const Tensor& x, const QuantParams& q);

// Fake quantization: quantize then rescale back to the real line.
Tensor quant_dequant(const Tensor& x, const QuantParams& q);

// Distance between a simulated tensor and its full-precision reference.
double metric_distance(const Tensor& x_sim, const Tensor& x_fp, const QuantMetric& m);

// Metric-driven search over num_candidates scales linearly spaced in
// [min_scale_fraction * s_max, s_max]; symmetric fixes z = 0, asymmetric
// derives z = round_half_even(min / s) per candidate. Ties break toward the
// smallest scale. All-zero slices get scale 1, z 0.
QuantParams fit_params(const Tensor& x, const QuantMetric& m, const SearchConfig& cfg,
                       int bits, bool is_signed, Granularity granularity, int axis = 0);

// Range-based parameters without any search (uncalibrated baseline).
QuantParams minmax_params(const Tensor& x, int bits, bool is_signed, bool symmetric,
                          Granularity granularity, int axis = 0);

// Slice layout along an axis: outer * axis_dim * inner element blocks.
struct AxisSlices {
    std::int64_t outer = 1;
    std::int64_t axis_dim = 1;
    std::int64_t inner = 1;
};
AxisSlices axis_slices(const std::vector<std::int64_t>& shape, int axis);
Tensor extract_slice(const Tensor& x, int axis, std::int64_t channel);

}  // namespace diffquant
