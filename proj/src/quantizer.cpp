#include "diffquant/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "diffquant/errors.hpp"

namespace diffquant {

namespace {

std::int64_t int_range_min(int bits, bool is_signed) {
    return is_signed ? -(std::int64_t(1) << (bits - 1)) : 0;
}

std::int64_t int_range_max(int bits, bool is_signed) {
    return is_signed ? (std::int64_t(1) << (bits - 1)) - 1 : (std::int64_t(1) << bits) - 1;
}

std::int64_t clamp_i64(std::int64_t v, std::int64_t lo, std::int64_t hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

struct SliceParams {
    double scale;
    std::int64_t zero_point;
};

// Rounded ratio clamped in double space first, so the int64 cast can never
// overflow on extreme x/s ratios; the final clamp makes the pre-clamp exact.
std::int64_t quantize_element(double x, SliceParams p, std::int64_t p_min,
                              std::int64_t p_max) {
    double r = round_half_even(x / p.scale);
    const double lo = static_cast<double>(p_min + p.zero_point);
    const double hi = static_cast<double>(p_max + p.zero_point);
    r = r < lo ? lo : (r > hi ? hi : r);
    return clamp_i64(static_cast<std::int64_t>(r) - p.zero_point, p_min, p_max);
}

// Single-slice quantize/dequant into a caller-provided buffer.
void quant_dequant_slice(const double* x, double* out, std::int64_t n, SliceParams p,
                         std::int64_t p_min, std::int64_t p_max) {
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t k = quantize_element(x[i], p, p_min, p_max);
        out[i] = p.scale * static_cast<double>(k + p.zero_point);
    }
}

void check_finite(const Tensor& x, const char* who) {
    if (!x.all_finite()) throw InputError(std::string(who) + ": non-finite input element");
}

SliceParams slice_params(const QuantParams& q, std::int64_t channel) {
    if (q.granularity == Granularity::PerTensor) {
        return {q.scales[0], q.zero_points[0]};
    }
    return {q.scales[static_cast<std::size_t>(channel)],
            q.zero_points[static_cast<std::size_t>(channel)]};
}

template <typename F>
void for_each_slice(const Tensor& x, const QuantParams& q, F&& body) {
    if (q.granularity == Granularity::PerTensor) {
        body(0, x.data.data(), /*stride_block=*/x.size(), /*offset=*/std::int64_t(0));
        return;
    }
    const AxisSlices s = axis_slices(x.shape, q.axis);
    if (static_cast<std::int64_t>(q.scales.size()) != s.axis_dim) {
        throw IncompatibleError("quantize: per-channel parameter count mismatch");
    }
    for (std::int64_t c = 0; c < s.axis_dim; ++c) {
        for (std::int64_t o = 0; o < s.outer; ++o) {
            const std::int64_t base = (o * s.axis_dim + c) * s.inner;
            body(c, x.data.data() + base, s.inner, base);
        }
    }
}

double lp_distance(const Tensor& a, const Tensor& b, double p) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) acc += std::pow(std::fabs(a[i] - b[i]), p);
    return acc / static_cast<double>(a.size());
}

double l1_distance(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

double cosine_distance(const Tensor& a, const Tensor& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 && nb == 0.0) return 0.0;
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

double kl_distance(const Tensor& sim, const Tensor& fp, int bins) {
    const double lo = std::min(min_value(sim), min_value(fp));
    const double hi = std::max(max_value(sim), max_value(fp));
    std::vector<double> h_fp(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> h_sim(static_cast<std::size_t>(bins), 0.0);
    const double width = (hi - lo) / static_cast<double>(bins);
    auto bin_of = [&](double v) -> std::size_t {
        if (width <= 0.0 || v >= hi) return static_cast<std::size_t>(bins - 1);
        auto b = static_cast<std::int64_t>((v - lo) / width);
        return static_cast<std::size_t>(clamp_i64(b, 0, bins - 1));
    };
    for (double v : fp.data) h_fp[bin_of(v)] += 1.0;
    for (double v : sim.data) h_sim[bin_of(v)] += 1.0;
    constexpr double kSmooth = 1e-10;
    double sum_fp = 0.0, sum_sim = 0.0;
    for (int b = 0; b < bins; ++b) {
        h_fp[static_cast<std::size_t>(b)] += kSmooth;
        h_sim[static_cast<std::size_t>(b)] += kSmooth;
        sum_fp += h_fp[static_cast<std::size_t>(b)];
        sum_sim += h_sim[static_cast<std::size_t>(b)];
    }
    double kl = 0.0;
    for (int b = 0; b < bins; ++b) {
        const double pf = h_fp[static_cast<std::size_t>(b)] / sum_fp;
        const double ps = h_sim[static_cast<std::size_t>(b)] / sum_sim;
        kl += pf * std::log(pf / ps);
    }
    return kl;
}

struct SliceFit {
    double scale = 1.0;
    std::int64_t zero_point = 0;
};

double slice_max(const double* x, std::int64_t n, bool absolute) {
    double m = absolute ? 0.0 : x[0];
    for (std::int64_t i = 0; i < n; ++i) {
        const double v = absolute ? std::fabs(x[i]) : x[i];
        m = v > m ? v : m;
    }
    return m;
}

double slice_min(const double* x, std::int64_t n) {
    double m = x[0];
    for (std::int64_t i = 0; i < n; ++i) m = x[i] < m ? x[i] : m;
    return m;
}

bool slice_all_zero(const double* x, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        if (x[i] != 0.0) return false;
    }
    return true;
}

std::int64_t derive_zero_point(double min_v, double s) {
    const double z = round_half_even(min_v / s);
    return clamp_i64(static_cast<std::int64_t>(z), -kZeroPointGuard, kZeroPointGuard);
}

// Upper end of the scale grid for one contiguous slice. A constant nonzero
// slice has zero span; it falls back to the magnitude-based scale, which
// represents the constant exactly at x_int = 0.
double slice_s_max(const double* x, std::int64_t n, bool symmetric, std::int64_t p_min,
                   std::int64_t p_max) {
    if (symmetric) return slice_max(x, n, true) / static_cast<double>(p_max);
    const double mn = slice_min(x, n);
    const double mx = slice_max(x, n, false);
    if (mx > mn) return (mx - mn) / static_cast<double>(p_max - p_min);
    return std::fabs(mx) / static_cast<double>(p_max);
}

SliceFit fit_slice(const double* x, std::int64_t n, const QuantMetric& m,
                   const SearchConfig& cfg, std::int64_t p_min, std::int64_t p_max) {
    if (slice_all_zero(x, n)) return {1.0, 0};
    const double s_max = slice_s_max(x, n, cfg.symmetric, p_min, p_max);
    const double s_lo = cfg.min_scale_fraction * s_max;
    const double mn = slice_min(x, n);

    Tensor fp = Tensor::from_vector(std::vector<double>(x, x + n));
    Tensor sim = fp;
    double best_d = 0.0;
    SliceFit best{};
    bool have_best = false;
    for (int i = 0; i < cfg.num_candidates; ++i) {
        const double s = candidate_scale(s_lo, s_max, i, cfg.num_candidates);
        if (!(s > 0.0)) continue;
        const std::int64_t z = cfg.symmetric ? 0 : derive_zero_point(mn, s);
        quant_dequant_slice(x, sim.data.data(), n, {s, z}, p_min, p_max);
        const double d = metric_distance(sim, fp, m);
        // Strict improvement keeps the earliest (= smallest) scale on ties.
        if (!have_best || d < best_d) {
            best_d = d;
            best = {s, z};
            have_best = true;
        }
    }
    if (!have_best) return {1.0, 0};
    return best;
}

SliceFit minmax_slice(const double* x, std::int64_t n, bool symmetric, std::int64_t p_min,
                      std::int64_t p_max) {
    if (slice_all_zero(x, n)) return {1.0, 0};
    const double s = slice_s_max(x, n, symmetric, p_min, p_max);
    if (!(s > 0.0)) return {1.0, 0};
    const std::int64_t z = symmetric ? 0 : derive_zero_point(slice_min(x, n), s);
    return {s, z};
}

// Gathers one channel slice into a contiguous buffer (inner stride may be > 1).
std::vector<double> gather_slice(const Tensor& x, const AxisSlices& s, std::int64_t c) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(s.outer * s.inner));
    for (std::int64_t o = 0; o < s.outer; ++o) {
        const std::int64_t base = (o * s.axis_dim + c) * s.inner;
        for (std::int64_t i = 0; i < s.inner; ++i) {
            out.push_back(x.data[static_cast<std::size_t>(base + i)]);
        }
    }
    return out;
}

void validate_bits(int bits) {
    if (bits < 2 || bits > 32) throw ConfigError("quantizer: bits must be in [2, 32]");
}

}  // namespace

std::int64_t QuantParams::p_min() const { return int_range_min(bits, is_signed); }
std::int64_t QuantParams::p_max() const { return int_range_max(bits, is_signed); }

void QuantParams::validate() const {
    validate_bits(bits);
    if (scales.empty() || scales.size() != zero_points.size()) {
        throw ConfigError("quantizer: scales/zero_points size mismatch");
    }
    if (granularity == Granularity::PerTensor && scales.size() != 1) {
        throw ConfigError("quantizer: per-tensor params must hold exactly one pair");
    }
    for (double s : scales) {
        if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("quantizer: scale must be positive");
    }
    for (std::int64_t z : zero_points) {
        if (z < -kZeroPointGuard || z > kZeroPointGuard) {
            throw ConfigError("quantizer: zero point outside guard range");
        }
    }
    if (axis < 0) throw ConfigError("quantizer: axis must be nonnegative");
}

QuantParams QuantParams::per_tensor(double scale, std::int64_t zero_point, int bits,
                                    bool is_signed) {
    QuantParams q;
    q.scales = {scale};
    q.zero_points = {zero_point};
    q.bits = bits;
    q.is_signed = is_signed;
    q.granularity = Granularity::PerTensor;
    q.validate();
    return q;
}

QuantMetric QuantMetric::lp(double p) {
    QuantMetric m;
    m.kind = Kind::Lp;
    m.p = p;
    m.validate();
    return m;
}

QuantMetric QuantMetric::l1() {
    QuantMetric m;
    m.kind = Kind::L1;
    return m;
}

QuantMetric QuantMetric::cosine() {
    QuantMetric m;
    m.kind = Kind::Cosine;
    return m;
}

QuantMetric QuantMetric::kl(int bins) {
    QuantMetric m;
    m.kind = Kind::KL;
    m.bins = bins;
    m.validate();
    return m;
}

void QuantMetric::validate() const {
    if (kind == Kind::Lp && p < 1.0) throw ConfigError("metric: Lp requires p >= 1");
    if (kind == Kind::KL && bins < 2) throw ConfigError("metric: KL requires bins >= 2");
}

std::string QuantMetric::name() const {
    switch (kind) {
        case Kind::Lp: {
            // Shortest digit string that parses back to p, so names like
            // "lp2.4" survive a name -> parse -> name round trip.
            char buf[40];
            for (int prec = 1; prec <= 17; ++prec) {
                std::snprintf(buf, sizeof(buf), "%.*g", prec, p);
                if (std::strtod(buf, nullptr) == p) break;
            }
            return std::string("lp") + buf;
        }
        case Kind::L1:
            return "l1";
        case Kind::Cosine:
            return "cosine";
        case Kind::KL:
            return "kl";
    }
    return "unknown";
}

void SearchConfig::validate() const {
    if (num_candidates < 2) throw ConfigError("search: num_candidates must be >= 2");
    if (!(min_scale_fraction > 0.0 && min_scale_fraction < 1.0)) {
        throw ConfigError("search: min_scale_fraction must be in (0, 1)");
    }
}

double round_half_even(double v) { return std::nearbyint(v); }

double candidate_scale(double lo, double hi, int i, int num_candidates) {
    if (i == 0) return lo;
    if (i == num_candidates - 1) return hi;
    return lo + (hi - lo) * (static_cast<double>(i) / static_cast<double>(num_candidates - 1));
}

Tensor quantize(const Tensor& x, const QuantParams& q) {
    q.validate();
    check_finite(x, "quantize");
    const std::int64_t p_min = q.p_min(), p_max = q.p_max();
    Tensor out = x;
    for_each_slice(x, q, [&](std::int64_t c, const double* xs, std::int64_t n, std::int64_t off) {
        const SliceParams p = slice_params(q, c);
        for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t k = quantize_element(xs[i], p, p_min, p_max);
            out.data[static_cast<std::size_t>(off + i)] = static_cast<double>(k);
        }
    });
    return out;
}

Tensor quant_dequant(const Tensor& x, const QuantParams& q) {
    q.validate();
    check_finite(x, "quant_dequant");
    const std::int64_t p_min = q.p_min(), p_max = q.p_max();
    Tensor out = x;
    for_each_slice(x, q, [&](std::int64_t c, const double* xs, std::int64_t n, std::int64_t off) {
        quant_dequant_slice(xs, out.data.data() + off, n, slice_params(q, c), p_min, p_max);
    });
    return out;
}

double metric_distance(const Tensor& x_sim, const Tensor& x_fp, const QuantMetric& m) {
    m.validate();
    if (!same_shape(x_sim, x_fp)) throw IncompatibleError("metric_distance: shape mismatch");
    if (x_sim.size() == 0) throw InputError("metric_distance: empty tensors");
    switch (m.kind) {
        case QuantMetric::Kind::Lp:
            return lp_distance(x_sim, x_fp, m.p);
        case QuantMetric::Kind::L1:
            return l1_distance(x_sim, x_fp);
        case QuantMetric::Kind::Cosine:
            return cosine_distance(x_sim, x_fp);
        case QuantMetric::Kind::KL:
            return kl_distance(x_sim, x_fp, m.bins);
    }
    throw ConfigError("metric_distance: unknown metric");
}

QuantParams fit_params(const Tensor& x, const QuantMetric& m, const SearchConfig& cfg,
                       int bits, bool is_signed, Granularity granularity, int axis) {
    m.validate();
    cfg.validate();
    validate_bits(bits);
    if (x.size() == 0) throw InputError("fit_params: empty tensor");
    check_finite(x, "fit_params");
    const std::int64_t p_min = int_range_min(bits, is_signed);
    const std::int64_t p_max = int_range_max(bits, is_signed);

    QuantParams q;
    q.bits = bits;
    q.is_signed = is_signed;
    q.granularity = granularity;
    q.axis = axis;
    if (granularity == Granularity::PerTensor) {
        const SliceFit f = fit_slice(x.data.data(), x.size(), m, cfg, p_min, p_max);
        q.scales = {f.scale};
        q.zero_points = {f.zero_point};
    } else {
        const AxisSlices s = axis_slices(x.shape, axis);
        q.scales.resize(static_cast<std::size_t>(s.axis_dim));
        q.zero_points.resize(static_cast<std::size_t>(s.axis_dim));
        for (std::int64_t c = 0; c < s.axis_dim; ++c) {
            const std::vector<double> slice = gather_slice(x, s, c);
            const SliceFit f = fit_slice(slice.data(), static_cast<std::int64_t>(slice.size()),
                                         m, cfg, p_min, p_max);
            q.scales[static_cast<std::size_t>(c)] = f.scale;
            q.zero_points[static_cast<std::size_t>(c)] = f.zero_point;
        }
    }
    q.validate();
    return q;
}

QuantParams minmax_params(const Tensor& x, int bits, bool is_signed, bool symmetric,
                          Granularity granularity, int axis) {
    validate_bits(bits);
    if (x.size() == 0) throw InputError("minmax_params: empty tensor");
    check_finite(x, "minmax_params");
    const std::int64_t p_min = int_range_min(bits, is_signed);
    const std::int64_t p_max = int_range_max(bits, is_signed);

    QuantParams q;
    q.bits = bits;
    q.is_signed = is_signed;
    q.granularity = granularity;
    q.axis = axis;
    if (granularity == Granularity::PerTensor) {
        const SliceFit f = minmax_slice(x.data.data(), x.size(), symmetric, p_min, p_max);
        q.scales = {f.scale};
        q.zero_points = {f.zero_point};
    } else {
        const AxisSlices s = axis_slices(x.shape, axis);
        q.scales.resize(static_cast<std::size_t>(s.axis_dim));
        q.zero_points.resize(static_cast<std::size_t>(s.axis_dim));
        for (std::int64_t c = 0; c < s.axis_dim; ++c) {
            const std::vector<double> slice = gather_slice(x, s, c);
            const SliceFit f = minmax_slice(slice.data(), static_cast<std::int64_t>(slice.size()),
                                            symmetric, p_min, p_max);
            q.scales[static_cast<std::size_t>(c)] = f.scale;
            q.zero_points[static_cast<std::size_t>(c)] = f.zero_point;
        }
    }
    q.validate();
    return q;
}

AxisSlices axis_slices(const std::vector<std::int64_t>& shape, int axis) {
    if (axis < 0 || axis >= static_cast<int>(shape.size())) {
        throw ConfigError("quantizer: channel axis out of range");
    }
    AxisSlices s;
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    s.axis_dim = shape[static_cast<std::size_t>(axis)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) {
        s.inner *= shape[i];
    }
    return s;
}

Tensor extract_slice(const Tensor& x, int axis, std::int64_t channel) {
    const AxisSlices s = axis_slices(x.shape, axis);
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(s.outer * s.inner));
    for (std::int64_t o = 0; o < s.outer; ++o) {
        const std::int64_t base = (o * s.axis_dim + channel) * s.inner;
        for (std::int64_t i = 0; i < s.inner; ++i) {
            v.push_back(x.data[static_cast<std::size_t>(base + i)]);
        }
    }
    return Tensor::from_vector(std::move(v));
}

}  // namespace diffquant
