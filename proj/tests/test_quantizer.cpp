#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "diffquant/errors.hpp"
#include "diffquant/quantizer.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace diffquant;

namespace {

// Reference search, written independently of fit_params: evaluate every
// candidate scale with the library quantizer and keep the first minimum.
struct BruteFit {
    double scale;
    std::int64_t zero_point;
};

BruteFit brute_force_fit(const Tensor& x, const QuantMetric& m, const SearchConfig& cfg,
                         int bits, bool is_signed) {
    QuantParams probe = QuantParams::per_tensor(1.0, 0, bits, is_signed);
    const double p_min = static_cast<double>(probe.p_min());
    const double p_max = static_cast<double>(probe.p_max());

    double mn = x.data[0], mx = x.data[0], ma = 0.0;
    bool all_zero = true;
    for (double v : x.data) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        ma = std::max(ma, std::fabs(v));
        if (v != 0.0) all_zero = false;
    }
    if (all_zero) return {1.0, 0};

    double s_max;
    if (cfg.symmetric) {
        s_max = ma / p_max;
    } else if (mx > mn) {
        s_max = (mx - mn) / (p_max - p_min);
    } else {
        s_max = std::fabs(mx) / p_max;
    }
    const double s_lo = cfg.min_scale_fraction * s_max;

    BruteFit best{1.0, 0};
    double best_d = 0.0;
    bool have = false;
    for (int i = 0; i < cfg.num_candidates; ++i) {
        const double s = candidate_scale(s_lo, s_max, i, cfg.num_candidates);
        if (!(s > 0.0)) continue;
        const std::int64_t z = cfg.symmetric
                                   ? 0
                                   : static_cast<std::int64_t>(round_half_even(mn / s));
        const QuantParams q = QuantParams::per_tensor(s, z, bits, is_signed);
        const double d = metric_distance(quant_dequant(x, q), x, m);
        if (!have || d < best_d) {
            best_d = d;
            best = {s, z};
            have = true;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("round_half_even reference values") {
    CHECK(round_half_even(3.7) == 4.0);
    CHECK(round_half_even(3.5) == 4.0);
    CHECK(round_half_even(2.5) == 2.0);
    CHECK(round_half_even(-2.5) == -2.0);
    CHECK(round_half_even(0.5) == 0.0);
    CHECK(round_half_even(-0.5) == 0.0);
    CHECK(round_half_even(1.5) == 2.0);
}

TEST_CASE("quantize known values at scale 0.1") {
    QuantParams q = QuantParams::per_tensor(0.1, 0, 8, true);
    Tensor zero = Tensor({1}, {0.0});
    CHECK(quantize(zero, q).data[0] == 0.0);

    Tensor x = Tensor({1}, {0.26});
    CHECK(quantize(x, q).data[0] == 3.0);

    // Saturation: 100 / 0.1 = 1000 clamps to the top signed 8-bit code.
    Tensor big = Tensor({1}, {100.0});
    CHECK(quantize(big, q).data[0] == 127.0);

    Tensor neg = Tensor({1}, {-100.0});
    CHECK(quantize(neg, q).data[0] == -128.0);
}

TEST_CASE("quant_dequant known values at scale 0.1") {
    QuantParams q = QuantParams::per_tensor(0.1, 0, 8, true);
    Tensor x = Tensor({1}, {0.26});
    CHECK(quant_dequant(x, q).data[0] == doctest::Approx(0.3).epsilon(1e-15));
    Tensor big = Tensor({1}, {100.0});
    CHECK(quant_dequant(big, q).data[0] == doctest::Approx(12.7).epsilon(1e-15));
}

TEST_CASE("integer range follows bits and signedness") {
    CHECK(QuantParams::per_tensor(1.0, 0, 8, true).p_min() == -128);
    CHECK(QuantParams::per_tensor(1.0, 0, 8, true).p_max() == 127);
    CHECK(QuantParams::per_tensor(1.0, 0, 8, false).p_min() == 0);
    CHECK(QuantParams::per_tensor(1.0, 0, 8, false).p_max() == 255);
    CHECK(QuantParams::per_tensor(1.0, 0, 2, true).p_min() == -2);
    CHECK(QuantParams::per_tensor(1.0, 0, 2, true).p_max() == 1);
    CHECK(QuantParams::per_tensor(1.0, 0, 16, false).p_max() == 65535);
}

TEST_CASE("params validation rejects bad fields") {
    CHECK_THROWS_AS(QuantParams::per_tensor(1.0, 0, 1, true), ConfigError);
    CHECK_THROWS_AS(QuantParams::per_tensor(1.0, 0, 33, true), ConfigError);
    CHECK_THROWS_AS(QuantParams::per_tensor(0.0, 0, 8, true), ConfigError);
    CHECK_THROWS_AS(QuantParams::per_tensor(-0.5, 0, 8, true), ConfigError);
    CHECK_THROWS_AS(QuantParams::per_tensor(1.0, kZeroPointGuard + 1, 8, true), ConfigError);
    CHECK_NOTHROW(QuantParams::per_tensor(1.0, kZeroPointGuard, 8, true));
}

TEST_CASE("quantize rejects non-finite input") {
    QuantParams q = QuantParams::per_tensor(0.1, 0, 8, true);
    Tensor x = Tensor({2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
    CHECK_THROWS_AS(quantize(x, q), InputError);
    CHECK_THROWS_AS(quant_dequant(x, q), InputError);
}

TEST_CASE("zero point shifts the representable window") {
    // Data far from zero: an unsigned window anchored by a large negative z
    // still covers it. z here is far outside [p_min, p_max] by design.
    Tensor x = Tensor({3}, {100.0, 100.5, 101.0});
    QuantParams q = minmax_params(x, 8, false, false, Granularity::PerTensor);
    CHECK(q.zero_points[0] > 255);
    Tensor sim = quant_dequant(x, q);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        CHECK(std::fabs(sim.data[i] - x.data[i]) <= q.scales[0] / 2 + 1e-15);
    }
}

TEST_CASE("metric distance of a tensor to itself is zero") {
    std::mt19937_64 gen(42);
    Tensor x = testutil::random_tensor(gen, {64});
    CHECK(metric_distance(x, x, QuantMetric::lp(2.4)) == 0.0);
    CHECK(metric_distance(x, x, QuantMetric::l1()) == 0.0);
    CHECK(metric_distance(x, x, QuantMetric::cosine()) == 0.0);
    CHECK(metric_distance(x, x, QuantMetric::kl(64)) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cosine distance ignores positive rescaling") {
    std::mt19937_64 gen(43);
    Tensor x = testutil::random_tensor(gen, {32});
    Tensor x2 = scale(x, 2.0);
    CHECK(metric_distance(x2, x, QuantMetric::cosine()) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cosine distance zero-vector conventions") {
    Tensor z = Tensor::zeros({4});
    Tensor x = Tensor({4}, {1.0, 0.0, 0.0, 0.0});
    CHECK(metric_distance(z, z, QuantMetric::cosine()) == 0.0);
    CHECK(metric_distance(z, x, QuantMetric::cosine()) == 1.0);
    CHECK(metric_distance(x, z, QuantMetric::cosine()) == 1.0);
}

TEST_CASE("lp and l1 reference values") {
    Tensor fp = Tensor({3}, {0.3, 1.0, -0.5});
    Tensor sim = Tensor({3}, {0.26, 1.0, -0.54});
    // mean(|d|^2.4) with d = 0.04 at two positions.
    CHECK(metric_distance(sim, fp, QuantMetric::lp(2.4)) ==
          doctest::Approx(0.0002943423277783926).epsilon(1e-14));
    CHECK(metric_distance(sim, fp, QuantMetric::l1()) ==
          doctest::Approx(0.026666666666666668).epsilon(1e-15));

    Tensor a = Tensor({1}, {0.3});
    Tensor b = Tensor({1}, {0.26});
    CHECK(metric_distance(b, a, QuantMetric::lp(2.4)) ==
          doctest::Approx(std::pow(0.04, 2.4)).epsilon(1e-12));
}

TEST_CASE("cosine reference value") {
    Tensor a = Tensor({2}, {1.0, 0.0});
    Tensor b = Tensor({2}, {1.0, 1.0});
    CHECK(metric_distance(b, a, QuantMetric::cosine()) ==
          doctest::Approx(0.29289321881345254).epsilon(1e-15));
}

TEST_CASE("kl reference value on a 4-bin histogram") {
    Tensor fp = Tensor({4}, {0.0, 1.0, 2.0, 3.0});
    Tensor sim = Tensor({4}, {0.0, 1.0, 2.0, 2.0});
    CHECK(metric_distance(sim, fp, QuantMetric::kl(4)) ==
          doctest::Approx(5.5831759373826273).epsilon(1e-13));
}

TEST_CASE("kl puts values at the top edge into the last bin") {
    // All mass shared, shifted distribution: finite, nonnegative.
    Tensor fp = Tensor({5}, {0.0, 0.25, 0.5, 0.75, 1.0});
    Tensor sim = Tensor({5}, {0.0, 0.25, 0.5, 0.75, 1.0});
    CHECK(metric_distance(sim, fp, QuantMetric::kl(8)) == doctest::Approx(0.0).epsilon(1e-12));
    double d = metric_distance(Tensor({5}, {0.0, 0.0, 0.0, 0.0, 1.0}), fp,
                               QuantMetric::kl(8));
    CHECK(d > 0.0);
    CHECK(std::isfinite(d));
}

TEST_CASE("metric name strings") {
    CHECK(QuantMetric::lp(2.4).name() == "lp2.4");
    CHECK(QuantMetric::l1().name() == "l1");
    CHECK(QuantMetric::cosine().name() == "cosine");
    CHECK(QuantMetric::kl().name() == "kl");
}

TEST_CASE("metric validation") {
    CHECK_THROWS_AS(QuantMetric::lp(0.5), ConfigError);
    CHECK_THROWS_AS(QuantMetric::kl(1), ConfigError);
    CHECK_NOTHROW(QuantMetric::lp(1.0));
}

TEST_CASE("candidate grid endpoints are exact") {
    const double lo = 0.2 * 0.3715, hi = 0.3715;
    CHECK(candidate_scale(lo, hi, 0, 100) == lo);
    CHECK(candidate_scale(lo, hi, 99, 100) == hi);
    for (int i = 1; i < 99; ++i) {
        double s = candidate_scale(lo, hi, i, 100);
        CHECK(s > lo);
        CHECK(s < hi);
        CHECK(s > candidate_scale(lo, hi, i - 1, 100));
    }
}

TEST_CASE("minmax parameters on reference ranges") {
    Tensor sym = Tensor({2}, {-1.0, 1.0});
    QuantParams q1 = minmax_params(sym, 8, true, true, Granularity::PerTensor);
    CHECK(q1.scales[0] == 1.0 / 127.0);
    CHECK(q1.zero_points[0] == 0);

    Tensor rng = Tensor({2}, {0.0, 255.0});
    QuantParams q2 = minmax_params(rng, 8, false, false, Granularity::PerTensor);
    CHECK(q2.scales[0] == 1.0);
    CHECK(q2.zero_points[0] == 0);

    Tensor zeros = Tensor::zeros({8});
    QuantParams q3 = minmax_params(zeros, 8, false, false, Granularity::PerTensor);
    CHECK(q3.scales[0] == 1.0);
    CHECK(q3.zero_points[0] == 0);
}

TEST_CASE("fit on the all-zero tensor returns the unit fallback") {
    Tensor zeros = Tensor::zeros({16});
    QuantParams q = fit_params(zeros, QuantMetric::lp(2.4), SearchConfig{}, 8, true,
                               Granularity::PerTensor);
    CHECK(q.scales[0] == 1.0);
    CHECK(q.zero_points[0] == 0);
    Tensor sim = quant_dequant(zeros, q);
    for (double v : sim.data) CHECK(v == 0.0);
}

TEST_CASE("fit on a nonzero constant reproduces it exactly") {
    // The top-of-grid scale satisfies s * p_max == |c|; for these constants
    // the divide/multiply round trip is lossless so reproduction is exact.
    for (double c : {0.35, -1.7, 100.0, 3.2, -0.625}) {
        Tensor x = Tensor::full({6}, c);
        QuantParams q = fit_params(x, QuantMetric::lp(2.4), SearchConfig{}, 8, true,
                                   Granularity::PerTensor);
        Tensor sim = quant_dequant(x, q);
        for (double v : sim.data) CHECK(v == c);
    }
}

TEST_CASE("fit on arbitrary constants is exact to one rounding step") {
    // Generic constants can lose one ulp in the s_max round trip.
    std::mt19937_64 gen(77);
    std::uniform_real_distribution<double> dist(-8.0, 8.0);
    for (int trial = 0; trial < 200; ++trial) {
        double c = dist(gen);
        if (c == 0.0) continue;
        Tensor x = Tensor::full({4}, c);
        QuantParams q = fit_params(x, QuantMetric::l1(), SearchConfig{}, 8, true,
                                   Granularity::PerTensor);
        Tensor sim = quant_dequant(x, q);
        CHECK(std::fabs(sim.data[0] - c) <= std::fabs(c) * 0x1p-50);
    }
}

TEST_CASE("fit matches an independent search over the same grid") {
    std::mt19937_64 gen(2001);
    const QuantMetric metrics[4] = {QuantMetric::lp(2.4), QuantMetric::l1(),
                                    QuantMetric::cosine(), QuantMetric::kl(128)};
    for (int trial = 0; trial < 12; ++trial) {
        Tensor x = testutil::random_tensor(gen, {48}, -3.0, 5.0);
        for (const auto& m : metrics) {
            for (bool symmetric : {false, true}) {
                SearchConfig cfg;
                cfg.symmetric = symmetric;
                QuantParams got = fit_params(x, m, cfg, 8, symmetric, Granularity::PerTensor);
                BruteFit want = brute_force_fit(x, m, cfg, 8, symmetric);
                CHECK(got.scales[0] == want.scale);
                CHECK(got.zero_points[0] == want.zero_point);
            }
        }
    }
}

TEST_CASE("fit against a hand-checkable four element tensor") {
    Tensor x = Tensor({4}, {0.1, -0.2, 0.3, 5.0});
    SearchConfig cfg;
    cfg.symmetric = true;
    QuantParams got = fit_params(x, QuantMetric::lp(2.4), cfg, 8, true, Granularity::PerTensor);
    BruteFit want = brute_force_fit(x, QuantMetric::lp(2.4), cfg, 8, true);
    CHECK(got.scales[0] == want.scale);
    // The outlier pushes s_max up; the metric should prefer clipping it, so
    // the winner sits strictly below the top of the grid.
    CHECK(got.scales[0] < 5.0 / 127.0);
}

TEST_CASE("selected grid index is invariant to input rescaling") {
    // Scaling the tensor by 10 scales every candidate and every error by 10;
    // Lp ordering is unchanged, so the same grid index wins.
    std::mt19937_64 gen(31337);
    SearchConfig cfg;
    cfg.symmetric = true;
    for (int trial = 0; trial < 8; ++trial) {
        Tensor x = testutil::random_tensor(gen, {40});
        Tensor x10 = scale(x, 10.0);
        QuantParams a = fit_params(x, QuantMetric::lp(2.4), cfg, 8, true, Granularity::PerTensor);
        QuantParams b = fit_params(x10, QuantMetric::lp(2.4), cfg, 8, true,
                                   Granularity::PerTensor);
        CHECK(b.scales[0] == doctest::Approx(10.0 * a.scales[0]).epsilon(1e-12));
    }
}

TEST_CASE("reconstruction error is bounded by half a step inside the window") {
    std::mt19937_64 gen(999);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = testutil::random_tensor(gen, {64}, -2.0, 2.0);
        QuantParams q = minmax_params(x, 8, true, false, Granularity::PerTensor);
        const double s = q.scales[0];
        const double lo = s * static_cast<double>(q.p_min() + q.zero_points[0]);
        const double hi = s * static_cast<double>(q.p_max() + q.zero_points[0]);
        Tensor sim = quant_dequant(x, q);
        for (std::int64_t i = 0; i < x.size(); ++i) {
            if (x.data[i] >= lo && x.data[i] <= hi) {
                CHECK(std::fabs(sim.data[i] - x.data[i]) <= s / 2 + s * 1e-12);
            }
        }
    }
}

TEST_CASE("quant_dequant is idempotent") {
    std::mt19937_64 gen(4242);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = testutil::random_tensor(gen, {32}, -5.0, 5.0);
        QuantParams q = fit_params(x, QuantMetric::l1(), SearchConfig{}, 8, true,
                                   Granularity::PerTensor);
        Tensor once = quant_dequant(x, q);
        Tensor twice = quant_dequant(once, q);
        for (std::int64_t i = 0; i < x.size(); ++i) CHECK(once.data[i] == twice.data[i]);
    }
}

TEST_CASE("quantize is monotone") {
    std::mt19937_64 gen(5150);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = testutil::random_tensor(gen, {64}, -3.0, 3.0);
        std::sort(x.data.begin(), x.data.end());
        QuantParams q = fit_params(x, QuantMetric::lp(2.4), SearchConfig{}, 8, true,
                                   Granularity::PerTensor);
        Tensor ints = quantize(x, q);
        for (std::int64_t i = 1; i < x.size(); ++i) CHECK(ints.data[i] >= ints.data[i - 1]);
    }
}

TEST_CASE("fitted error never exceeds the minmax baseline") {
    // The top of the search grid IS the minmax scale, so the searched
    // minimum can only improve on it.
    std::mt19937_64 gen(88);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = testutil::random_tensor(gen, {96}, -4.0, 4.0);
        for (bool symmetric : {false, true}) {
            SearchConfig cfg;
            cfg.symmetric = symmetric;
            const QuantMetric m = QuantMetric::lp(2.4);
            QuantParams fitted = fit_params(x, m, cfg, 8, symmetric, Granularity::PerTensor);
            QuantParams baseline = minmax_params(x, 8, symmetric, symmetric,
                                                 Granularity::PerTensor);
            const double d_fit = metric_distance(quant_dequant(x, fitted), x, m);
            const double d_base = metric_distance(quant_dequant(x, baseline), x, m);
            CHECK(d_fit <= d_base + 1e-18);
        }
    }
}

TEST_CASE("per-channel fit treats axis slices independently") {
    // Channel 0 small values, channel 1 large: per-channel scales differ by
    // roughly the magnitude ratio, and each equals a per-tensor fit of its
    // own slice.
    Tensor x = Tensor::zeros({2, 6});
    for (int j = 0; j < 6; ++j) {
        x.at(0, j) = 0.01 * (j - 3);
        x.at(1, j) = 10.0 * (j - 2);
    }
    SearchConfig cfg;
    cfg.symmetric = true;
    QuantParams q = fit_params(x, QuantMetric::lp(2.4), cfg, 8, true, Granularity::PerChannel, 0);
    REQUIRE(q.scales.size() == 2);
    CHECK(q.scales[1] > 100.0 * q.scales[0]);

    for (int c = 0; c < 2; ++c) {
        Tensor slice = extract_slice(x, 0, c);
        QuantParams qc = fit_params(slice, QuantMetric::lp(2.4), cfg, 8, true,
                                    Granularity::PerTensor);
        CHECK(q.scales[static_cast<std::size_t>(c)] == qc.scales[0]);
        CHECK(q.zero_points[static_cast<std::size_t>(c)] == qc.zero_points[0]);
    }

    Tensor sim = quant_dequant(x, q);
    for (int j = 0; j < 6; ++j) {
        CHECK(std::fabs(sim.at(0, j) - x.at(0, j)) <= q.scales[0] / 2 + 1e-15);
        CHECK(std::fabs(sim.at(1, j) - x.at(1, j)) <= q.scales[1] / 2 + 1e-12);
    }
}

TEST_CASE("axis_slices layout") {
    AxisSlices s = axis_slices({3, 4, 5}, 1);
    CHECK(s.outer == 3);
    CHECK(s.axis_dim == 4);
    CHECK(s.inner == 5);
    CHECK_THROWS_AS(axis_slices({3, 4}, 2), ConfigError);

    Tensor x = Tensor({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor col = extract_slice(x, 1, 2);
    CHECK(col.data == std::vector<double>{3.0, 6.0});
}

TEST_CASE("metric distance rejects shape mismatch and empty input") {
    Tensor a = Tensor::zeros({2, 2});
    Tensor b = Tensor::zeros({4});
    CHECK_THROWS_AS(metric_distance(a, b, QuantMetric::l1()), IncompatibleError);
}
