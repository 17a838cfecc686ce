#include <algorithm>
#include <cmath>
#include <vector>

#include "diffquant/calibration.hpp"
#include "diffquant/diffusion.hpp"
#include "diffquant/errors.hpp"
#include "diffquant/streams.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace diffquant;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

ScoreNetwork tiny_net(std::uint64_t seed = 2) { return ScoreNetwork::create(2, 4, {6}, seed); }

CalibrationSet constant_set(const std::vector<double>& row, int n, int t) {
    CalibrationSet set;
    set.samples = Tensor::zeros({n, static_cast<std::int64_t>(row.size())});
    for (int i = 0; i < n; ++i) set_row(set.samples, i, Tensor::from_vector(row));
    set.timesteps.assign(static_cast<std::size_t>(n), static_cast<std::uint32_t>(t));
    set.manifest.collector = "in_memory";
    set.manifest.n = n;
    set.manifest.dim = static_cast<int>(row.size());
    return set;
}

}  // namespace

TEST_CASE("gaussian timestep draw reference sequence") {
    Rng rng(77, streams::kCollectTimesteps);
    const int expected[6] = {39, 37, 35, 38, 46, 32};
    for (int e : expected) CHECK(draw_ndtc_timestep(40.0, 100, rng) == e);
}

TEST_CASE("gaussian timestep draws consume one normal each") {
    Rng a(5, 3), b(5, 3);
    for (int i = 0; i < 10; ++i) draw_ndtc_timestep(20.0, 50, a);
    for (int i = 0; i < 10; ++i) b.standard_normal();
    CHECK(a.next_u32() == b.next_u32());
}

TEST_CASE("timestep location above half the chain is rejected") {
    ScoreNetwork net = tiny_net();
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 10);
    CHECK_THROWS_AS(collect_ndtc(net, sched, 4, 5.1, 1), ConfigError);
    CHECK_NOTHROW(collect_ndtc(net, sched, 4, 5.0, 1));
}

TEST_CASE("fraction of draws at the floor matches the gaussian tail") {
    // T = 8: sd = 2, mu = T/2 = 4. t == 0 iff the raw gaussian lands below 1,
    // so the expected fraction is Phi((1 - mu) / sd). Tolerance 3 SE.
    const int T = 8, N = 10000;
    const double mu = 4.0, sd = 2.0;
    Rng rng(901, streams::kCollectTimesteps);
    int at_zero = 0, at_top = 0;
    for (int i = 0; i < N; ++i) {
        const int t = draw_ndtc_timestep(mu, T, rng);
        REQUIRE(t >= 0);
        REQUIRE(t <= T);
        if (t == 0) at_zero++;
        if (t == T) at_top++;
    }
    const double p0 = normal_cdf((1.0 - mu) / sd);
    const double se0 = std::sqrt(p0 * (1.0 - p0) / N);
    CHECK(std::fabs(at_zero / static_cast<double>(N) - p0) < 3.0 * se0);

    // Top is asymmetric: floor(x) >= T already lands on T, so no +1 shift.
    const double pT = 1.0 - normal_cdf((static_cast<double>(T) - mu) / sd);
    const double seT = std::sqrt(pT * (1.0 - pT) / N);
    CHECK(std::fabs(at_top / static_cast<double>(N) - pT) < 3.0 * seT);
}

TEST_CASE("timestep draw distribution passes a DKW band check") {
    // 1e5 draws; the empirical CDF must track the analytic CDF of
    // floor-and-clamp everywhere within the 99% DKW epsilon.
    const int T = 100, N = 100000;
    const double mu = 40.0, sd = std::sqrt(50.0);
    std::vector<int> counts(static_cast<std::size_t>(T) + 1, 0);
    Rng rng(123, streams::kCollectTimesteps);
    for (int i = 0; i < N; ++i) counts[static_cast<std::size_t>(draw_ndtc_timestep(mu, T, rng))]++;

    const double eps = std::sqrt(std::log(2.0 / 0.01) / (2.0 * N));  // 0.0051471
    double cum = 0.0, worst = 0.0;
    for (int k = 0; k <= T; ++k) {
        cum += counts[static_cast<std::size_t>(k)];
        const double emp = cum / static_cast<double>(N);
        const double ana = k < T ? normal_cdf((k + 1.0 - mu) / sd) : 1.0;
        worst = std::max(worst, std::fabs(emp - ana));
    }
    CHECK(worst < eps);
    CHECK(eps == doctest::Approx(0.0051471).epsilon(1e-4));
}

TEST_CASE("stopping at the top of the chain stores pure gaussian noise") {
    ScoreNetwork net = tiny_net();
    const int T = 5, n = 4000;
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, T);
    CalibrationSet set = collect_fixed_t(net, sched, n, T, 7);
    REQUIRE(set.samples.dim(0) == n);
    for (std::uint32_t t : set.timesteps) CHECK(t == static_cast<std::uint32_t>(T));

    const auto total = static_cast<double>(set.samples.size());
    double m = 0.0, ss = 0.0;
    for (double v : set.samples.data) m += v;
    m /= total;
    for (double v : set.samples.data) ss += (v - m) * (v - m);
    const double var = ss / total;
    CHECK(std::fabs(m) < 4.0 / std::sqrt(total));
    CHECK(std::fabs(var - 1.0) < 4.0 * std::sqrt(2.0 / total));
}

TEST_CASE("uniform collector timesteps pass a chi-square uniformity check") {
    ScoreNetwork net = tiny_net();
    const int T = 100, n = 10000;
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, T);
    CalibrationSet set = collect_uniform_t(net, sched, n, 31);

    std::vector<int> counts(100, 0);
    for (std::uint32_t t : set.timesteps) {
        REQUIRE(t <= static_cast<std::uint32_t>(T));
        counts[std::min<std::size_t>(t, 99)]++;
    }
    const double expect = n / 100.0;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
    // 99% critical value for 99 degrees of freedom.
    CHECK(chi2 < 134.642);
}

TEST_CASE("forward-process collector rows replay from the documented streams") {
    ToyDataset ds = make_dataset(DatasetKind::GaussianMixture, 32, 1);
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 10);
    const int n = 64;
    const std::uint64_t seed = 44;
    CalibrationSet set = collect_diffusion_images(ds, sched, n, seed);
    set.validate(sched.T);

    int zero_rows = 0;
    for (int i = 0; i < n; ++i) {
        Rng rng(seed, streams::kChainBase + static_cast<std::uint64_t>(i));
        const auto idx = static_cast<std::int64_t>(rng.uniform_below(32));
        Tensor x0 = get_row(ds.data, idx);
        const int t = static_cast<int>(set.timesteps[static_cast<std::size_t>(i)]);
        Tensor row = get_row(set.samples, i);
        if (t == 0) {
            zero_rows++;
            CHECK(row[0] == x0[0]);
            CHECK(row[1] == x0[1]);
        } else {
            Tensor eps = Tensor::zeros({1, 2});
            eps[0] = rng.standard_normal();
            eps[1] = rng.standard_normal();
            Tensor want = q_sample(x0, t, eps, sched);
            CHECK(row[0] == want[0]);
            CHECK(row[1] == want[1]);
        }
    }
    CHECK(zero_rows >= 1);  // seed chosen so the x0 path is exercised
}

TEST_CASE("collectors regenerate bit-identical sets from the same arguments") {
    ScoreNetwork net = tiny_net();
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 10);
    CalibrationSet a = collect_ndtc(net, sched, 16, 4.0, 9);
    CalibrationSet b = collect_ndtc(net, sched, 16, 4.0, 9);
    CHECK(testutil::max_abs_diff(a.samples, b.samples) == 0.0);
    CHECK(a.timesteps == b.timesteps);
    CHECK(a.manifest.collector == "ndtc");
    CHECK(a.manifest.seed == 9);
    CHECK(a.manifest.n == 16);
    CHECK(a.manifest.mu == 4.0);
    CHECK(a.manifest.T == 10);
    CHECK(a.manifest.schedule_kind == "linear");

    CalibrationSet c = collect_ndtc(net, sched, 16, 4.0, 10);
    CHECK(testutil::max_abs_diff(a.samples, c.samples) > 0.0);
}

TEST_CASE("single-sample collection works") {
    ScoreNetwork net = tiny_net();
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 10);
    CalibrationSet set = collect_ndtc(net, sched, 1, 3.0, 5);
    CHECK(set.samples.dim(0) == 1);
    CHECK(set.timesteps.size() == 1);
    set.validate(sched.T);
}

TEST_CASE("calibration set validation catches inconsistencies") {
    ScoreNetwork net = tiny_net();
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 10);
    CalibrationSet set = collect_ndtc(net, sched, 8, 3.0, 5);
    CHECK_NOTHROW(set.validate(10));

    CalibrationSet bad_t = set;
    bad_t.timesteps[0] = 11;
    CHECK_THROWS_AS(bad_t.validate(10), InputError);

    CalibrationSet bad_n = set;
    bad_n.manifest.n = 7;
    CHECK_THROWS_AS(bad_n.validate(10), InputError);

    CalibrationSet bad_rows = set;
    bad_rows.timesteps.pop_back();
    CHECK_THROWS_AS(bad_rows.validate(10), InputError);
}

TEST_CASE("calibration leaves the source network untouched") {
    ScoreNetwork net = tiny_net(8);
    ScoreNetwork before = net;
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 10);
    CalibrationSet set = collect_ndtc(net, sched, 16, 4.0, 2);
    calibrate_network(net, set, sched, QuantMetric::lp(2.4), 8, SearchConfig{});
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        CHECK(testutil::max_abs_diff(net.layers[l].W, before.layers[l].W) == 0.0);
        CHECK(testutil::max_abs_diff(net.layers[l].b, before.layers[l].b) == 0.0);
    }
}

TEST_CASE("calibrated parameters match per-layer fits done by hand") {
    ScoreNetwork net = tiny_net(3);
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 10);
    CalibrationSet set = collect_ndtc(net, sched, 8, 4.0, 6);
    const QuantMetric metric = QuantMetric::lp(2.4);
    QuantizedNetwork q = calibrate_network(net, set, sched, metric, 8, SearchConfig{});

    // Weights: independent per-channel symmetric fit of each original tensor.
    SearchConfig wcfg;
    wcfg.symmetric = true;
    REQUIRE(q.weight_params.size() == net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        QuantParams want =
            fit_params(net.layers[l].W, metric, wcfg, 8, true, Granularity::PerChannel, 0);
        CHECK(q.weight_params[l].scales == want.scales);
        CHECK(q.weight_params[l].zero_points == want.zero_points);
        CHECK(q.weight_params[l].is_signed);
    }

    // Activations: per-tensor asymmetric fit of each layer's pooled inputs
    // from one full-precision tapped pass over the set.
    ActivationTaps taps;
    taps.reset(net.num_layers());
    std::vector<int> ts(set.timesteps.begin(), set.timesteps.end());
    forward(net, set.samples, ts, sched.T, &taps);
    REQUIRE(q.activation_params.size() == net.layers.size());
    for (int l = 0; l < net.num_layers(); ++l) {
        QuantParams want =
            fit_params(taps.pooled(l), metric, SearchConfig{}, 8, false, Granularity::PerTensor);
        auto lu = static_cast<std::size_t>(l);
        CHECK(q.activation_params[lu].scales == want.scales);
        CHECK(q.activation_params[lu].zero_points == want.zero_points);
        CHECK_FALSE(q.activation_params[lu].is_signed);
    }
    CHECK_FALSE(q.hooks.any());
}

TEST_CASE("identical calibration rows fit like a single tensor") {
    ScoreNetwork net = ScoreNetwork::create(2, 4, {}, 5);
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 10);
    CalibrationSet set = constant_set({0.4, -1.2}, 12, 3);
    QuantizedNetwork q =
        calibrate_network(net, set, sched, QuantMetric::lp(2.4), 8, SearchConfig{});

    Tensor emb = time_embedding(3, 4, 10);
    Tensor single = Tensor::zeros({1, 6});
    single.data = {0.4, -1.2, emb[0], emb[1], emb[2], emb[3]};
    QuantParams want =
        fit_params(single, QuantMetric::lp(2.4), SearchConfig{}, 8, false, Granularity::PerTensor);
    CHECK(q.activation_params[0].scales == want.scales);
    CHECK(q.activation_params[0].zero_points == want.zero_points);
}

TEST_CASE("calibration rejects sets that do not match the network or chain") {
    ScoreNetwork net = tiny_net();
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 10);
    CalibrationSet set = collect_ndtc(net, sched, 8, 4.0, 6);

    CalibrationSet wide = set;
    wide.samples = Tensor::zeros({8, 3});
    CHECK_THROWS_AS(
        calibrate_network(net, wide, sched, QuantMetric::l1(), 8, SearchConfig{}),
        IncompatibleError);

    NoiseSchedule shorter = make_schedule(ScheduleKind::Linear, 3);
    CalibrationSet high_t = constant_set({0.1, 0.2}, 4, 10);
    CHECK_THROWS_AS(
        calibrate_network(net, high_t, shorter, QuantMetric::l1(), 8, SearchConfig{}),
        InputError);
}

TEST_CASE("hook fitting fills exactly the requested hooks") {
    ScoreNetwork net = tiny_net(4);
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 10);
    HookConfig hc;
    hc.mu = true;
    hc.bits = 6;
    hc.fit_samples = 8;
    OutputHooks hooks =
        fit_output_hooks(net, sched, QuantMetric::lp(2.4), SearchConfig{}, hc, 17);
    REQUIRE(hooks.mu.has_value());
    CHECK_FALSE(hooks.sigma.has_value());
    CHECK_FALSE(hooks.x_prev.has_value());
    CHECK(hooks.mu->bits == 6);
    CHECK_FALSE(hooks.mu->is_signed);

    OutputHooks again =
        fit_output_hooks(net, sched, QuantMetric::lp(2.4), SearchConfig{}, hc, 17);
    CHECK(hooks.mu->scales == again.mu->scales);
    CHECK(hooks.mu->zero_points == again.mu->zero_points);

    hc.mu = false;
    hc.sigma = true;
    hc.x_prev = true;
    OutputHooks two =
        fit_output_hooks(net, sched, QuantMetric::lp(2.4), SearchConfig{}, hc, 17);
    CHECK_FALSE(two.mu.has_value());
    CHECK(two.sigma.has_value());
    CHECK(two.x_prev.has_value());
}

TEST_CASE("calibrate wires hook fitting through the manifest seed") {
    ScoreNetwork net = tiny_net(4);
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 10);
    CalibrationSet set = collect_ndtc(net, sched, 8, 4.0, 21);
    HookConfig hc;
    hc.x_prev = true;
    hc.fit_samples = 8;
    QuantizedNetwork q =
        calibrate_network(net, set, sched, QuantMetric::lp(2.4), 8, SearchConfig{}, hc);
    REQUIRE(q.hooks.x_prev.has_value());

    OutputHooks direct =
        fit_output_hooks(net, sched, QuantMetric::lp(2.4), SearchConfig{}, hc, 21);
    CHECK(q.hooks.x_prev->scales == direct.x_prev->scales);
    CHECK(q.hooks.x_prev->zero_points == direct.x_prev->zero_points);
}

TEST_CASE("collector kind strings round-trip") {
    CHECK(to_string(CollectorKind::NDTC) == "ndtc");
    CHECK(to_string(CollectorKind::FixedT) == "fixed_t");
    CHECK(to_string(CollectorKind::UniformT) == "uniform_t");
    CHECK(to_string(CollectorKind::DiffusionImages) == "diffusion_images");
    CHECK(collector_kind_from_string("ndtc") == CollectorKind::NDTC);
    CHECK(collector_kind_from_string("fixed_t") == CollectorKind::FixedT);
    CHECK(collector_kind_from_string("uniform_t") == CollectorKind::UniformT);
    CHECK(collector_kind_from_string("diffusion_images") == CollectorKind::DiffusionImages);
    CHECK_THROWS_AS(collector_kind_from_string("random"), ConfigError);
}
