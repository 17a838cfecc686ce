#include "diffquant/calibration.hpp"

#include <cmath>
#include <cstdint>

#include "diffquant/diffusion.hpp"
#include "diffquant/errors.hpp"
#include "diffquant/parallel.hpp"
#include "diffquant/streams.hpp"

namespace diffquant {

namespace {

// Runs one full-precision ancestral chain from T down to t_stop and returns
// x_{t_stop} as a [1 x dim] row. The stream supplies x_T first, then the
// per-step noise.
Tensor run_chain_to(const QuantizedNetwork& net, const NoiseSchedule& sched, int t_stop,
                    Rng& rng) {
    const int dim = net.base.input_dim;
    Tensor x = Tensor::zeros({1, dim});
    for (int j = 0; j < dim; ++j) x.data[j] = rng.standard_normal();
    SamplerConfig cfg;
    cfg.kind = SamplerKind::DDPM;
    cfg.num_steps = sched.T;
    for (int t = sched.T; t > t_stop; --t) {
        x = p_sample_ddpm(net, x, t, sched, rng, cfg);
    }
    return x;
}

CalibrationSet collect_chains(const ScoreNetwork& fp_net, const NoiseSchedule& sched, int n,
                              const std::vector<int>& stop_ts, std::uint64_t seed) {
    fp_net.validate();
    const QuantizedNetwork net = QuantizedNetwork::wrap_fp(fp_net);
    CalibrationSet set;
    set.samples = Tensor::zeros({n, fp_net.input_dim});
    set.timesteps.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        set.timesteps[static_cast<std::size_t>(i)] =
            static_cast<std::uint32_t>(stop_ts[static_cast<std::size_t>(i)]);
    }
    parallel_for(n, [&](std::int64_t i) {
        Rng chain_rng(seed, streams::kChainBase + static_cast<std::uint64_t>(i));
        Tensor row =
            run_chain_to(net, sched, stop_ts[static_cast<std::size_t>(i)], chain_rng);
        set_row(set.samples, i, row);
    });
    set.manifest.seed = seed;
    set.manifest.n = n;
    set.manifest.schedule_kind = to_string(sched.kind);
    set.manifest.T = sched.T;
    set.manifest.const_beta = sched.const_beta;
    set.manifest.dim = fp_net.input_dim;
    return set;
}

int uniform_timestep(int T, Rng& rng) {
    const int t = static_cast<int>(std::floor(static_cast<double>(T) * rng.uniform01()));
    return t > T ? T : t;
}

}  // namespace

CollectorKind collector_kind_from_string(const std::string& s) {
    if (s == "ndtc") return CollectorKind::NDTC;
    if (s == "fixed_t") return CollectorKind::FixedT;
    if (s == "uniform_t") return CollectorKind::UniformT;
    if (s == "diffusion_images") return CollectorKind::DiffusionImages;
    throw ConfigError("unknown collector kind: " + s);
}

std::string to_string(CollectorKind kind) {
    switch (kind) {
        case CollectorKind::NDTC: return "ndtc";
        case CollectorKind::FixedT: return "fixed_t";
        case CollectorKind::UniformT: return "uniform_t";
        case CollectorKind::DiffusionImages: return "diffusion_images";
    }
    throw ConfigError("unknown collector kind");
}

void CalibrationSet::validate(int T) const {
    if (samples.rank() != 2) throw InputError("calibration samples must be [n x dim]");
    if (samples.dim(0) != static_cast<std::int64_t>(timesteps.size())) {
        throw InputError("calibration sample count does not match timestep count");
    }
    if (manifest.n != static_cast<int>(timesteps.size())) {
        throw InputError("calibration manifest n does not match contents");
    }
    for (std::uint32_t t : timesteps) {
        if (static_cast<int>(t) > T) throw InputError("calibration timestep exceeds T");
    }
}

int draw_ndtc_timestep(double mu, int T, Rng& rng) {
    const double sd = std::sqrt(static_cast<double>(T) / 2.0);
    const double raw = std::floor(mu + sd * rng.standard_normal());
    if (raw < 0.0) return 0;
    if (raw > static_cast<double>(T)) return T;
    return static_cast<int>(raw);
}

CalibrationSet collect_ndtc(const ScoreNetwork& fp_net, const NoiseSchedule& sched, int n,
                            double mu, std::uint64_t seed) {
    if (n < 1) throw InputError("collect_ndtc: n must be >= 1");
    if (mu > static_cast<double>(sched.T) / 2.0) {
        throw ConfigError("ndtc mu must satisfy mu <= T/2");
    }
    Rng t_rng(seed, streams::kCollectTimesteps);
    std::vector<int> stop_ts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        stop_ts[static_cast<std::size_t>(i)] = draw_ndtc_timestep(mu, sched.T, t_rng);
    }
    CalibrationSet set = collect_chains(fp_net, sched, n, stop_ts, seed);
    set.manifest.collector = to_string(CollectorKind::NDTC);
    set.manifest.mu = mu;
    return set;
}

CalibrationSet collect_fixed_t(const ScoreNetwork& fp_net, const NoiseSchedule& sched, int n,
                               int t, std::uint64_t seed) {
    if (n < 1) throw InputError("collect_fixed_t: n must be >= 1");
    if (t < 0 || t > sched.T) throw InputError("collect_fixed_t: t must be in [0, T]");
    std::vector<int> stop_ts(static_cast<std::size_t>(n), t);
    CalibrationSet set = collect_chains(fp_net, sched, n, stop_ts, seed);
    set.manifest.collector = to_string(CollectorKind::FixedT);
    set.manifest.t_fixed = t;
    return set;
}

CalibrationSet collect_uniform_t(const ScoreNetwork& fp_net, const NoiseSchedule& sched, int n,
                                 std::uint64_t seed) {
    if (n < 1) throw InputError("collect_uniform_t: n must be >= 1");
    Rng t_rng(seed, streams::kCollectTimesteps);
    std::vector<int> stop_ts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        stop_ts[static_cast<std::size_t>(i)] = uniform_timestep(sched.T, t_rng);
    }
    CalibrationSet set = collect_chains(fp_net, sched, n, stop_ts, seed);
    set.manifest.collector = to_string(CollectorKind::UniformT);
    return set;
}

CalibrationSet collect_diffusion_images(const ToyDataset& data, const NoiseSchedule& sched,
                                        int n, std::uint64_t seed) {
    if (n < 1) throw InputError("collect_diffusion_images: n must be >= 1");
    if (data.n < 1) throw InputError("collect_diffusion_images: dataset is empty");
    const int dim = static_cast<int>(data.data.dim(1));
    Rng t_rng(seed, streams::kCollectTimesteps);
    std::vector<int> stop_ts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        stop_ts[static_cast<std::size_t>(i)] = uniform_timestep(sched.T, t_rng);
    }

    CalibrationSet set;
    set.samples = Tensor::zeros({n, dim});
    set.timesteps.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        set.timesteps[static_cast<std::size_t>(i)] =
            static_cast<std::uint32_t>(stop_ts[static_cast<std::size_t>(i)]);
    }
    parallel_for(n, [&](std::int64_t i) {
        Rng rng(seed, streams::kChainBase + static_cast<std::uint64_t>(i));
        const auto idx =
            static_cast<std::int64_t>(rng.uniform_below(static_cast<std::uint64_t>(data.n)));
        Tensor x0 = get_row(data.data, idx);
        const int t = stop_ts[static_cast<std::size_t>(i)];
        if (t == 0) {
            set_row(set.samples, i, x0);  // alpha_bar[0] == 1: the draw is x0 itself
            return;
        }
        Tensor eps = Tensor::zeros({1, dim});
        for (int j = 0; j < dim; ++j) eps.data[j] = rng.standard_normal();
        set_row(set.samples, i, q_sample(x0, t, eps, sched));
    });
    set.manifest.collector = to_string(CollectorKind::DiffusionImages);
    set.manifest.seed = seed;
    set.manifest.n = n;
    set.manifest.schedule_kind = to_string(sched.kind);
    set.manifest.T = sched.T;
    set.manifest.const_beta = sched.const_beta;
    set.manifest.dim = dim;
    set.manifest.dataset_kind = to_string(data.kind);
    set.manifest.dataset_n = data.n;
    return set;
}

QuantizedNetwork calibrate_network(const ScoreNetwork& fp_net, const CalibrationSet& calib,
                                   const NoiseSchedule& sched, const QuantMetric& metric,
                                   int bits, const SearchConfig& search,
                                   const HookConfig& hooks) {
    fp_net.validate();
    metric.validate();
    search.validate();
    calib.validate(sched.T);
    if (calib.samples.dim(0) < 1) throw InputError("calibrate_network: empty calibration set");
    if (calib.samples.dim(1) != fp_net.input_dim) {
        throw IncompatibleError("calibrate_network: sample width does not match network");
    }

    SearchConfig weight_search = search;
    weight_search.symmetric = true;
    SearchConfig act_search = search;
    act_search.symmetric = false;

    const std::size_t num_layers = fp_net.layers.size();
    std::vector<QuantParams> weight_params(num_layers);
    parallel_for(static_cast<std::int64_t>(num_layers), [&](std::int64_t l) {
        weight_params[static_cast<std::size_t>(l)] =
            fit_params(fp_net.layers[static_cast<std::size_t>(l)].W, metric, weight_search,
                       bits, /*is_signed=*/true, Granularity::PerChannel, /*axis=*/0);
    });

    // One full-precision pass over the whole set; every row keeps its own t.
    ActivationTaps taps;
    std::vector<int> t_rows(calib.timesteps.size());
    for (std::size_t i = 0; i < calib.timesteps.size(); ++i) {
        t_rows[i] = static_cast<int>(calib.timesteps[i]);
    }
    forward(fp_net, calib.samples, t_rows, sched.T, &taps);

    std::vector<QuantParams> act_params(num_layers);
    parallel_for(static_cast<std::int64_t>(num_layers), [&](std::int64_t l) {
        const Tensor pooled = taps.pooled(static_cast<int>(l));
        act_params[static_cast<std::size_t>(l)] =
            fit_params(pooled, metric, act_search, bits, /*is_signed=*/false,
                       Granularity::PerTensor);
    });

    QuantizedNetwork qnet = quantize_network(fp_net, weight_params, act_params);
    if (hooks.any()) {
        qnet.hooks =
            fit_output_hooks(fp_net, sched, metric, search, hooks, calib.manifest.seed);
    }
    return qnet;
}

OutputHooks fit_output_hooks(const ScoreNetwork& fp_net, const NoiseSchedule& sched,
                             const QuantMetric& metric, const SearchConfig& search,
                             const HookConfig& hooks, std::uint64_t seed) {
    fp_net.validate();
    metric.validate();
    search.validate();
    OutputHooks out;
    if (!hooks.any()) return out;
    if (hooks.fit_samples < 1) throw ConfigError("hook fit_samples must be >= 1");

    SearchConfig act_search = search;
    act_search.symmetric = false;

    SamplerConfig cfg;
    cfg.kind = SamplerKind::DDPM;
    cfg.num_steps = sched.T;
    SamplerCaptures captures;
    sample_batch(QuantizedNetwork::wrap_fp(fp_net), cfg, hooks.fit_samples, sched, seed,
                 /*record_trajectory=*/false, &captures);
    auto fit_pooled = [&](const std::vector<Tensor>& steps) {
        std::int64_t rows = 0;
        for (const Tensor& t : steps) rows += t.dim(0);
        Tensor pooled = Tensor::zeros({rows, fp_net.input_dim});
        std::int64_t r = 0;
        for (const Tensor& t : steps) {
            for (std::int64_t i = 0; i < t.dim(0); ++i) {
                set_row(pooled, r++, get_row(t, i));
            }
        }
        return fit_params(pooled, metric, act_search, hooks.bits, /*is_signed=*/false,
                          Granularity::PerTensor);
    };
    if (hooks.mu) out.mu = fit_pooled(captures.mu);
    if (hooks.sigma) out.sigma = fit_pooled(captures.sigma);
    if (hooks.x_prev) out.x_prev = fit_pooled(captures.x_prev);
    return out;
}

}  // namespace diffquant
