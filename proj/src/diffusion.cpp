#include "diffquant/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "diffquant/errors.hpp"
#include "diffquant/quantizer.hpp"
#include "diffquant/streams.hpp"

namespace diffquant {

namespace {

// Noise provider abstracting the two draw-order modes. The shared mode draws
// row-major from one stream; the per-row mode keeps one stream per sample so
// batched and per-sample execution agree bit for bit.
struct NoiseSource {
    Rng* shared = nullptr;
    std::vector<Rng>* per_row = nullptr;

    void fill_normal(Tensor& z) const {
        const std::int64_t n = z.dim(0);
        const std::int64_t d = z.dim(1);
        if (shared != nullptr) {
            for (std::int64_t i = 0; i < n * d; ++i) z.data[i] = shared->standard_normal();
            return;
        }
        for (std::int64_t i = 0; i < n; ++i) {
            Rng& r = (*per_row)[static_cast<std::size_t>(i)];
            for (std::int64_t j = 0; j < d; ++j) z.data[i * d + j] = r.standard_normal();
        }
    }
};

void check_state_shape(const Tensor& x, const char* what) {
    if (x.rank() != 2) throw InputError(std::string(what) + " must be a [n x dim] tensor");
}

Tensor ddpm_step_core(const QuantizedNetwork& net, const Tensor& xt, int t,
                      const NoiseSchedule& sched, const SamplerConfig& cfg,
                      const NoiseSource& noise, SamplerCaptures* captures) {
    check_state_shape(xt, "sampler state");
    sched.check_t(t);
    const std::int64_t n = xt.dim(0);

    std::vector<int> t_rows(static_cast<std::size_t>(n), t);
    Tensor eps_hat = forward(net, xt, t_rows, sched.T);
    Tensor x0_hat = predict_x0_from_eps(xt, t, eps_hat, sched, cfg.clip_x0, cfg.clip);

    Tensor mu = xt;
    for (std::int64_t i = 0; i < mu.size(); ++i) {
        mu.data[i] = sched.post_coef_x0[static_cast<std::size_t>(t)] * x0_hat.data[i] +
                     sched.post_coef_xt[static_cast<std::size_t>(t)] * xt.data[i];
    }
    if (net.hooks.mu) mu = quant_dequant(mu, *net.hooks.mu);

    const double var = cfg.variance_mode == VarianceMode::FixedSmall
                           ? sched.beta_tilde[static_cast<std::size_t>(t)]
                           : sched.beta[static_cast<std::size_t>(t)];
    Tensor sigma2 = Tensor::full(xt.shape, var);
    if (net.hooks.sigma) sigma2 = quant_dequant(sigma2, *net.hooks.sigma);

    Tensor x_prev = mu;
    if (t >= 2) {
        Tensor z = Tensor::zeros(xt.shape);
        noise.fill_normal(z);
        for (std::int64_t i = 0; i < x_prev.size(); ++i) {
            x_prev.data[i] += std::sqrt(sigma2.data[i]) * z.data[i];
        }
    }
    if (net.hooks.x_prev) x_prev = quant_dequant(x_prev, *net.hooks.x_prev);

    if (captures != nullptr) {
        captures->mu.push_back(mu);
        captures->sigma.push_back(sigma2);
        captures->x_prev.push_back(x_prev);
    }
    return x_prev;
}

Tensor ddim_step_core(const QuantizedNetwork& net, const Tensor& xt, int t, int t_prev,
                      double eta, const NoiseSchedule& sched, const NoiseSource* noise,
                      const SamplerConfig& cfg) {
    check_state_shape(xt, "sampler state");
    sched.check_t(t);
    if (t_prev < 0 || t_prev >= t) throw InputError("ddim_step needs 0 <= t_prev < t");
    if (eta < 0.0 || eta > 1.0) throw InputError("eta must be in [0, 1]");
    if (eta > 0.0 && noise == nullptr) throw InputError("eta > 0 needs a noise source");
    const std::int64_t n = xt.dim(0);

    std::vector<int> t_rows(static_cast<std::size_t>(n), t);
    Tensor eps_hat = forward(net, xt, t_rows, sched.T);
    Tensor x0_hat = predict_x0_from_eps(xt, t, eps_hat, sched, cfg.clip_x0, cfg.clip);

    const double abar_t = sched.alpha_bar[static_cast<std::size_t>(t)];
    const double abar_prev = sched.alpha_bar[static_cast<std::size_t>(t_prev)];
    const double sigma =
        eta * std::sqrt((1.0 - abar_prev) / (1.0 - abar_t)) * std::sqrt(1.0 - abar_t / abar_prev);
    // Exact zero at t_prev == 0; the max() only absorbs rounding residue.
    const double dir_coef = std::sqrt(std::max(1.0 - abar_prev - sigma * sigma, 0.0));

    Tensor x = xt;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        x.data[i] = std::sqrt(abar_prev) * x0_hat.data[i] + dir_coef * eps_hat.data[i];
    }
    if (eta > 0.0) {
        Tensor z = Tensor::zeros(xt.shape);
        noise->fill_normal(z);
        for (std::int64_t i = 0; i < x.size(); ++i) x.data[i] += sigma * z.data[i];
    }
    return x;
}

std::vector<std::pair<int, int>> transition_list(const SamplerConfig& cfg,
                                                 const NoiseSchedule& sched) {
    std::vector<std::pair<int, int>> out;
    if (cfg.kind == SamplerKind::DDPM) {
        for (int t = sched.T; t >= 1; --t) out.emplace_back(t, t - 1);
        return out;
    }
    std::vector<int> ts = respace(sched.T, cfg.num_steps);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
        out.emplace_back(ts[k], t_prev);
    }
    return out;
}

Tensor run_transition(const QuantizedNetwork& net, const Tensor& x, int t, int t_prev,
                      const SamplerConfig& cfg, const NoiseSchedule& sched,
                      const NoiseSource& noise, SamplerCaptures* captures) {
    if (cfg.kind == SamplerKind::DDPM) {
        return ddpm_step_core(net, x, t, sched, cfg, noise, captures);
    }
    return ddim_step_core(net, x, t, t_prev, cfg.eta, sched, &noise, cfg);
}

}  // namespace

SamplerKind sampler_kind_from_string(const std::string& s) {
    if (s == "ddpm") return SamplerKind::DDPM;
    if (s == "ddim") return SamplerKind::DDIM;
    throw ConfigError("unknown sampler kind: " + s);
}

std::string to_string(SamplerKind kind) {
    return kind == SamplerKind::DDPM ? "ddpm" : "ddim";
}

VarianceMode variance_mode_from_string(const std::string& s) {
    if (s == "fixed_small") return VarianceMode::FixedSmall;
    if (s == "fixed_large") return VarianceMode::FixedLarge;
    throw ConfigError("unknown variance mode: " + s);
}

std::string to_string(VarianceMode mode) {
    return mode == VarianceMode::FixedSmall ? "fixed_small" : "fixed_large";
}

void SamplerConfig::validate(const NoiseSchedule& sched) const {
    if (num_steps < 1) throw ConfigError("sampler num_steps must be >= 1");
    if (num_steps > sched.T) throw ConfigError("sampler num_steps cannot exceed T");
    if (kind == SamplerKind::DDPM && num_steps != sched.T) {
        throw ConfigError("ancestral sampling uses every timestep; set num_steps = T");
    }
    if (eta < 0.0 || eta > 1.0) throw ConfigError("eta must be in [0, 1]");
    if (clip_x0 && clip <= 0.0) throw ConfigError("clip bound must be positive");
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    sched.check_t(t);
    if (!same_shape(x0, eps)) throw IncompatibleError("q_sample: x0 and eps shapes differ");
    const double abar = sched.alpha_bar[static_cast<std::size_t>(t)];
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    Tensor out = x0;
    for (std::int64_t i = 0; i < out.size(); ++i) {
        out.data[i] = a * x0.data[i] + b * eps.data[i];
    }
    return out;
}

Posterior q_posterior(const Tensor& x0, const Tensor& xt, int t, const NoiseSchedule& sched) {
    if (t < 2) throw InputError("q_posterior is defined for t >= 2");
    sched.check_t(t);
    if (!same_shape(x0, xt)) throw IncompatibleError("q_posterior: x0 and xt shapes differ");
    Posterior post;
    post.mean = x0;
    for (std::int64_t i = 0; i < post.mean.size(); ++i) {
        post.mean.data[i] = sched.post_coef_x0[static_cast<std::size_t>(t)] * x0.data[i] +
                            sched.post_coef_xt[static_cast<std::size_t>(t)] * xt.data[i];
    }
    post.var = sched.beta_tilde[static_cast<std::size_t>(t)];
    return post;
}

Tensor predict_x0_from_eps(const Tensor& xt, int t, const Tensor& eps_hat,
                           const NoiseSchedule& sched, bool clip_enabled, double clip) {
    sched.check_t(t);
    if (!same_shape(xt, eps_hat)) {
        throw IncompatibleError("predict_x0_from_eps: xt and eps shapes differ");
    }
    const double abar = sched.alpha_bar[static_cast<std::size_t>(t)];
    const double inv_sqrt = 1.0 / std::sqrt(abar);
    const double coef = std::sqrt(1.0 - abar);
    Tensor out = xt;
    for (std::int64_t i = 0; i < out.size(); ++i) {
        double v = inv_sqrt * (xt.data[i] - coef * eps_hat.data[i]);
        if (clip_enabled) v = std::clamp(v, -clip, clip);
        out.data[i] = v;
    }
    return out;
}

Tensor p_sample_ddpm(const QuantizedNetwork& net, const Tensor& xt, int t,
                     const NoiseSchedule& sched, Rng& rng, const SamplerConfig& cfg,
                     SamplerCaptures* captures) {
    NoiseSource noise;
    noise.shared = &rng;
    return ddpm_step_core(net, xt, t, sched, cfg, noise, captures);
}

Tensor p_sample_ddpm(const ScoreNetwork& net, const Tensor& xt, int t,
                     const NoiseSchedule& sched, Rng& rng, const SamplerConfig& cfg) {
    return p_sample_ddpm(QuantizedNetwork::wrap_fp(net), xt, t, sched, rng, cfg);
}

Tensor ddim_step(const QuantizedNetwork& net, const Tensor& xt, int t, int t_prev, double eta,
                 const NoiseSchedule& sched, Rng* rng, const SamplerConfig& cfg) {
    NoiseSource noise;
    noise.shared = rng;
    return ddim_step_core(net, xt, t, t_prev, eta, sched, rng != nullptr ? &noise : nullptr,
                          cfg);
}

Tensor ddim_step(const ScoreNetwork& net, const Tensor& xt, int t, int t_prev, double eta,
                 const NoiseSchedule& sched, Rng* rng) {
    return ddim_step(QuantizedNetwork::wrap_fp(net), xt, t, t_prev, eta, sched, rng);
}

std::vector<int> respace(int T, int num_steps) {
    if (T < 1) throw InputError("respace: T must be >= 1");
    if (num_steps < 1 || num_steps > T) throw InputError("respace: need 1 <= num_steps <= T");
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(num_steps));
    for (int k = 0; k < num_steps; ++k) {
        const double raw = static_cast<double>(T) *
                           (1.0 - static_cast<double>(k) / static_cast<double>(num_steps));
        int t = static_cast<int>(round_half_even(raw));
        // Nudge below the previous entry; keeps the list strictly decreasing
        // when rounding collides (possible only for num_steps close to T).
        if (!ts.empty() && t >= ts.back()) t = ts.back() - 1;
        if (t < 1) throw NumericError("respace produced a timestep below 1");
        ts.push_back(t);
    }
    return ts;
}

SampleBatch sample(const QuantizedNetwork& net, const SamplerConfig& cfg, int n,
                   const NoiseSchedule& sched, Rng& rng, bool record_trajectory) {
    cfg.validate(sched);
    if (n < 1) throw InputError("sample: n must be >= 1");
    const int dim = net.base.input_dim;
    const auto transitions = transition_list(cfg, sched);
    const std::size_t num_snapshots = transitions.size() + 1;

    SampleBatch batch;
    batch.samples = Tensor::zeros({n, dim});
    if (record_trajectory) {
        batch.trajectory.assign(num_snapshots, Tensor::zeros({n, dim}));
        batch.trajectory_ts.push_back(sched.T);
        for (const auto& tr : transitions) batch.trajectory_ts.push_back(tr.second);
    }

    NoiseSource noise;
    noise.shared = &rng;
    for (int i = 0; i < n; ++i) {
        Tensor x = Tensor::zeros({1, dim});
        for (int j = 0; j < dim; ++j) x.data[j] = rng.standard_normal();
        if (record_trajectory) set_row(batch.trajectory[0], i, x);
        for (std::size_t k = 0; k < transitions.size(); ++k) {
            x = run_transition(net, x, transitions[k].first, transitions[k].second, cfg, sched,
                               noise, nullptr);
            if (record_trajectory) set_row(batch.trajectory[k + 1], i, x);
        }
        set_row(batch.samples, i, x);
    }
    return batch;
}

SampleBatch sample_batch(const QuantizedNetwork& net, const SamplerConfig& cfg, int n,
                         const NoiseSchedule& sched, std::uint64_t seed,
                         bool record_trajectory, SamplerCaptures* captures) {
    cfg.validate(sched);
    if (n < 1) throw InputError("sample_batch: n must be >= 1");
    const int dim = net.base.input_dim;
    const auto transitions = transition_list(cfg, sched);

    std::vector<Rng> row_rngs;
    row_rngs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        row_rngs.emplace_back(seed, streams::kSampleBase + static_cast<std::uint64_t>(i));
    }

    SampleBatch batch;
    Tensor x = Tensor::zeros({n, dim});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < dim; ++j) {
            x.data[static_cast<std::int64_t>(i) * dim + j] =
                row_rngs[static_cast<std::size_t>(i)].standard_normal();
        }
    }
    if (record_trajectory) {
        batch.trajectory.push_back(x);
        batch.trajectory_ts.push_back(sched.T);
    }

    NoiseSource noise;
    noise.per_row = &row_rngs;
    for (const auto& tr : transitions) {
        x = run_transition(net, x, tr.first, tr.second, cfg, sched, noise, captures);
        if (record_trajectory) {
            batch.trajectory.push_back(x);
            batch.trajectory_ts.push_back(tr.second);
        }
    }
    batch.samples = x;
    return batch;
}

}  // namespace diffquant
