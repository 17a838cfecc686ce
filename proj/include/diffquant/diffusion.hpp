#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffquant/rng.hpp"
#include "diffquant/schedule.hpp"
#include "diffquant/score_net.hpp"
#include "diffquant/tensor.hpp"

namespace diffquant {

enum class SamplerKind { DDPM, DDIM };
enum class VarianceMode { FixedSmall, FixedLarge };

SamplerKind sampler_kind_from_string(const std::string& s);
std::string to_string(SamplerKind kind);
VarianceMode variance_mode_from_string(const std::string& s);
std::string to_string(VarianceMode mode);

struct SamplerConfig {
    SamplerKind kind = SamplerKind::DDIM;
    int num_steps = 50;
    double eta = 0.0;                                 // DDIM stochasticity
    VarianceMode variance_mode = VarianceMode::FixedSmall;
    bool clip_x0 = false;
    double clip = 1.0;

    void validate(const NoiseSchedule& sched) const;  // DDPM needs num_steps == T
};

// Forward process draw at an arbitrary timestep:
// sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * eps.
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

// Posterior q(x_{t-1} | x_t, x0); defined for t >= 2.
struct Posterior {
    Tensor mean;
    double var = 0.0;
};
Posterior q_posterior(const Tensor& x0, const Tensor& xt, int t, const NoiseSchedule& sched);

// Algebraic inversion of the forward draw.
Tensor predict_x0_from_eps(const Tensor& xt, int t, const Tensor& eps_hat,
                           const NoiseSchedule& sched, bool clip_enabled = false,
                           double clip = 1.0);

// Optional per-step captures of the quantities the output hooks act on.
struct SamplerCaptures {
    std::vector<Tensor> mu;
    std::vector<Tensor> sigma;
    std::vector<Tensor> x_prev;
};

// One reverse transition x_t -> x_{t-1}. Applies the network's output hooks
// to mu, the broadcast variance tensor, and the sampled x_{t-1}. t == 1 adds
// no noise. Works on any [n x dim] batch; noise is drawn row-major from rng.
Tensor p_sample_ddpm(const QuantizedNetwork& net, const Tensor& xt, int t,
                     const NoiseSchedule& sched, Rng& rng,
                     const SamplerConfig& cfg = {}, SamplerCaptures* captures = nullptr);
Tensor p_sample_ddpm(const ScoreNetwork& net, const Tensor& xt, int t,
                     const NoiseSchedule& sched, Rng& rng, const SamplerConfig& cfg = {});

// Deterministic-by-default implicit update from t to t_prev (t_prev may be 0).
// eta == 0 draws no randomness; rng may then be nullptr.
Tensor ddim_step(const QuantizedNetwork& net, const Tensor& xt, int t, int t_prev,
                 double eta, const NoiseSchedule& sched, Rng* rng,
                 const SamplerConfig& cfg = {});
Tensor ddim_step(const ScoreNetwork& net, const Tensor& xt, int t, int t_prev, double eta,
                 const NoiseSchedule& sched, Rng* rng);

// Strictly decreasing timestep subsequence of length num_steps; the last
// transition targets t_prev = 0.
std::vector<int> respace(int T, int num_steps);

struct SampleBatch {
    Tensor samples;                  // [n x dim]
    std::vector<Tensor> trajectory;  // snapshots [n x dim]; first is x_T
    std::vector<int> trajectory_ts;  // timestep of each snapshot, T ... 0
};

// Documented sequential draw order: one stream, per-sample-major (sample i's
// x_T and every step draw precede sample i+1's).
SampleBatch sample(const QuantizedNetwork& net, const SamplerConfig& cfg, int n,
                   const NoiseSchedule& sched, Rng& rng, bool record_trajectory = false);

// Pre-split variant: sample i draws from stream (seed, kSampleBase + i).
// Parallelizes across the batch; bit-identical for any thread count.
SampleBatch sample_batch(const QuantizedNetwork& net, const SamplerConfig& cfg, int n,
                         const NoiseSchedule& sched, std::uint64_t seed,
                         bool record_trajectory = false, SamplerCaptures* captures = nullptr);

}  // namespace diffquant
