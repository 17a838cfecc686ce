#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffquant/dataset.hpp"
#include "diffquant/quantizer.hpp"
#include "diffquant/rng.hpp"
#include "diffquant/schedule.hpp"
#include "diffquant/score_net.hpp"

namespace diffquant {

enum class CollectorKind { NDTC, FixedT, UniformT, DiffusionImages };

CollectorKind collector_kind_from_string(const std::string& s);
std::string to_string(CollectorKind kind);

// Everything needed to regenerate the set bit for bit.
struct CalibManifest {
    std::string collector;
    std::uint64_t seed = 0;
    int n = 0;
    double mu = 0.0;      // gaussian-timestep location (that collector only)
    int t_fixed = -1;     // fixed-timestep collector only
    std::string schedule_kind;
    int T = 0;
    double const_beta = 0.0;
    std::string checkpoint_id;      // empty when no network was involved
    std::string dataset_kind;       // forward-process collector only
    std::uint64_t dataset_seed = 0;
    int dataset_n = 0;
    int dim = 2;
};

struct CalibrationSet {
    Tensor samples;  // [n x dim]
    std::vector<std::uint32_t> timesteps;
    CalibManifest manifest;

    void validate(int T) const;  // row/timestep counts agree, every t in [0, T]
};

// One timestep draw: floor(mu + sqrt(T/2) * z) clamped to [0, T]. Consumes
// exactly one standard normal.
int draw_ndtc_timestep(double mu, int T, Rng& rng);

// Collectors draw all timesteps from stream kCollectTimesteps first, then run
// one chain per sample on stream kChainBase + i, so chains parallelize without
// changing bytes. Every chain is full-precision ancestral stepping T -> t_i;
// t_i == T stores the initial noise, t_i == 0 runs the chain to completion.
CalibrationSet collect_ndtc(const ScoreNetwork& fp_net, const NoiseSchedule& sched, int n,
                            double mu, std::uint64_t seed);
CalibrationSet collect_fixed_t(const ScoreNetwork& fp_net, const NoiseSchedule& sched, int n,
                               int t, std::uint64_t seed);
CalibrationSet collect_uniform_t(const ScoreNetwork& fp_net, const NoiseSchedule& sched, int n,
                                 std::uint64_t seed);
// Forward-process baseline: x0 rows from the dataset pushed to a uniform t by
// q_sample; t == 0 stores x0 unchanged.
CalibrationSet collect_diffusion_images(const ToyDataset& data, const NoiseSchedule& sched,
                                        int n, std::uint64_t seed);

struct HookConfig {
    bool mu = false;
    bool sigma = false;
    bool x_prev = false;
    int bits = 8;
    int fit_samples = 256;  // batch size of the capture run used for fitting

    bool any() const { return mu || sigma || x_prev; }
};

// Fits hook parameters on the step quantities of a full-precision ancestral
// capture run (per-tensor asymmetric, one parameter set per quantity).
OutputHooks fit_output_hooks(const ScoreNetwork& fp_net, const NoiseSchedule& sched,
                             const QuantMetric& metric, const SearchConfig& search,
                             const HookConfig& hooks, std::uint64_t seed);

// Layer-wise post-training calibration. Weights: per-channel symmetric fit on
// each weight tensor alone. Activations: one full-precision forward pass over
// the whole set with taps, per-tensor asymmetric fit on each layer's pooled
// captures. Output hooks, when enabled, are fitted on pooled step quantities
// captured from full-precision ancestral runs seeded by the manifest. The
// input network is never modified.
QuantizedNetwork calibrate_network(const ScoreNetwork& fp_net, const CalibrationSet& calib,
                                   const NoiseSchedule& sched, const QuantMetric& metric,
                                   int bits, const SearchConfig& search,
                                   const HookConfig& hooks = {});

}  // namespace diffquant
