#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffquant/calibration.hpp"
#include "diffquant/dataset.hpp"
#include "diffquant/diffusion.hpp"
#include "diffquant/quantizer.hpp"
#include "diffquant/rng.hpp"
#include "diffquant/schedule.hpp"
#include "diffquant/score_net.hpp"
#include "diffquant/tensor.hpp"

namespace diffquant {

double median_of(std::vector<double> values);

// 1-D 2-Wasserstein between empirical distributions: quantile levels are the
// midpoints (i + 0.5) / n of the coarser set, matched against the finer set by
// linear interpolation between order statistics at (j + 0.5) / m.
double w2_1d(std::vector<double> a, std::vector<double> b);

// Root mean square over n_proj random unit directions of the projected 1-D
// distance; rng supplies the directions (one gaussian per coordinate,
// normalized).
double sliced_wasserstein(const Tensor& a, const Tensor& b, int n_proj, Rng& rng);

// Runs both networks through the same sampler with identical noise (shared
// per-sample streams) and reports the per-element RMS gap at every snapshot,
// starting at the shared x_T (gap 0).
struct TrajectoryDivergence {
    std::vector<int> ts;
    std::vector<double> gap;
};
TrajectoryDivergence trajectory_divergence(const ScoreNetwork& fp_net,
                                           const QuantizedNetwork& q_net,
                                           const NoiseSchedule& sched,
                                           const SamplerConfig& cfg, int n,
                                           std::uint64_t seed);

struct ActivationStats {
    int layer = 0;
    int t = 0;
    std::int64_t count = 0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double hist_lo = 0.0;  // layer-global histogram range, shared across t
    double hist_hi = 0.0;
    std::vector<double> hist;  // counts; mass sums to count
};

struct DriftReport {
    std::vector<int> timesteps;
    std::vector<ActivationStats> stats;  // layer-major, timestep-minor
    std::vector<double> drift_score;     // per layer: max_t(q3-q1) / min_t(q3-q1)
};

inline constexpr int kHistBins = 64;

// Generates n_per_t chain states x_t per requested timestep (full-precision
// ancestral chains), forwards them with taps, and aggregates per-layer
// per-timestep statistics. Degenerate ranges: all zero -> score 1; some zero
// -> infinity.
DriftReport activation_drift_report(const ScoreNetwork& fp_net, const NoiseSchedule& sched,
                                    const std::vector<int>& timesteps, int n_per_t,
                                    std::uint64_t seed);

struct EvalConfig {
    DatasetKind dataset_kind = DatasetKind::SwissRoll;
    int n_gen = 2048;
    int n_ref = 2048;
    int n_proj = 128;
    std::uint64_t data_seed = 9900;
    std::uint64_t projection_seed = 9910;
    SamplerConfig sampler;  // generation sampler for the metric/collector tables
    QuantMetric metric = QuantMetric::lp(2.4);
    int bits = 8;
    SearchConfig search;
    HookConfig hooks;
    int calib_n = 1024;
    double ndtc_mu = -1.0;  // negative: default 0.4 * T
    std::uint64_t collect_seed = 42;
    std::uint64_t calib_data_seed = 7;  // forward-process collector's dataset
    int calib_data_n = 4096;
};

struct EvalRow {
    std::string label;
    std::vector<double> per_seed;
    double median_value = 0.0;
};

struct EvalReport {
    std::string metric_name = "swd";
    std::vector<std::uint64_t> seeds;
    std::vector<EvalRow> rows;
    std::string config_json;  // snapshot sufficient to regenerate the table
};

// Median SWD against a fresh reference set, one generation per seed.
double evaluate_swd(const QuantizedNetwork& net, const NoiseSchedule& sched,
                    const SamplerConfig& sampler, const EvalConfig& cfg,
                    std::uint64_t gen_seed, const Tensor& reference);

// Output-hook isolation table: rows fp, mu, sigma, x_prev, all. Hooks exist
// only in ancestral sampling, so every row runs the full-T ancestral sampler;
// weights and activations stay full-precision.
EvalReport experiment_operation_selection(const ScoreNetwork& fp_net,
                                          const CalibrationSet& calib,
                                          const NoiseSchedule& sched, const EvalConfig& cfg,
                                          const std::vector<std::uint64_t>& seeds);

// Calibration-metric table: rows l1, cosine, kl, lp2.4, each a full
// weight+activation calibration against the same set.
EvalReport experiment_metric_comparison(const ScoreNetwork& fp_net,
                                        const CalibrationSet& calib,
                                        const NoiseSchedule& sched, const EvalConfig& cfg,
                                        const std::vector<std::uint64_t>& seeds);

// Calibration-set collector table: rows fp, fixed_t (at T/2), uniform_t,
// diffusion_images, ndtc (default location), each collected fresh and
// calibrated with cfg.metric.
EvalReport experiment_collector_comparison(const ScoreNetwork& fp_net,
                                           const NoiseSchedule& sched, const EvalConfig& cfg,
                                           const std::vector<std::uint64_t>& seeds);

// CSV: one row per (label, seed) plus a median row per label. The JSON mirror
// carries the same table plus the config snapshot.
void write_report(const std::string& csv_path, const std::string& json_path,
                  const EvalReport& report);

}  // namespace diffquant
