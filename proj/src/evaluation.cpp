#include "diffquant/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "diffquant/errors.hpp"
#include "diffquant/serialize.hpp"
#include "diffquant/streams.hpp"

namespace diffquant {

namespace {

using nlohmann::json;

// Type-7 quantile: linear interpolation between order statistics.
double quantile(const std::vector<double>& sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Value of the empirical quantile function at level p, with order statistics
// placed at midpoints (j + 0.5) / m.
double interp_quantile(const std::vector<double>& sorted, double p) {
    const std::size_t m = sorted.size();
    const double pos = p * static_cast<double>(m) - 0.5;
    if (pos <= 0.0) return sorted.front();
    if (pos >= static_cast<double>(m - 1)) return sorted.back();
    const auto j = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(j);
    return sorted[j] + frac * (sorted[j + 1] - sorted[j]);
}

json sampler_to_json(const SamplerConfig& s) {
    return json{{"kind", to_string(s.kind)},
                {"num_steps", s.num_steps},
                {"eta", s.eta},
                {"variance_mode", to_string(s.variance_mode)},
                {"clip_x0", s.clip_x0},
                {"clip", s.clip}};
}

json metric_to_json(const QuantMetric& m) {
    const char* kind = "lp";
    switch (m.kind) {
        case QuantMetric::Kind::Lp: kind = "lp"; break;
        case QuantMetric::Kind::L1: kind = "l1"; break;
        case QuantMetric::Kind::Cosine: kind = "cosine"; break;
        case QuantMetric::Kind::KL: kind = "kl"; break;
    }
    return json{{"kind", kind}, {"p", m.p}, {"bins", m.bins}};
}

std::string snapshot_json(const char* experiment, const EvalConfig& cfg,
                          const SamplerConfig& sampler_used,
                          const std::vector<std::uint64_t>& seeds) {
    json j;
    j["experiment"] = experiment;
    j["dataset_kind"] = to_string(cfg.dataset_kind);
    j["n_gen"] = cfg.n_gen;
    j["n_ref"] = cfg.n_ref;
    j["n_proj"] = cfg.n_proj;
    j["data_seed"] = cfg.data_seed;
    j["projection_seed"] = cfg.projection_seed;
    j["sampler"] = sampler_to_json(sampler_used);
    j["metric"] = metric_to_json(cfg.metric);
    j["bits"] = cfg.bits;
    j["search"] = json{{"num_candidates", cfg.search.num_candidates},
                       {"min_scale_fraction", cfg.search.min_scale_fraction}};
    j["hooks"] = json{{"bits", cfg.hooks.bits}, {"fit_samples", cfg.hooks.fit_samples}};
    j["calib_n"] = cfg.calib_n;
    j["ndtc_mu"] = cfg.ndtc_mu;
    j["collect_seed"] = cfg.collect_seed;
    j["calib_data_seed"] = cfg.calib_data_seed;
    j["calib_data_n"] = cfg.calib_data_n;
    j["seeds"] = seeds;
    return j.dump();
}

EvalRow make_row(const std::string& label, const QuantizedNetwork& net,
                 const NoiseSchedule& sched, const SamplerConfig& sampler,
                 const EvalConfig& cfg, const std::vector<std::uint64_t>& seeds,
                 const Tensor& reference) {
    EvalRow row;
    row.label = label;
    for (std::uint64_t s : seeds) {
        row.per_seed.push_back(evaluate_swd(net, sched, sampler, cfg, s, reference));
    }
    row.median_value = median_of(row.per_seed);
    return row;
}

}  // namespace

double median_of(std::vector<double> values) {
    if (values.empty()) throw InputError("median of empty list");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double w2_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw InputError("w2_1d needs nonempty inputs");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::vector<double>& coarse = a.size() <= b.size() ? a : b;
    const std::vector<double>& fine = a.size() <= b.size() ? b : a;
    const std::size_t n = coarse.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        const double d = coarse[i] - interp_quantile(fine, p);
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

double sliced_wasserstein(const Tensor& a, const Tensor& b, int n_proj, Rng& rng) {
    if (a.rank() != 2 || b.rank() != 2) throw InputError("sliced_wasserstein needs [n x d]");
    if (a.dim(1) != b.dim(1)) {
        throw IncompatibleError("sliced_wasserstein: dimension mismatch");
    }
    if (a.dim(0) < 2 || b.dim(0) < 2) throw InputError("sliced_wasserstein: need >= 2 rows");
    if (n_proj < 1) throw InputError("sliced_wasserstein: n_proj must be >= 1");

    const std::int64_t d = a.dim(1);
    std::vector<double> dir(static_cast<std::size_t>(d));
    std::vector<double> pa(static_cast<std::size_t>(a.dim(0)));
    std::vector<double> pb(static_cast<std::size_t>(b.dim(0)));
    double acc = 0.0;
    for (int k = 0; k < n_proj; ++k) {
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
                const double g = rng.standard_normal();
                dir[static_cast<std::size_t>(j)] = g;
                norm2 += g * g;
            }
        } while (norm2 == 0.0);
        const double inv_norm = 1.0 / std::sqrt(norm2);
        for (std::int64_t j = 0; j < d; ++j) dir[static_cast<std::size_t>(j)] *= inv_norm;

        for (std::int64_t i = 0; i < a.dim(0); ++i) {
            double s = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
                s += a.at(i, j) * dir[static_cast<std::size_t>(j)];
            }
            pa[static_cast<std::size_t>(i)] = s;
        }
        for (std::int64_t i = 0; i < b.dim(0); ++i) {
            double s = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
                s += b.at(i, j) * dir[static_cast<std::size_t>(j)];
            }
            pb[static_cast<std::size_t>(i)] = s;
        }
        const double w = w2_1d(pa, pb);
        acc += w * w;
    }
    return std::sqrt(acc / static_cast<double>(n_proj));
}

TrajectoryDivergence trajectory_divergence(const ScoreNetwork& fp_net,
                                           const QuantizedNetwork& q_net,
                                           const NoiseSchedule& sched,
                                           const SamplerConfig& cfg, int n,
                                           std::uint64_t seed) {
    if (fp_net.input_dim != q_net.base.input_dim) {
        throw IncompatibleError("trajectory_divergence: input dimensions differ");
    }
    SampleBatch fp = sample_batch(QuantizedNetwork::wrap_fp(fp_net), cfg, n, sched, seed,
                                  /*record_trajectory=*/true);
    SampleBatch q = sample_batch(q_net, cfg, n, sched, seed, /*record_trajectory=*/true);

    TrajectoryDivergence out;
    out.ts = fp.trajectory_ts;
    for (std::size_t k = 0; k < fp.trajectory.size(); ++k) {
        const Tensor& x = fp.trajectory[k];
        const Tensor& y = q.trajectory[k];
        double acc = 0.0;
        for (std::int64_t i = 0; i < x.size(); ++i) {
            const double dv = x.data[i] - y.data[i];
            acc += dv * dv;
        }
        out.gap.push_back(std::sqrt(acc / static_cast<double>(x.size())));
    }
    return out;
}

DriftReport activation_drift_report(const ScoreNetwork& fp_net, const NoiseSchedule& sched,
                                    const std::vector<int>& timesteps, int n_per_t,
                                    std::uint64_t seed) {
    fp_net.validate();
    if (timesteps.empty()) throw InputError("activation_drift_report: no timesteps");
    for (int t : timesteps) {
        if (t < 1 || t > sched.T) {
            throw InputError("activation_drift_report: timestep outside [1, T]");
        }
    }
    if (n_per_t < 1) throw InputError("activation_drift_report: n_per_t must be >= 1");

    const std::size_t num_layers = fp_net.layers.size();
    const std::size_t num_t = timesteps.size();

    // values[layer][t_index]: sorted activation values.
    std::vector<std::vector<std::vector<double>>> values(
        num_layers, std::vector<std::vector<double>>(num_t));
    for (std::size_t k = 0; k < num_t; ++k) {
        const int t = timesteps[k];
        CalibrationSet chains = collect_fixed_t(fp_net, sched, n_per_t, t, seed + static_cast<std::uint64_t>(t));
        ActivationTaps taps;
        std::vector<int> t_rows(static_cast<std::size_t>(n_per_t), t);
        forward(fp_net, chains.samples, t_rows, sched.T, &taps);
        for (std::size_t l = 0; l < num_layers; ++l) {
            const Tensor pooled = taps.pooled(static_cast<int>(l));
            values[l][k].assign(pooled.data.begin(), pooled.data.end());
            std::sort(values[l][k].begin(), values[l][k].end());
        }
    }

    DriftReport report;
    report.timesteps = timesteps;
    for (std::size_t l = 0; l < num_layers; ++l) {
        double global_lo = values[l][0].front();
        double global_hi = values[l][0].back();
        for (std::size_t k = 0; k < num_t; ++k) {
            global_lo = std::min(global_lo, values[l][k].front());
            global_hi = std::max(global_hi, values[l][k].back());
        }
        double min_range = std::numeric_limits<double>::infinity();
        double max_range = 0.0;
        for (std::size_t k = 0; k < num_t; ++k) {
            const std::vector<double>& v = values[l][k];
            ActivationStats st;
            st.layer = static_cast<int>(l);
            st.t = timesteps[k];
            st.count = static_cast<std::int64_t>(v.size());
            st.min = v.front();
            st.max = v.back();
            st.q1 = quantile(v, 0.25);
            st.median = quantile(v, 0.5);
            st.q3 = quantile(v, 0.75);
            st.hist_lo = global_lo;
            st.hist_hi = global_hi;
            st.hist.assign(kHistBins, 0.0);
            const double span = global_hi - global_lo;
            for (double x : v) {
                int bin = 0;
                if (span > 0.0) {
                    bin = static_cast<int>((x - global_lo) / span *
                                           static_cast<double>(kHistBins));
                    bin = std::clamp(bin, 0, kHistBins - 1);
                }
                st.hist[static_cast<std::size_t>(bin)] += 1.0;
            }
            const double range = st.q3 - st.q1;
            min_range = std::min(min_range, range);
            max_range = std::max(max_range, range);
            report.stats.push_back(std::move(st));
        }
        double score = 1.0;
        if (max_range > 0.0) {
            score = min_range > 0.0 ? max_range / min_range
                                    : std::numeric_limits<double>::infinity();
        }
        report.drift_score.push_back(score);
    }
    return report;
}

double evaluate_swd(const QuantizedNetwork& net, const NoiseSchedule& sched,
                    const SamplerConfig& sampler, const EvalConfig& cfg,
                    std::uint64_t gen_seed, const Tensor& reference) {
    SampleBatch gen = sample_batch(net, sampler, cfg.n_gen, sched, gen_seed);
    Rng proj_rng(cfg.projection_seed, streams::kEvalProjections);
    return sliced_wasserstein(gen.samples, reference, cfg.n_proj, proj_rng);
}

EvalReport experiment_operation_selection(const ScoreNetwork& fp_net,
                                          const CalibrationSet& calib,
                                          const NoiseSchedule& sched, const EvalConfig& cfg,
                                          const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw InputError("experiment needs at least one seed");
    const Tensor reference = make_dataset(cfg.dataset_kind, cfg.n_ref, cfg.data_seed).data;

    // Hooks only exist in ancestral stepping; every row samples with full T.
    SamplerConfig op;
    op.kind = SamplerKind::DDPM;
    op.num_steps = sched.T;
    op.variance_mode = cfg.sampler.variance_mode;
    op.clip_x0 = cfg.sampler.clip_x0;
    op.clip = cfg.sampler.clip;

    HookConfig all;
    all.mu = all.sigma = all.x_prev = true;
    all.bits = cfg.hooks.bits;
    all.fit_samples = cfg.hooks.fit_samples;
    const OutputHooks fitted = fit_output_hooks(fp_net, sched, cfg.metric, cfg.search, all,
                                                calib.manifest.seed);

    EvalReport report;
    report.seeds = seeds;
    report.config_json = snapshot_json("operation_selection", cfg, op, seeds);

    const QuantizedNetwork fp = QuantizedNetwork::wrap_fp(fp_net);
    report.rows.push_back(make_row("fp", fp, sched, op, cfg, seeds, reference));

    struct RowSpec {
        const char* label;
        bool mu, sigma, x_prev;
    };
    const RowSpec specs[] = {{"mu", true, false, false},
                             {"sigma", false, true, false},
                             {"x_prev", false, false, true},
                             {"all", true, true, true}};
    for (const RowSpec& spec : specs) {
        QuantizedNetwork net = QuantizedNetwork::wrap_fp(fp_net);
        if (spec.mu) net.hooks.mu = fitted.mu;
        if (spec.sigma) net.hooks.sigma = fitted.sigma;
        if (spec.x_prev) net.hooks.x_prev = fitted.x_prev;
        report.rows.push_back(make_row(spec.label, net, sched, op, cfg, seeds, reference));
    }
    return report;
}

EvalReport experiment_metric_comparison(const ScoreNetwork& fp_net,
                                        const CalibrationSet& calib,
                                        const NoiseSchedule& sched, const EvalConfig& cfg,
                                        const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw InputError("experiment needs at least one seed");
    const Tensor reference = make_dataset(cfg.dataset_kind, cfg.n_ref, cfg.data_seed).data;

    EvalReport report;
    report.seeds = seeds;
    report.config_json = snapshot_json("metric_comparison", cfg, cfg.sampler, seeds);

    struct MetricRow {
        const char* label;
        QuantMetric metric;
    };
    const MetricRow rows[] = {{"l1", QuantMetric::l1()},
                              {"cosine", QuantMetric::cosine()},
                              {"kl", QuantMetric::kl()},
                              {"lp2.4", QuantMetric::lp(2.4)}};
    for (const MetricRow& r : rows) {
        QuantizedNetwork net =
            calibrate_network(fp_net, calib, sched, r.metric, cfg.bits, cfg.search);
        report.rows.push_back(
            make_row(r.label, net, sched, cfg.sampler, cfg, seeds, reference));
    }
    return report;
}

EvalReport experiment_collector_comparison(const ScoreNetwork& fp_net,
                                           const NoiseSchedule& sched, const EvalConfig& cfg,
                                           const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw InputError("experiment needs at least one seed");
    const Tensor reference = make_dataset(cfg.dataset_kind, cfg.n_ref, cfg.data_seed).data;

    EvalReport report;
    report.seeds = seeds;
    report.config_json = snapshot_json("collector_comparison", cfg, cfg.sampler, seeds);

    report.rows.push_back(make_row("fp", QuantizedNetwork::wrap_fp(fp_net), sched,
                                   cfg.sampler, cfg, seeds, reference));

    const int t_half = static_cast<int>(round_half_even(0.5 * static_cast<double>(sched.T)));
    const double mu =
        cfg.ndtc_mu < 0.0 ? 0.4 * static_cast<double>(sched.T) : cfg.ndtc_mu;

    auto add_calibrated = [&](const char* label, const CalibrationSet& set) {
        QuantizedNetwork net =
            calibrate_network(fp_net, set, sched, cfg.metric, cfg.bits, cfg.search);
        report.rows.push_back(make_row(label, net, sched, cfg.sampler, cfg, seeds, reference));
    };
    add_calibrated("fixed_t",
                   collect_fixed_t(fp_net, sched, cfg.calib_n, t_half, cfg.collect_seed));
    add_calibrated("uniform_t",
                   collect_uniform_t(fp_net, sched, cfg.calib_n, cfg.collect_seed));
    const ToyDataset ds =
        make_dataset(cfg.dataset_kind, cfg.calib_data_n, cfg.calib_data_seed);
    add_calibrated("diffusion_images",
                   collect_diffusion_images(ds, sched, cfg.calib_n, cfg.collect_seed));
    add_calibrated("ndtc", collect_ndtc(fp_net, sched, cfg.calib_n, mu, cfg.collect_seed));
    return report;
}

void write_report(const std::string& csv_path, const std::string& json_path,
                  const EvalReport& report) {
    std::vector<std::vector<std::string>> rows;
    for (const EvalRow& row : report.rows) {
        for (std::size_t i = 0; i < row.per_seed.size(); ++i) {
            rows.push_back({row.label, std::to_string(report.seeds[i]),
                            format_double(row.per_seed[i])});
        }
        rows.push_back({row.label, "median", format_double(row.median_value)});
    }
    write_csv(csv_path, {"label", "seed", report.metric_name}, rows);

    json j;
    j["metric"] = report.metric_name;
    j["seeds"] = report.seeds;
    json jrows = json::array();
    for (const EvalRow& row : report.rows) {
        jrows.push_back(json{{"label", row.label},
                             {"per_seed", row.per_seed},
                             {"median", row.median_value}});
    }
    j["rows"] = jrows;
    j["config"] = report.config_json.empty() ? json(nullptr) : json::parse(report.config_json);
    atomic_write_file(json_path, j.dump(2) + "\n");
}

}  // namespace diffquant
