#include "diffquant/commands.hpp"

#include <cmath>
#include <iostream>

#include "json.hpp"

#include "diffquant/calibration.hpp"
#include "diffquant/dataset.hpp"
#include "diffquant/diffusion.hpp"
#include "diffquant/errors.hpp"
#include "diffquant/evaluation.hpp"
#include "diffquant/serialize.hpp"
#include "diffquant/streams.hpp"
#include "diffquant/training.hpp"

namespace diffquant {

namespace {

using nlohmann::json;

void note_written(const std::string& path) { std::cout << "wrote: " << path << "\n"; }

NoiseSchedule schedule_of(const Checkpoint& ckpt) {
    return make_schedule(ckpt.sched_kind, ckpt.T, ckpt.const_beta);
}

// First header line decides how to read a model artifact.
std::string probe_kind(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    const std::size_t nl = bytes.find('\n');
    if (nl == std::string::npos) throw InputError("corrupt artifact: missing header line");
    try {
        json header = json::parse(bytes.substr(0, nl));
        return header.at("kind").get<std::string>();
    } catch (const json::exception& e) {
        throw InputError(std::string("corrupt artifact header: ") + e.what());
    }
}

double resolve_mu(const RunConfig& cfg, int T) {
    return cfg.calib_mu < 0.0 ? 0.4 * static_cast<double>(T) : cfg.calib_mu;
}

int resolve_t(const RunConfig& cfg, int T) {
    return cfg.calib_t < 0 ? static_cast<int>(round_half_even(0.5 * static_cast<double>(T)))
                           : cfg.calib_t;
}

CalibrationSet collect_for_config(const RunConfig& cfg, const LoadedCheckpoint& lc,
                                  const NoiseSchedule& sched) {
    CalibrationSet set;
    switch (cfg.collector) {
        case CollectorKind::NDTC:
            set = collect_ndtc(lc.ckpt.net, sched, cfg.calib_n, resolve_mu(cfg, sched.T),
                               cfg.seed);
            break;
        case CollectorKind::FixedT:
            set = collect_fixed_t(lc.ckpt.net, sched, cfg.calib_n, resolve_t(cfg, sched.T),
                                  cfg.seed);
            break;
        case CollectorKind::UniformT:
            set = collect_uniform_t(lc.ckpt.net, sched, cfg.calib_n, cfg.seed);
            break;
        case CollectorKind::DiffusionImages: {
            const ToyDataset ds =
                make_dataset(cfg.dataset_kind, cfg.dataset_n, cfg.dataset_seed);
            set = collect_diffusion_images(ds, sched, cfg.calib_n, cfg.seed);
            set.manifest.dataset_seed = cfg.dataset_seed;
            break;
        }
    }
    set.manifest.checkpoint_id = lc.id;
    return set;
}

void check_calib_compat(const CalibrationSet& set, const LoadedCheckpoint& lc) {
    if (set.manifest.dim != lc.ckpt.net.input_dim) {
        throw IncompatibleError("calibration set dimension does not match the checkpoint");
    }
    if (set.manifest.T != lc.ckpt.T) {
        throw IncompatibleError("calibration set schedule length does not match the checkpoint");
    }
    if (!set.manifest.checkpoint_id.empty() && set.manifest.checkpoint_id != lc.id) {
        throw IncompatibleError("calibration set was collected from a different checkpoint");
    }
}

EvalConfig eval_config_of(const RunConfig& cfg) {
    EvalConfig e;
    e.dataset_kind = cfg.dataset_kind;
    e.n_gen = cfg.n_gen;
    e.n_ref = cfg.n_ref;
    e.n_proj = cfg.n_proj;
    e.data_seed = cfg.data_seed;
    e.projection_seed = cfg.projection_seed;
    e.sampler = cfg.sampler;
    e.metric = cfg.metric;
    e.bits = cfg.bits;
    e.search = cfg.search;
    e.hooks = cfg.hooks;
    e.calib_n = cfg.calib_n;
    e.ndtc_mu = cfg.calib_mu;  // negative resolves against T downstream
    e.collect_seed = cfg.seed;
    e.calib_data_seed = cfg.dataset_seed;
    e.calib_data_n = cfg.dataset_n;
    return e;
}

}  // namespace

std::string out_path(const RunConfig& cfg, const char* name) {
    return cfg.out_dir + "/" + name;
}

void cmd_train(const RunConfig& cfg) {
    cfg.validate();
    const ToyDataset ds = make_dataset(cfg.dataset_kind, cfg.dataset_n, cfg.dataset_seed);
    const NoiseSchedule sched = make_schedule(cfg.sched_kind, cfg.T, cfg.const_beta);
    const ScoreNetwork net =
        ScoreNetwork::create(cfg.input_dim, cfg.time_embed_dim, cfg.hidden_dims, cfg.seed);
    std::cerr << "training: " << cfg.train.iters << " iterations, batch " << cfg.train.batch
              << "\n";
    const TrainResult result = train(net, sched, ds, cfg.train);

    Checkpoint ckpt;
    ckpt.net = result.net;
    ckpt.sched_kind = cfg.sched_kind;
    ckpt.T = cfg.T;
    ckpt.const_beta = cfg.const_beta;
    ckpt.train = cfg.train;
    ckpt.seed = cfg.seed;
    const std::string ckpt_path = out_path(cfg, kCheckpointFile);
    save_checkpoint(ckpt_path, ckpt);
    note_written(ckpt_path);

    std::vector<std::vector<std::string>> rows;
    rows.reserve(result.loss_history.size());
    for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
        rows.push_back({std::to_string(i), format_double(result.loss_history[i])});
    }
    const std::string loss_path = out_path(cfg, kLossCsvFile);
    write_csv(loss_path, {"iter", "loss"}, rows);
    note_written(loss_path);

    const std::string svg_path = out_path(cfg, kLossSvgFile);
    atomic_write_file(svg_path,
                      svg_line_chart(result.loss_history, "training loss", "loss"));
    note_written(svg_path);
}

void cmd_collect(const RunConfig& cfg, const std::string& checkpoint_path) {
    cfg.validate();
    const LoadedCheckpoint lc = load_checkpoint(checkpoint_path);
    const NoiseSchedule sched = schedule_of(lc.ckpt);
    std::cerr << "collecting: " << to_string(cfg.collector) << ", n " << cfg.calib_n << "\n";
    const CalibrationSet set = collect_for_config(cfg, lc, sched);
    const std::string path = out_path(cfg, kCalibFile);
    save_calibration(path, set);
    note_written(path);
}

void cmd_calibrate(const RunConfig& cfg, const std::string& checkpoint_path,
                   const std::string& calib_path) {
    cfg.validate();
    const LoadedCheckpoint lc = load_checkpoint(checkpoint_path);
    const CalibrationSet set = load_calibration(calib_path);
    check_calib_compat(set, lc);
    const NoiseSchedule sched = schedule_of(lc.ckpt);
    std::cerr << "calibrating: " << cfg.bits << "-bit, metric " << cfg.metric.name() << "\n";

    QuantizedModel qm;
    qm.qnet = calibrate_network(lc.ckpt.net, set, sched, cfg.metric, cfg.bits, cfg.search,
                                cfg.hooks);
    qm.bits = cfg.bits;
    qm.metric = cfg.metric;
    qm.search = cfg.search;
    qm.hook_cfg = cfg.hooks;
    qm.checkpoint_id = lc.id;
    qm.calib_collector = set.manifest.collector;
    qm.sched_kind = lc.ckpt.sched_kind;
    qm.T = lc.ckpt.T;
    qm.const_beta = lc.ckpt.const_beta;
    const std::string path = out_path(cfg, kQModelFile);
    save_qmodel(path, qm);
    note_written(path);
}

void cmd_sample(const RunConfig& cfg, const std::string& model_path, int n,
                std::uint64_t sample_seed) {
    cfg.validate();
    if (n < 1) throw ConfigError("sample count must be >= 1");

    QuantizedNetwork net;
    NoiseSchedule sched;
    std::string model_label;
    const std::string kind = probe_kind(model_path);
    if (kind == "checkpoint") {
        const LoadedCheckpoint lc = load_checkpoint(model_path);
        net = QuantizedNetwork::wrap_fp(lc.ckpt.net);
        sched = schedule_of(lc.ckpt);
        model_label = "fp";
    } else if (kind == "qmodel") {
        const QuantizedModel qm = load_qmodel(model_path);
        net = qm.qnet;
        sched = make_schedule(qm.sched_kind, qm.T, qm.const_beta);
        model_label = std::to_string(qm.bits) + "-bit";
    } else {
        throw IncompatibleError("not a model artifact: " + model_path);
    }
    cfg.sampler.validate(sched);
    std::cerr << "sampling: " << n << " draws, " << to_string(cfg.sampler.kind) << "\n";
    const SampleBatch batch = sample_batch(net, cfg.sampler, n, sched, sample_seed);

    const std::string tensor_path = out_path(cfg, kSamplesFile);
    save_tensor(tensor_path, batch.samples);
    note_written(tensor_path);

    ScatterSeries series;
    series.name = model_label + " samples";
    series.color = "#1f77b4";
    series.points = batch.samples;
    const std::string svg_path = out_path(cfg, kSamplesSvgFile);
    atomic_write_file(svg_path, svg_scatter({series}, "generated samples"));
    note_written(svg_path);
}

void cmd_eval(const RunConfig& cfg, const std::string& samples_a_path,
              const std::string& samples_b_path) {
    cfg.validate();
    const Tensor a = load_tensor(samples_a_path);
    Tensor b;
    std::string label;
    if (!samples_b_path.empty()) {
        b = load_tensor(samples_b_path);
        label = "samples_vs_samples";
    } else {
        b = make_dataset(cfg.dataset_kind, cfg.n_ref, cfg.data_seed).data;
        label = "samples_vs_reference";
    }
    Rng proj_rng(cfg.projection_seed, streams::kEvalProjections);
    const double value = sliced_wasserstein(a, b, cfg.n_proj, proj_rng);

    EvalReport report;
    report.seeds = {cfg.projection_seed};
    EvalRow row;
    row.label = label;
    row.per_seed = {value};
    row.median_value = value;
    report.rows.push_back(row);
    json snapshot;
    snapshot["command"] = "eval";
    snapshot["n_proj"] = cfg.n_proj;
    snapshot["projection_seed"] = cfg.projection_seed;
    snapshot["dataset_kind"] = to_string(cfg.dataset_kind);
    snapshot["n_ref"] = cfg.n_ref;
    snapshot["data_seed"] = cfg.data_seed;
    report.config_json = snapshot.dump();

    const std::string csv_path = out_path(cfg, kEvalCsvFile);
    const std::string json_path = out_path(cfg, kEvalJsonFile);
    write_report(csv_path, json_path, report);
    note_written(csv_path);
    note_written(json_path);
    std::cout << "swd: " << format_double(value) << "\n";
}

void cmd_analyze(const RunConfig& cfg, const std::string& checkpoint_path,
                 const std::string& qmodel_path, int n_per_t, bool svg) {
    cfg.validate();
    if (n_per_t < 1) throw ConfigError("analyze sample count must be >= 1");
    const LoadedCheckpoint lc = load_checkpoint(checkpoint_path);
    const NoiseSchedule sched = schedule_of(lc.ckpt);

    std::vector<int> ts;
    for (double f : {0.1, 0.5, 0.9}) {
        const int t = std::max(
            1, static_cast<int>(round_half_even(f * static_cast<double>(sched.T))));
        if (ts.empty() || ts.back() != t) ts.push_back(t);
    }
    std::cerr << "analyzing: " << ts.size() << " timesteps, " << n_per_t
              << " chains each\n";
    const DriftReport report = activation_drift_report(lc.ckpt.net, sched, ts, n_per_t,
                                                       cfg.seed);

    std::vector<std::string> header = {"layer", "t",  "count", "min",     "q1",
                                       "median", "q3", "max",   "hist_lo", "hist_hi"};
    for (int b = 0; b < kHistBins; ++b) header.push_back("bin" + std::to_string(b));
    std::vector<std::vector<std::string>> rows;
    for (const ActivationStats& st : report.stats) {
        std::vector<std::string> row = {std::to_string(st.layer),
                                        std::to_string(st.t),
                                        std::to_string(st.count),
                                        format_double(st.min),
                                        format_double(st.q1),
                                        format_double(st.median),
                                        format_double(st.q3),
                                        format_double(st.max),
                                        format_double(st.hist_lo),
                                        format_double(st.hist_hi)};
        for (double c : st.hist) row.push_back(format_double(c));
        rows.push_back(std::move(row));
    }
    const std::string acts_path = out_path(cfg, kActivationsCsvFile);
    write_csv(acts_path, header, rows);
    note_written(acts_path);

    std::vector<std::vector<std::string>> drift_rows;
    for (std::size_t l = 0; l < report.drift_score.size(); ++l) {
        drift_rows.push_back({std::to_string(l), format_double(report.drift_score[l])});
    }
    const std::string drift_path = out_path(cfg, kDriftCsvFile);
    write_csv(drift_path, {"layer", "drift_score"}, drift_rows);
    note_written(drift_path);

    if (svg) {
        std::vector<HistPanel> panels;
        for (const ActivationStats& st : report.stats) {
            HistPanel p;
            p.title = "layer " + std::to_string(st.layer) + ", t " + std::to_string(st.t);
            p.lo = st.hist_lo;
            p.hi = st.hist_hi;
            p.counts = st.hist;
            p.q1 = st.q1;
            p.median = st.median;
            p.q3 = st.q3;
            panels.push_back(std::move(p));
        }
        const std::string svg_path = out_path(cfg, kActivationsSvgFile);
        atomic_write_file(svg_path,
                          svg_hist_panels(panels, "activation distributions by timestep"));
        note_written(svg_path);
    }

    if (!qmodel_path.empty()) {
        const QuantizedModel qm = load_qmodel(qmodel_path);
        if (!qm.checkpoint_id.empty() && qm.checkpoint_id != lc.id) {
            throw IncompatibleError("quantized model was calibrated from a different checkpoint");
        }
        cfg.sampler.validate(sched);
        const TrajectoryDivergence td = trajectory_divergence(
            lc.ckpt.net, qm.qnet, sched, cfg.sampler, n_per_t, cfg.seed);
        std::vector<std::vector<std::string>> traj_rows;
        for (std::size_t k = 0; k < td.ts.size(); ++k) {
            traj_rows.push_back({std::to_string(td.ts[k]), format_double(td.gap[k])});
        }
        const std::string traj_path = out_path(cfg, kTrajectoryCsvFile);
        write_csv(traj_path, {"t", "gap"}, traj_rows);
        note_written(traj_path);
    }
}

void cmd_experiment(const RunConfig& cfg, const std::string& checkpoint_path,
                    const std::string& kind, const std::string& calib_path) {
    cfg.validate();
    const LoadedCheckpoint lc = load_checkpoint(checkpoint_path);
    const NoiseSchedule sched = schedule_of(lc.ckpt);
    cfg.sampler.validate(sched);
    const EvalConfig ecfg = eval_config_of(cfg);

    auto calib_for_rows = [&]() {
        if (calib_path.empty()) {
            std::cerr << "collecting calibration set: " << to_string(cfg.collector) << "\n";
            return collect_for_config(cfg, lc, sched);
        }
        CalibrationSet set = load_calibration(calib_path);
        check_calib_compat(set, lc);
        return set;
    };

    EvalReport report;
    std::string name;
    if (kind == "opsel") {
        name = "opsel";
        report = experiment_operation_selection(lc.ckpt.net, calib_for_rows(), sched, ecfg,
                                                cfg.eval_seeds);
    } else if (kind == "metric") {
        name = "metric";
        report = experiment_metric_comparison(lc.ckpt.net, calib_for_rows(), sched, ecfg,
                                              cfg.eval_seeds);
    } else if (kind == "collector") {
        name = "collector";
        report = experiment_collector_comparison(lc.ckpt.net, sched, ecfg, cfg.eval_seeds);
    } else {
        throw ConfigError("unknown experiment kind: " + kind +
                          " (expected opsel, metric, collector)");
    }

    const std::string csv_path = out_path(cfg, ("report_" + name + ".csv").c_str());
    const std::string json_path = out_path(cfg, ("report_" + name + ".json").c_str());
    write_report(csv_path, json_path, report);
    note_written(csv_path);
    note_written(json_path);
    for (const EvalRow& row : report.rows) {
        std::cout << name << " " << row.label << " median "
                  << format_double(row.median_value) << "\n";
    }
}

}  // namespace diffquant
