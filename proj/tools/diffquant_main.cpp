#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "diffquant/commands.hpp"
#include "diffquant/config.hpp"
#include "diffquant/errors.hpp"
#include "diffquant/parallel.hpp"
#include "diffquant/version.hpp"

namespace {

using diffquant::RunConfig;

struct GlobalFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    bool threads_set = false;
    std::string out_dir;
};

// Config file first, then command-line overrides on top.
RunConfig resolve_config(const GlobalFlags& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg = diffquant::load_run_config(g.config_path);
    if (g.seed_set) {
        cfg.seed = g.seed;
        if (!cfg.train_seed_set) cfg.train.seed = g.seed;
    }
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"metric-calibrated low-bit quantization for toy denoising models"};
    app.require_subcommand(1);
    // Global flags (--config, --seed, ...) are valid after the subcommand too.
    app.fallthrough();
    app.set_version_flag("--version", diffquant::kVersionString);

    GlobalFlags g;
    app.add_option("--config", g.config_path, "JSON run configuration");
    app.add_option("--seed", g.seed, "master seed override")->each([&](const std::string&) {
        g.seed_set = true;
    });
    app.add_option("--threads", g.threads, "worker thread count override")
        ->each([&](const std::string&) { g.threads_set = true; });
    app.add_option("--out-dir", g.out_dir, "output directory override");

    auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
    std::string train_dataset;
    int train_iters = -1;
    train->add_option("--dataset", train_dataset, "dataset kind override");
    train->add_option("--iters", train_iters, "training iteration override");

    auto* collect = app.add_subcommand("collect", "collect a calibration set");
    std::string collect_ckpt, collect_collector;
    int collect_n = -1, collect_t = -2;
    double collect_mu = -2.0;
    collect->add_option("--checkpoint", collect_ckpt, "trained checkpoint")->required();
    collect->add_option("--collector", collect_collector, "collector kind override");
    collect->add_option("--n", collect_n, "calibration set size override");
    collect->add_option("--t", collect_t, "fixed collector timestep override");
    collect->add_option("--mu", collect_mu, "gaussian collector location override");

    auto* calibrate = app.add_subcommand("calibrate", "fit quantization parameters");
    std::string calibrate_ckpt, calibrate_calib, calibrate_metric;
    int calibrate_bits = -1;
    calibrate->add_option("--checkpoint", calibrate_ckpt, "trained checkpoint")->required();
    calibrate->add_option("--calib", calibrate_calib, "calibration set file")->required();
    calibrate->add_option("--bits", calibrate_bits, "bit width override");
    calibrate->add_option("--metric", calibrate_metric,
                          "calibration metric override (l1, cosine, kl, lp<p>)");

    auto* sample = app.add_subcommand("sample", "draw samples from a model artifact");
    std::string sample_model, sample_sampler;
    int sample_n = 2048, sample_steps = -1;
    std::uint64_t sample_seed = 0;
    bool sample_seed_set = false;
    sample->add_option("--model", sample_model, "checkpoint or quantized model")->required();
    sample->add_option("--n", sample_n, "number of samples");
    sample->add_option("--sampler", sample_sampler, "sampler kind override");
    sample->add_option("--steps", sample_steps, "sampler step count override");
    sample->add_option("--sample-seed", sample_seed, "generation seed (defaults to --seed)")
        ->each([&](const std::string&) { sample_seed_set = true; });

    auto* eval = app.add_subcommand("eval", "distribution distance between sample sets");
    std::string eval_a, eval_b;
    eval->add_option("--a", eval_a, "sample tensor file")->required();
    eval->add_option("--b", eval_b, "second tensor (default: held-out reference data)");

    auto* analyze = app.add_subcommand("analyze", "activation statistics across timesteps");
    std::string analyze_ckpt, analyze_qmodel;
    int analyze_n = 256;
    bool analyze_svg = false;
    analyze->add_option("--checkpoint", analyze_ckpt, "trained checkpoint")->required();
    analyze->add_option("--qmodel", analyze_qmodel,
                        "quantized model for divergence diagnostics");
    analyze->add_option("--n", analyze_n, "chains per timestep");
    analyze->add_flag("--svg", analyze_svg, "also write histogram panels");

    auto* experiment = app.add_subcommand("experiment", "replication tables");
    std::string exp_kind, exp_ckpt, exp_calib;
    experiment->add_option("--kind", exp_kind, "opsel | metric | collector")->required();
    experiment->add_option("--checkpoint", exp_ckpt, "trained checkpoint")->required();
    experiment->add_option("--calib", exp_calib, "calibration set (opsel/metric rows)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (g.threads_set) {
            if (g.threads < 1) throw diffquant::ConfigError("--threads must be >= 1");
            diffquant::set_thread_count(g.threads);
        }
        RunConfig cfg = resolve_config(g);

        if (*train) {
            if (!train_dataset.empty()) {
                cfg.dataset_kind = diffquant::dataset_kind_from_string(train_dataset);
            }
            if (train_iters >= 0) cfg.train.iters = train_iters;
        }
        if (*collect) {
            if (!collect_collector.empty()) {
                cfg.collector = diffquant::collector_kind_from_string(collect_collector);
            }
            if (collect_n >= 0) cfg.calib_n = collect_n;
            if (collect_t >= -1) cfg.calib_t = collect_t;
            if (collect_mu >= -1.0) cfg.calib_mu = collect_mu;
        }
        if (*calibrate) {
            if (calibrate_bits >= 0) cfg.bits = calibrate_bits;
            if (!calibrate_metric.empty()) {
                cfg.metric = diffquant::metric_from_string(calibrate_metric,
                                                           cfg.metric.bins);
            }
        }
        if (*sample) {
            if (!sample_sampler.empty()) {
                cfg.sampler.kind = diffquant::sampler_kind_from_string(sample_sampler);
            }
            if (sample_steps >= 0) cfg.sampler.num_steps = sample_steps;
        }
        cfg.validate();

        std::cout << "effective config:\n" << diffquant::effective_config(cfg) << "\n";

        if (*train) {
            diffquant::cmd_train(cfg);
        } else if (*collect) {
            diffquant::cmd_collect(cfg, collect_ckpt);
        } else if (*calibrate) {
            diffquant::cmd_calibrate(cfg, calibrate_ckpt, calibrate_calib);
        } else if (*sample) {
            diffquant::cmd_sample(cfg, sample_model, sample_n,
                                  sample_seed_set ? sample_seed : cfg.seed);
        } else if (*eval) {
            diffquant::cmd_eval(cfg, eval_a, eval_b);
        } else if (*analyze) {
            diffquant::cmd_analyze(cfg, analyze_ckpt, analyze_qmodel, analyze_n, analyze_svg);
        } else if (*experiment) {
            diffquant::cmd_experiment(cfg, exp_ckpt, exp_kind, exp_calib);
        }
        return 0;
    } catch (const diffquant::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const diffquant::MissingInputError& e) {
        std::cerr << "missing input: " << e.what() << "\n";
        return 3;
    } catch (const diffquant::IncompatibleError& e) {
        std::cerr << "incompatible artifact: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    }
}
