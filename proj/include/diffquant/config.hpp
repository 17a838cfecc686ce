#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffquant/calibration.hpp"
#include "diffquant/dataset.hpp"
#include "diffquant/diffusion.hpp"
#include "diffquant/quantizer.hpp"
#include "diffquant/schedule.hpp"
#include "diffquant/training.hpp"

namespace diffquant {

// Whole-run settings. JSON sections: seed, dataset, schedule, model, train,
// sampler, quant, calibration, eval, io. Unknown keys are rejected by name;
// absent keys take the defaults below.
struct RunConfig {
    std::uint64_t seed = 42;

    DatasetKind dataset_kind = DatasetKind::SwissRoll;
    int dataset_n = 4096;
    std::uint64_t dataset_seed = 7;

    ScheduleKind sched_kind = ScheduleKind::Linear;
    int T = 100;
    double const_beta = 0.02;

    int input_dim = 2;  // datasets are planar; not a config key
    int time_embed_dim = 32;
    std::vector<int> hidden_dims{128, 128, 128};

    TrainConfig train;
    bool train_seed_set = false;  // config gave train.seed explicitly

    SamplerConfig sampler;

    int bits = 8;
    QuantMetric metric = QuantMetric::lp(2.4);
    SearchConfig search;
    HookConfig hooks;

    CollectorKind collector = CollectorKind::NDTC;
    int calib_n = 1024;
    double calib_mu = -1.0;  // negative: resolve to 0.4 * T
    int calib_t = -1;        // negative: resolve to T / 2

    int n_gen = 2048;
    int n_ref = 2048;
    int n_proj = 128;
    std::uint64_t data_seed = 9900;
    std::uint64_t projection_seed = 9910;
    std::vector<std::uint64_t> eval_seeds{101, 202, 303, 404, 505};

    std::string out_dir = "out";

    double resolved_mu() const;
    int resolved_t() const;
    void validate() const;
};

QuantMetric metric_from_string(const std::string& s, int kl_bins = 2048);

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Fully resolved settings as pretty JSON; echoed at the start of every run.
std::string effective_config(const RunConfig& cfg);

}  // namespace diffquant
