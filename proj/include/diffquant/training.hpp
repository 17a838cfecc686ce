#pragma once

#include <cstdint>
#include <vector>

#include "diffquant/dataset.hpp"
#include "diffquant/schedule.hpp"
#include "diffquant/score_net.hpp"

namespace diffquant {

struct TrainConfig {
    double lr = 1e-3;
    int batch = 256;
    int iters = 20000;
    std::uint64_t seed = 42;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct TrainResult {
    ScoreNetwork net;
    std::vector<double> loss_history;  // one entry per iteration
};

// Noise-prediction training with Adam. Per iteration the training stream
// supplies, in order: batch row indices, one timestep per row, then the
// target noise row-major. Diverging loss raises an error naming the
// iteration.
TrainResult train(const ScoreNetwork& net, const NoiseSchedule& sched, const ToyDataset& data,
                  const TrainConfig& cfg);

}  // namespace diffquant
