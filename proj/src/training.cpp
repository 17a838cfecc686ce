#include "diffquant/training.hpp"

#include <cmath>
#include <string>

#include "diffquant/diffusion.hpp"
#include "diffquant/errors.hpp"
#include "diffquant/rng.hpp"
#include "diffquant/streams.hpp"

namespace diffquant {

void TrainConfig::validate() const {
    if (lr < 0.0) throw ConfigError("train lr must be >= 0");
    if (batch < 1) throw ConfigError("train batch must be >= 1");
    if (iters < 0) throw ConfigError("train iters must be >= 0");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
        throw ConfigError("adam betas must be in [0, 1)");
    }
    if (adam_eps <= 0.0) throw ConfigError("adam eps must be positive");
}

TrainResult train(const ScoreNetwork& net, const NoiseSchedule& sched, const ToyDataset& data,
                  const TrainConfig& cfg) {
    cfg.validate();
    net.validate();
    if (data.n < 1) throw InputError("train: dataset is empty");
    if (data.data.dim(1) != net.input_dim) {
        throw IncompatibleError("train: dataset width does not match network input_dim");
    }

    TrainResult result;
    result.net = net;
    result.loss_history.reserve(static_cast<std::size_t>(cfg.iters));

    // Adam state mirrors the layer list.
    std::vector<AffineLayer> m;
    std::vector<AffineLayer> v;
    for (const AffineLayer& layer : result.net.layers) {
        AffineLayer zm;
        zm.W = Tensor::zeros(layer.W.shape);
        zm.b = Tensor::zeros(layer.b.shape);
        m.push_back(zm);
        v.push_back(zm);
    }

    Rng rng(cfg.seed, streams::kTrain);
    const int dim = net.input_dim;
    Tensor x0 = Tensor::zeros({cfg.batch, dim});
    Tensor eps = Tensor::zeros({cfg.batch, dim});
    std::vector<int> t_rows(static_cast<std::size_t>(cfg.batch), 1);

    for (int iter = 0; iter < cfg.iters; ++iter) {
        for (int r = 0; r < cfg.batch; ++r) {
            const auto idx =
                static_cast<std::int64_t>(rng.uniform_below(static_cast<std::uint64_t>(data.n)));
            for (int j = 0; j < dim; ++j) x0.at(r, j) = data.data.at(idx, j);
        }
        for (int r = 0; r < cfg.batch; ++r) {
            t_rows[static_cast<std::size_t>(r)] =
                1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(sched.T)));
        }
        for (std::int64_t i = 0; i < eps.size(); ++i) eps.data[i] = rng.standard_normal();

        // Per-row q_sample; every row carries its own timestep.
        Tensor xt = x0;
        for (int r = 0; r < cfg.batch; ++r) {
            const double abar =
                sched.alpha_bar[static_cast<std::size_t>(t_rows[static_cast<std::size_t>(r)])];
            const double a = std::sqrt(abar);
            const double b = std::sqrt(1.0 - abar);
            for (int j = 0; j < dim; ++j) {
                xt.at(r, j) = a * x0.at(r, j) + b * eps.at(r, j);
            }
        }

        BackwardResult back;
        try {
            back = backward(result.net, xt, t_rows, eps, sched.T);
        } catch (const NumericError& e) {
            throw NumericError("training diverged at iteration " + std::to_string(iter) + ": " +
                               e.what());
        }
        if (!std::isfinite(back.loss)) {
            throw NumericError("training diverged at iteration " + std::to_string(iter));
        }
        result.loss_history.push_back(back.loss);

        const double bias1 = 1.0 - std::pow(cfg.adam_beta1, iter + 1);
        const double bias2 = 1.0 - std::pow(cfg.adam_beta2, iter + 1);
        for (std::size_t l = 0; l < result.net.layers.size(); ++l) {
            AffineLayer& layer = result.net.layers[l];
            const AffineLayer& g = back.grads[l];
            for (std::int64_t i = 0; i < layer.W.size(); ++i) {
                double& mw = m[l].W.data[i];
                double& vw = v[l].W.data[i];
                const double gw = g.W.data[i];
                mw = cfg.adam_beta1 * mw + (1.0 - cfg.adam_beta1) * gw;
                vw = cfg.adam_beta2 * vw + (1.0 - cfg.adam_beta2) * gw * gw;
                layer.W.data[i] -=
                    cfg.lr * (mw / bias1) / (std::sqrt(vw / bias2) + cfg.adam_eps);
            }
            for (std::int64_t i = 0; i < layer.b.size(); ++i) {
                double& mb = m[l].b.data[i];
                double& vb = v[l].b.data[i];
                const double gb = g.b.data[i];
                mb = cfg.adam_beta1 * mb + (1.0 - cfg.adam_beta1) * gb;
                vb = cfg.adam_beta2 * vb + (1.0 - cfg.adam_beta2) * gb * gb;
                layer.b.data[i] -=
                    cfg.lr * (mb / bias1) / (std::sqrt(vb / bias2) + cfg.adam_eps);
            }
        }
    }
    return result;
}

}  // namespace diffquant
