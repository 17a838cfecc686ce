#include "diffquant/score_net.hpp"

#include <cmath>

#include "diffquant/errors.hpp"
#include "diffquant/parallel.hpp"
#include "diffquant/rng.hpp"
#include "diffquant/streams.hpp"

namespace diffquant {

namespace {

Tensor embed_rows(const std::vector<int>& ts, int dim, int T) {
    const auto n = static_cast<std::int64_t>(ts.size());
    Tensor out = Tensor::zeros({n, dim});
    for (std::int64_t i = 0; i < n; ++i) {
        const Tensor e = time_embedding(ts[static_cast<std::size_t>(i)], dim, T);
        for (std::int64_t j = 0; j < dim; ++j) out.at(i, j) = e[j];
    }
    return out;
}

Tensor silu_tensor(const Tensor& z) {
    Tensor out = z;
    for (auto& v : out.data) v = silu(v);
    return out;
}

// Column sums with ascending row order per column.
Tensor col_sum(const Tensor& x) {
    const std::int64_t n = x.dim(0), d = x.dim(1);
    Tensor out = Tensor::zeros({d});
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < d; ++j) out[j] += x.at(i, j);
    }
    return out;
}

struct ForwardCtx {
    const std::vector<AffineLayer>* layers;
    const std::vector<QuantParams>* act_params;  // nullptr or per-layer
    ActivationTaps* taps;
};

Tensor run_forward(const ForwardCtx& ctx, Tensor h, const std::vector<int>& t_per_row) {
    const auto& layers = *ctx.layers;
    const int L = static_cast<int>(layers.size());
    for (int l = 0; l < L; ++l) {
        if (ctx.act_params != nullptr) {
            h = quant_dequant(h, (*ctx.act_params)[static_cast<std::size_t>(l)]);
        }
        if (ctx.taps != nullptr) {
            ctx.taps->per_layer[static_cast<std::size_t>(l)].push_back({h, t_per_row});
        }
        Tensor z = add_rowwise_bias(matmul_nt(h, layers[static_cast<std::size_t>(l)].W),
                                    layers[static_cast<std::size_t>(l)].b);
        h = (l + 1 < L) ? silu_tensor(z) : std::move(z);
    }
    return h;
}

Tensor make_input(const ScoreNetwork& net, const Tensor& x, const std::vector<int>& t_per_row,
                  int T) {
    if (x.rank() != 2 || x.dim(1) != net.input_dim) {
        throw IncompatibleError("forward: input must be [n x input_dim]");
    }
    if (static_cast<std::int64_t>(t_per_row.size()) != x.dim(0)) {
        throw IncompatibleError("forward: one timestep per row required");
    }
    // [0, T]: sampling queries t >= 1 but calibration rows collected at the
    // chain's end carry t = 0, and the embedding is defined there.
    for (int t : t_per_row) {
        if (t < 0 || t > T) throw InputError("forward: timestep out of range");
    }
    return concat_cols(x, embed_rows(t_per_row, net.time_embed_dim, T));
}

}  // namespace

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

ScoreNetwork ScoreNetwork::create(int input_dim, int time_embed_dim,
                                  const std::vector<int>& hidden_dims, std::uint64_t seed) {
    if (input_dim < 1) throw ConfigError("score net: input_dim must be positive");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
        throw ConfigError("score net: time_embed_dim must be even and >= 2");
    }
    for (int h : hidden_dims) {
        if (h < 1) throw ConfigError("score net: hidden dims must be positive");
    }
    ScoreNetwork net;
    net.input_dim = input_dim;
    net.time_embed_dim = time_embed_dim;
    net.hidden_dims = hidden_dims;

    Rng rng(seed, streams::kWeightInit);
    const auto dims = net.layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::int64_t fan_in = dims[l], fan_out = dims[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        AffineLayer layer;
        layer.W = Tensor::zeros({fan_out, fan_in});
        for (auto& w : layer.W.data) w = bound * (2.0 * rng.uniform01() - 1.0);
        layer.b = Tensor::zeros({fan_out});
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

std::vector<std::int64_t> ScoreNetwork::layer_dims() const {
    std::vector<std::int64_t> dims;
    dims.push_back(input_dim + time_embed_dim);
    for (int h : hidden_dims) dims.push_back(h);
    dims.push_back(input_dim);
    return dims;
}

void ScoreNetwork::validate() const {
    const auto dims = layer_dims();
    if (layers.size() + 1 != dims.size()) {
        throw IncompatibleError("score net: layer count does not match dims");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.W.rank() != 2 || layer.W.dim(0) != dims[l + 1] || layer.W.dim(1) != dims[l] ||
            layer.b.rank() != 1 || layer.b.dim(0) != dims[l + 1]) {
            throw IncompatibleError("score net: layer dimension chain broken");
        }
    }
}

Tensor time_embedding(int t, int dim, int T) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("time_embedding: dim must be even");
    if (t < 0 || t > T) throw InputError("time_embedding: t out of [0, T]");
    Tensor e = Tensor::zeros({dim});
    for (int k = 0; k < dim / 2; ++k) {
        const double w = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
        e[2 * k] = std::sin(static_cast<double>(t) * w);
        e[2 * k + 1] = std::cos(static_cast<double>(t) * w);
    }
    return e;
}

void ActivationTaps::reset(int num_layers) {
    per_layer.clear();
    per_layer.resize(static_cast<std::size_t>(num_layers));
}

Tensor ActivationTaps::pooled(int layer) const {
    const auto& captures = per_layer[static_cast<std::size_t>(layer)];
    if (captures.empty()) throw InputError("taps: nothing captured for layer");
    std::int64_t rows = 0;
    const std::int64_t cols = captures[0].values.dim(1);
    for (const auto& c : captures) rows += c.values.dim(0);
    Tensor out = Tensor::zeros({rows, cols});
    std::int64_t r = 0;
    for (const auto& c : captures) {
        for (std::int64_t i = 0; i < c.values.dim(0); ++i, ++r) {
            for (std::int64_t j = 0; j < cols; ++j) out.at(r, j) = c.values.at(i, j);
        }
    }
    return out;
}

QuantizedNetwork QuantizedNetwork::wrap_fp(const ScoreNetwork& net) {
    QuantizedNetwork q;
    q.base = net;
    return q;
}

Tensor forward(const ScoreNetwork& net, const Tensor& x, const std::vector<int>& t_per_row,
               int T, ActivationTaps* taps) {
    net.validate();
    if (taps != nullptr && taps->per_layer.size() != net.layers.size()) {
        taps->reset(net.num_layers());
    }
    ForwardCtx ctx{&net.layers, nullptr, taps};
    return run_forward(ctx, make_input(net, x, t_per_row, T), t_per_row);
}

Tensor forward(const QuantizedNetwork& net, const Tensor& x, const std::vector<int>& t_per_row,
               int T, ActivationTaps* taps) {
    net.base.validate();
    if (taps != nullptr && taps->per_layer.size() != net.base.layers.size()) {
        taps->reset(net.base.num_layers());
    }
    const std::vector<QuantParams>* act =
        net.activation_params.empty() ? nullptr : &net.activation_params;
    ForwardCtx ctx{&net.base.layers, act, taps};
    return run_forward(ctx, make_input(net.base, x, t_per_row, T), t_per_row);
}

BackwardResult backward(const ScoreNetwork& net, const Tensor& x,
                        const std::vector<int>& t_per_row, const Tensor& target_eps, int T) {
    net.validate();
    const Tensor input = make_input(net, x, t_per_row, T);
    if (!same_shape(x, target_eps)) throw IncompatibleError("backward: target shape mismatch");

    const int L = net.num_layers();
    std::vector<Tensor> acts;  // inputs of each affine layer
    std::vector<Tensor> pre;   // pre-activations of hidden layers
    acts.reserve(static_cast<std::size_t>(L));
    Tensor h = input;
    for (int l = 0; l < L; ++l) {
        acts.push_back(h);
        Tensor z = add_rowwise_bias(matmul_nt(h, net.layers[static_cast<std::size_t>(l)].W),
                                    net.layers[static_cast<std::size_t>(l)].b);
        if (l + 1 < L) {
            pre.push_back(z);
            h = silu_tensor(z);
        } else {
            h = std::move(z);
        }
    }

    const auto n_elements = static_cast<double>(h.size());
    double loss = 0.0;
    Tensor dz = h;
    for (std::int64_t i = 0; i < h.size(); ++i) {
        const double diff = h[i] - target_eps[i];
        loss += diff * diff;
        dz[i] = 2.0 * diff / n_elements;
    }
    loss /= n_elements;
    if (!std::isfinite(loss)) throw NumericError("backward: non-finite loss");

    BackwardResult result;
    result.loss = loss;
    result.grads.resize(static_cast<std::size_t>(L));
    for (int l = L - 1; l >= 0; --l) {
        result.grads[static_cast<std::size_t>(l)].W = matmul_tn(dz, acts[static_cast<std::size_t>(l)]);
        result.grads[static_cast<std::size_t>(l)].b = col_sum(dz);
        if (l > 0) {
            Tensor da = matmul(dz, net.layers[static_cast<std::size_t>(l)].W);
            const Tensor& z = pre[static_cast<std::size_t>(l - 1)];
            dz = da;
            for (std::int64_t i = 0; i < dz.size(); ++i) dz[i] = da[i] * silu_grad(z[i]);
        }
    }
    return result;
}

QuantizedNetwork quantize_network(const ScoreNetwork& net,
                                  std::vector<QuantParams> weight_params,
                                  std::vector<QuantParams> activation_params,
                                  OutputHooks hooks) {
    net.validate();
    if (!weight_params.empty() &&
        weight_params.size() != static_cast<std::size_t>(net.num_layers())) {
        throw ConfigError("quantize_network: weight params missing for a layer");
    }
    if (!activation_params.empty() &&
        activation_params.size() != static_cast<std::size_t>(net.num_layers())) {
        throw ConfigError("quantize_network: activation params missing for a layer");
    }
    QuantizedNetwork q;
    q.base = net;
    if (!weight_params.empty()) {
        for (int l = 0; l < net.num_layers(); ++l) {
            q.base.layers[static_cast<std::size_t>(l)].W =
                quant_dequant(net.layers[static_cast<std::size_t>(l)].W,
                              weight_params[static_cast<std::size_t>(l)]);
        }
    }
    q.weight_params = std::move(weight_params);
    q.activation_params = std::move(activation_params);
    q.hooks = std::move(hooks);
    return q;
}

}  // namespace diffquant
