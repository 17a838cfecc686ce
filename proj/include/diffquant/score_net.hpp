#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "diffquant/quantizer.hpp"
#include "diffquant/tensor.hpp"

namespace diffquant {

struct AffineLayer {
    Tensor W;  // [out x in]
    Tensor b;  // [out]
};

// Time-conditioned MLP noise estimator. Layer chain:
// concat(x, time_embedding) -> affine/SiLU ... -> affine -> eps_hat.
struct ScoreNetwork {
    int input_dim = 2;
    int time_embed_dim = 32;
    std::vector<int> hidden_dims = {128, 128, 128};
    std::vector<AffineLayer> layers;

    // Weights uniform in +-sqrt(6/(fan_in+fan_out)) from the seeded stream;
    // biases zero.
    static ScoreNetwork create(int input_dim, int time_embed_dim,
                               const std::vector<int>& hidden_dims, std::uint64_t seed);

    int num_layers() const { return static_cast<int>(layers.size()); }
    std::vector<std::int64_t> layer_dims() const;  // in0, h1, ..., out
    void validate() const;
};

// Sinusoidal embedding: e[2k] = sin(t*w_k), e[2k+1] = cos(t*w_k) with
// w_k = 10000^(-2k/dim). dim must be even; t must be in [0, T].
Tensor time_embedding(int t, int dim, int T);

// Lossless per-layer input captures, tagged with each row's timestep.
struct ActivationTaps {
    struct Capture {
        Tensor values;  // [n x in_l]
        std::vector<int> timesteps;
    };
    std::vector<std::vector<Capture>> per_layer;

    void reset(int num_layers);
    // All captures of one layer concatenated along rows.
    Tensor pooled(int layer) const;
};

struct OutputHooks {
    std::optional<QuantParams> mu;
    std::optional<QuantParams> sigma;
    std::optional<QuantParams> x_prev;
    bool any() const { return mu || sigma || x_prev; }
};

// Network with fake-quantized weights and (optionally) fake-quantized affine
// inputs. Empty parameter lists leave that part at full precision, which is
// how hook-only configurations are built. SiLU and the time embedding always
// run in full precision.
struct QuantizedNetwork {
    ScoreNetwork base;
    std::vector<QuantParams> weight_params;      // per layer or empty
    std::vector<QuantParams> activation_params;  // per layer or empty
    OutputHooks hooks;

    static QuantizedNetwork wrap_fp(const ScoreNetwork& net);
};

Tensor forward(const ScoreNetwork& net, const Tensor& x, const std::vector<int>& t_per_row,
               int T, ActivationTaps* taps = nullptr);
Tensor forward(const QuantizedNetwork& net, const Tensor& x,
               const std::vector<int>& t_per_row, int T, ActivationTaps* taps = nullptr);

struct BackwardResult {
    double loss = 0.0;
    std::vector<AffineLayer> grads;  // same shapes as net.layers
};

// loss = sum((eps_hat - eps)^2) / total_element_count, with exact analytic
// gradients through the affine/SiLU stack.
BackwardResult backward(const ScoreNetwork& net, const Tensor& x,
                        const std::vector<int>& t_per_row, const Tensor& target_eps, int T);

// Replaces weights by their fake-quantized values and records the parameter
// sets the forward pass applies to activations. Parameter list sizes must
// match the layer count when non-empty.
QuantizedNetwork quantize_network(const ScoreNetwork& net,
                                  std::vector<QuantParams> weight_params,
                                  std::vector<QuantParams> activation_params,
                                  OutputHooks hooks = {});

double silu(double x);
double silu_grad(double x);

}  // namespace diffquant
