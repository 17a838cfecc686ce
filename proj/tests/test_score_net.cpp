#include <cmath>
#include <random>
#include <vector>

#include "diffquant/errors.hpp"
#include "diffquant/score_net.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace diffquant;

namespace {

// Straight-line reimplementation of the forward pass used as an oracle:
// concat input and embedding, then affine/SiLU per layer, last layer linear.
std::vector<double> forward_by_hand(const ScoreNetwork& net, const std::vector<double>& x,
                                    int t, int T) {
    Tensor emb = time_embedding(t, net.time_embed_dim, T);
    std::vector<double> h = x;
    for (std::int64_t i = 0; i < emb.size(); ++i) h.push_back(emb[i]);

    for (int l = 0; l < net.num_layers(); ++l) {
        const AffineLayer& layer = net.layers[static_cast<std::size_t>(l)];
        const std::int64_t out_dim = layer.W.dim(0), in_dim = layer.W.dim(1);
        REQUIRE(static_cast<std::int64_t>(h.size()) == in_dim);
        std::vector<double> z(static_cast<std::size_t>(out_dim), 0.0);
        for (std::int64_t o = 0; o < out_dim; ++o) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < in_dim; ++i) {
                acc += layer.W.at(o, i) * h[static_cast<std::size_t>(i)];
            }
            z[static_cast<std::size_t>(o)] = acc + layer.b[o];
        }
        if (l + 1 < net.num_layers()) {
            for (auto& v : z) v = silu(v);
        }
        h = std::move(z);
    }
    return h;
}

ScoreNetwork with_zero_weights(ScoreNetwork net) {
    for (auto& layer : net.layers) {
        for (auto& w : layer.W.data) w = 0.0;
    }
    return net;
}

}  // namespace

TEST_CASE("time embedding reference values") {
    Tensor e0 = time_embedding(0, 6, 10);
    CHECK(e0[0] == 0.0);
    CHECK(e0[1] == 1.0);
    CHECK(e0[2] == 0.0);
    CHECK(e0[3] == 1.0);
    CHECK(e0[4] == 0.0);
    CHECK(e0[5] == 1.0);

    Tensor e1 = time_embedding(1, 4, 10);
    CHECK(e1[0] == doctest::Approx(0.8414709848078965).epsilon(1e-15));
    CHECK(e1[1] == doctest::Approx(0.54030230586813977).epsilon(1e-15));
    CHECK(e1[2] == doctest::Approx(0.0099998333341666645).epsilon(1e-15));
    CHECK(e1[3] == doctest::Approx(0.99995000041666526).epsilon(1e-15));
}

TEST_CASE("time embedding stays in the unit box") {
    for (int t = 0; t <= 50; ++t) {
        Tensor e = time_embedding(t, 16, 50);
        for (std::int64_t i = 0; i < e.size(); ++i) {
            CHECK(e[i] >= -1.0);
            CHECK(e[i] <= 1.0);
        }
    }
}

TEST_CASE("time embedding validates arguments") {
    CHECK_THROWS_AS(time_embedding(1, 3, 10), ConfigError);
    CHECK_THROWS_AS(time_embedding(1, 0, 10), ConfigError);
    CHECK_THROWS_AS(time_embedding(-1, 4, 10), InputError);
    CHECK_THROWS_AS(time_embedding(11, 4, 10), InputError);
    CHECK_NOTHROW(time_embedding(10, 4, 10));
    CHECK_NOTHROW(time_embedding(0, 4, 10));
}

TEST_CASE("network construction shapes and init bounds") {
    ScoreNetwork net = ScoreNetwork::create(2, 8, {16, 12}, 99);
    REQUIRE(net.num_layers() == 3);
    CHECK(net.layers[0].W.dim(0) == 16);
    CHECK(net.layers[0].W.dim(1) == 10);
    CHECK(net.layers[1].W.dim(0) == 12);
    CHECK(net.layers[1].W.dim(1) == 16);
    CHECK(net.layers[2].W.dim(0) == 2);
    CHECK(net.layers[2].W.dim(1) == 12);
    for (int l = 0; l < 3; ++l) {
        const auto& layer = net.layers[static_cast<std::size_t>(l)];
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.W.dim(0) + layer.W.dim(1)));
        for (double w : layer.W.data) {
            CHECK(std::fabs(w) <= bound);
        }
        for (double b : layer.b.data) CHECK(b == 0.0);
    }

    ScoreNetwork again = ScoreNetwork::create(2, 8, {16, 12}, 99);
    for (int l = 0; l < 3; ++l) {
        CHECK(testutil::max_abs_diff(net.layers[static_cast<std::size_t>(l)].W,
                                     again.layers[static_cast<std::size_t>(l)].W) == 0.0);
    }
}

TEST_CASE("zero weights give a zero noise estimate") {
    ScoreNetwork net = with_zero_weights(ScoreNetwork::create(2, 4, {8}, 5));
    Tensor x = Tensor({2, 2}, {1.0, -3.0, 0.25, 7.0});
    Tensor out = forward(net, x, {3, 7}, 10);
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("single affine layer with a selector weight matrix passes input through") {
    // W picks out the raw input columns, so eps_hat == x for any timestep.
    ScoreNetwork net = with_zero_weights(ScoreNetwork::create(2, 4, {}, 5));
    REQUIRE(net.num_layers() == 1);
    net.layers[0].W.at(0, 0) = 1.0;
    net.layers[0].W.at(1, 1) = 1.0;
    Tensor x = Tensor({2, 2}, {0.5, -1.5, 2.0, 0.125});
    Tensor out = forward(net, x, {1, 9}, 10);
    CHECK(testutil::max_abs_diff(out, x) == 0.0);
}

TEST_CASE("forward matches an element-by-element reimplementation") {
    ScoreNetwork net = ScoreNetwork::create(2, 6, {10, 7}, 123);
    std::mt19937_64 gen(9);
    Tensor x = testutil::random_tensor(gen, {5, 2});
    std::vector<int> ts{0, 2, 5, 9, 10};
    Tensor out = forward(net, x, ts, 10);
    for (std::int64_t r = 0; r < 5; ++r) {
        std::vector<double> row = get_row(x, r).data;
        std::vector<double> want =
            forward_by_hand(net, row, ts[static_cast<std::size_t>(r)], 10);
        for (std::int64_t j = 0; j < 2; ++j) {
            CHECK(out.at(r, j) ==
                  doctest::Approx(want[static_cast<std::size_t>(j)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("forward validates shapes and timesteps") {
    ScoreNetwork net = ScoreNetwork::create(2, 4, {8}, 5);
    Tensor x = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(forward(net, x, {1}, 10), IncompatibleError);
    CHECK_THROWS_AS(forward(net, Tensor::zeros({2, 3}), {1, 2}, 10), IncompatibleError);
    CHECK_THROWS_AS(forward(net, x, {1, 11}, 10), InputError);
    CHECK_THROWS_AS(forward(net, x, {-1, 2}, 10), InputError);
    CHECK_NOTHROW(forward(net, x, {0, 10}, 10));
}

TEST_CASE("activation taps are transparent and capture layer inputs") {
    ScoreNetwork net = ScoreNetwork::create(2, 4, {8, 6}, 77);
    std::mt19937_64 gen(4);
    Tensor x = testutil::random_tensor(gen, {3, 2});
    std::vector<int> ts{1, 4, 8};

    Tensor plain = forward(net, x, ts, 10);
    ActivationTaps taps;
    taps.reset(net.num_layers());
    Tensor tapped = forward(net, x, ts, 10, &taps);
    CHECK(testutil::max_abs_diff(plain, tapped) == 0.0);

    REQUIRE(taps.per_layer.size() == 3);
    Tensor first = taps.pooled(0);
    CHECK(first.dim(0) == 3);
    CHECK(first.dim(1) == 6);  // input_dim + time_embed_dim
    // Layer 0 sees the concatenated input unchanged.
    for (std::int64_t r = 0; r < 3; ++r) {
        CHECK(first.at(r, 0) == x.at(r, 0));
        CHECK(first.at(r, 1) == x.at(r, 1));
    }
    CHECK(taps.per_layer[0][0].timesteps == ts);

    // Two forward passes accumulate two captures per layer.
    forward(net, x, ts, 10, &taps);
    CHECK(taps.per_layer[1].size() == 2);
    CHECK(taps.pooled(1).dim(0) == 6);
}

TEST_CASE("backward is zero at a perfect fit") {
    ScoreNetwork net = ScoreNetwork::create(2, 4, {8}, 13);
    std::mt19937_64 gen(21);
    Tensor x = testutil::random_tensor(gen, {4, 2});
    std::vector<int> ts{1, 2, 3, 4};
    Tensor out = forward(net, x, ts, 10);
    BackwardResult res = backward(net, x, ts, out, 10);
    CHECK(res.loss == 0.0);
    for (const auto& g : res.grads) {
        for (double v : g.W.data) CHECK(v == 0.0);
        for (double v : g.b.data) CHECK(v == 0.0);
    }
}

TEST_CASE("single affine gradient matches the hand derivative") {
    ScoreNetwork net = ScoreNetwork::create(1, 2, {}, 3);
    REQUIRE(net.num_layers() == 1);
    Tensor x = Tensor({1, 1}, {0.37});
    std::vector<int> ts{2};
    Tensor target = Tensor({1, 1}, {-0.6});

    Tensor out = forward(net, x, ts, 5);
    BackwardResult res = backward(net, x, ts, target, 5);

    // loss = (y - e)^2 over the single element; d/dW[0][i] = 2 (y - e) in[i].
    const double resid = out.data[0] - target.data[0];
    CHECK(res.loss == doctest::Approx(resid * resid).epsilon(1e-14));
    Tensor emb = time_embedding(2, 2, 5);
    const double in[3] = {0.37, emb[0], emb[1]};
    for (int i = 0; i < 3; ++i) {
        CHECK(res.grads[0].W.at(0, i) == doctest::Approx(2.0 * resid * in[i]).epsilon(1e-13));
    }
    CHECK(res.grads[0].b[0] == doctest::Approx(2.0 * resid).epsilon(1e-13));
}

TEST_CASE("analytic gradients match central differences") {
    ScoreNetwork net = ScoreNetwork::create(2, 4, {6, 5}, 31);
    std::mt19937_64 gen(8);
    Tensor x = testutil::random_tensor(gen, {3, 2});
    Tensor eps = testutil::random_tensor(gen, {3, 2}, -1.0, 1.0);
    std::vector<int> ts{1, 5, 9};

    BackwardResult res = backward(net, x, ts, eps, 10);
    const double h = 1e-5;
    auto loss_at = [&](const ScoreNetwork& n) {
        Tensor out = forward(n, x, ts, 10);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            const double d = out.data[i] - eps.data[i];
            acc += d * d;
        }
        return acc / static_cast<double>(out.data.size());
    };

    for (int l = 0; l < net.num_layers(); ++l) {
        auto lu = static_cast<std::size_t>(l);
        for (std::size_t k = 0; k < net.layers[lu].W.data.size(); ++k) {
            ScoreNetwork plus = net, minus = net;
            plus.layers[lu].W.data[k] += h;
            minus.layers[lu].W.data[k] -= h;
            const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
            const double an = res.grads[lu].W.data[k];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
            CHECK(std::fabs(fd - an) / denom < 1e-6);
        }
        for (std::size_t k = 0; k < net.layers[lu].b.data.size(); ++k) {
            ScoreNetwork plus = net, minus = net;
            plus.layers[lu].b.data[k] += h;
            minus.layers[lu].b.data[k] -= h;
            const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
            const double an = res.grads[lu].b.data[k];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
            CHECK(std::fabs(fd - an) / denom < 1e-6);
        }
    }
}

TEST_CASE("silu and its derivative agree with finite differences") {
    CHECK(silu(0.0) == 0.0);
    const double h = 1e-6;
    for (double x : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
        const double fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
        CHECK(silu_grad(x) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("high precision weight quantization is a near no-op") {
    ScoreNetwork net = ScoreNetwork::create(2, 6, {12, 10}, 55);
    std::vector<QuantParams> wp;
    for (const auto& layer : net.layers) {
        wp.push_back(minmax_params(layer.W, 30, true, true, Granularity::PerChannel, 0));
    }
    QuantizedNetwork q = quantize_network(net, wp, {});
    std::mt19937_64 gen(64);
    Tensor x = testutil::random_tensor(gen, {4, 2});
    std::vector<int> ts{1, 3, 5, 7};
    Tensor fp_out = forward(net, x, ts, 10);
    Tensor q_out = forward(q, x, ts, 10);
    CHECK(testutil::max_abs_diff(fp_out, q_out) < 1e-9);
}

TEST_CASE("weights already on the grid survive quantization bit for bit") {
    ScoreNetwork net = ScoreNetwork::create(2, 4, {8}, 70);
    // Snap every weight to the 2^-10 lattice, then quantize at that scale.
    for (auto& layer : net.layers) {
        for (auto& w : layer.W.data) w = std::nearbyint(w * 1024.0) / 1024.0;
    }
    std::vector<QuantParams> wp(net.layers.size(),
                                QuantParams::per_tensor(0x1p-10, 0, 16, true));
    QuantizedNetwork q = quantize_network(net, wp, {});
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        CHECK(testutil::max_abs_diff(q.base.layers[l].W, net.layers[l].W) == 0.0);
    }
}

TEST_CASE("weight quantization is idempotent") {
    ScoreNetwork net = ScoreNetwork::create(2, 4, {8}, 81);
    std::vector<QuantParams> wp;
    for (const auto& layer : net.layers) {
        wp.push_back(minmax_params(layer.W, 8, true, true, Granularity::PerChannel, 0));
    }
    QuantizedNetwork q1 = quantize_network(net, wp, {});
    QuantizedNetwork q2 = quantize_network(q1.base, wp, {});
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        CHECK(testutil::max_abs_diff(q1.base.layers[l].W, q2.base.layers[l].W) == 0.0);
    }
}

TEST_CASE("quantize_network validates parameter list sizes") {
    ScoreNetwork net = ScoreNetwork::create(2, 4, {8}, 12);
    std::vector<QuantParams> too_few{QuantParams::per_tensor(0.01, 0, 8, true)};
    CHECK_THROWS_AS(quantize_network(net, too_few, {}), ConfigError);
    CHECK_THROWS_AS(quantize_network(net, {}, too_few), ConfigError);
    CHECK_NOTHROW(quantize_network(net, {}, {}));
}

TEST_CASE("wrap_fp leaves the forward pass untouched") {
    ScoreNetwork net = ScoreNetwork::create(2, 4, {8}, 14);
    QuantizedNetwork fp = QuantizedNetwork::wrap_fp(net);
    std::mt19937_64 gen(3);
    Tensor x = testutil::random_tensor(gen, {3, 2});
    std::vector<int> ts{2, 4, 6};
    CHECK(testutil::max_abs_diff(forward(net, x, ts, 10), forward(fp, x, ts, 10)) == 0.0);
}

TEST_CASE("network validation rejects malformed stacks") {
    CHECK_THROWS_AS(ScoreNetwork::create(0, 4, {8}, 1), ConfigError);
    CHECK_THROWS_AS(ScoreNetwork::create(2, 5, {8}, 1), ConfigError);
    CHECK_THROWS_AS(ScoreNetwork::create(2, 4, {0}, 1), ConfigError);

    ScoreNetwork net = ScoreNetwork::create(2, 4, {8}, 1);
    net.layers[0].W = Tensor::zeros({7, 6});  // breaks the dimension chain
    CHECK_THROWS_AS(net.validate(), IncompatibleError);
}
