#include "diffquant/dataset.hpp"

#include <cmath>

#include "diffquant/errors.hpp"
#include "diffquant/rng.hpp"
#include "diffquant/streams.hpp"

namespace diffquant {

namespace {

constexpr double kPi = 3.14159265358979323846;

void fill_swiss_roll(Tensor& data, int n, Rng& rng) {
    // Spiral arm with 1.5 turns plus isotropic jitter.
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        const double theta = 1.5 * kPi * (1.0 + 2.0 * u);
        const double nx = rng.standard_normal();
        const double ny = rng.standard_normal();
        data.at(i, 0) = theta * std::cos(theta) + 0.1 * nx;
        data.at(i, 1) = theta * std::sin(theta) + 0.1 * ny;
    }
}

void fill_gaussian_mixture(Tensor& data, int n, Rng& rng) {
    // Eight modes on a radius-4 ring, each an isotropic gaussian.
    constexpr int kModes = 8;
    constexpr double kRadius = 4.0;
    constexpr double kSigma = 0.3;
    for (int i = 0; i < n; ++i) {
        const auto k = static_cast<double>(rng.uniform_below(kModes));
        const double angle = 2.0 * kPi * k / kModes;
        data.at(i, 0) = kRadius * std::cos(angle) + kSigma * rng.standard_normal();
        data.at(i, 1) = kRadius * std::sin(angle) + kSigma * rng.standard_normal();
    }
}

void fill_checkerboard(Tensor& data, int n, Rng& rng) {
    // Rejection sampling of the even cells of a 4x4 grid covering [-2, 2]^2.
    for (int i = 0; i < n; ++i) {
        for (;;) {
            const double x = 4.0 * rng.uniform01() - 2.0;
            const double y = 4.0 * rng.uniform01() - 2.0;
            const int ix = std::min(static_cast<int>(std::floor(x + 2.0)), 3);
            const int iy = std::min(static_cast<int>(std::floor(y + 2.0)), 3);
            if ((ix + iy) % 2 == 0) {
                data.at(i, 0) = x;
                data.at(i, 1) = y;
                break;
            }
        }
    }
}

void standardize(Tensor& data) {
    const std::int64_t n = data.dim(0);
    const std::int64_t d = data.dim(1);
    for (std::int64_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::int64_t i = 0; i < n; ++i) mean += data.at(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double c = data.at(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(n);
        if (var <= 0.0) throw NumericError("dataset coordinate has zero variance");
        const double inv_sd = 1.0 / std::sqrt(var);
        for (std::int64_t i = 0; i < n; ++i) {
            data.at(i, j) = (data.at(i, j) - mean) * inv_sd;
        }
    }
}

}  // namespace

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "swiss_roll") return DatasetKind::SwissRoll;
    if (s == "gaussian_mixture") return DatasetKind::GaussianMixture;
    if (s == "checkerboard") return DatasetKind::Checkerboard;
    throw ConfigError("unknown dataset kind: " + s);
}

std::string to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::SwissRoll: return "swiss_roll";
        case DatasetKind::GaussianMixture: return "gaussian_mixture";
        case DatasetKind::Checkerboard: return "checkerboard";
    }
    throw ConfigError("unknown dataset kind");
}

ToyDataset make_dataset(DatasetKind kind, int n, std::uint64_t seed) {
    if (n < 2) throw InputError("make_dataset: n must be >= 2");
    ToyDataset ds;
    ds.kind = kind;
    ds.n = n;
    ds.data = Tensor::zeros({n, 2});
    Rng rng(seed, streams::kDataset);
    switch (kind) {
        case DatasetKind::SwissRoll: fill_swiss_roll(ds.data, n, rng); break;
        case DatasetKind::GaussianMixture: fill_gaussian_mixture(ds.data, n, rng); break;
        case DatasetKind::Checkerboard: fill_checkerboard(ds.data, n, rng); break;
    }
    standardize(ds.data);
    return ds;
}

}  // namespace diffquant
