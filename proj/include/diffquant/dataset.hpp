#pragma once

#include <cstdint>
#include <string>

#include "diffquant/tensor.hpp"

namespace diffquant {

enum class DatasetKind { SwissRoll, GaussianMixture, Checkerboard };

DatasetKind dataset_kind_from_string(const std::string& s);
std::string to_string(DatasetKind kind);

// 2-D point set, standardized in place to zero mean and unit per-coordinate
// population variance.
struct ToyDataset {
    DatasetKind kind = DatasetKind::SwissRoll;
    int n = 0;
    Tensor data;  // [n x 2]
};

ToyDataset make_dataset(DatasetKind kind, int n, std::uint64_t seed);

}  // namespace diffquant
