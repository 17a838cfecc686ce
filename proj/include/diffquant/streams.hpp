#pragma once

#include <cstdint>

namespace diffquant::streams {

// Fixed stream ids for pre-split RNG streams. Every parallelizable unit of
// work owns exactly one (seed, stream) pair, so results are independent of
// scheduling. Renumbering any of these changes every downstream artifact.
inline constexpr std::uint64_t kWeightInit = 1;
inline constexpr std::uint64_t kTrain = 2;
inline constexpr std::uint64_t kCollectTimesteps = 3;
inline constexpr std::uint64_t kEvalProjections = 4;
inline constexpr std::uint64_t kSampleSequential = 5;
inline constexpr std::uint64_t kDataset = 6;
inline constexpr std::uint64_t kHookFit = 7;

// Per-chain / per-sample stream blocks (index added to the base).
inline constexpr std::uint64_t kChainBase = 1ull << 20;
inline constexpr std::uint64_t kSampleBase = 1ull << 21;

}  // namespace diffquant::streams
