#pragma once

#include <cstdint>
#include <utility>

namespace diffquant {

// PCG-XSH-RR 32-bit generator with a Box-Muller gaussian layer.
// Streams are pure functions of (seed, stream, draw index); the increment is
// forced odd via inc = (stream << 1) | 1, matching the reference generator.
// Seeding: state = seed, then two warm-up outputs are discarded.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream);

    std::uint32_t next_u32();

    // Uniform on (0, 1]: (x + 1) / 2^32. Never returns 0, so log() is safe.
    double uniform01();

    // N(0,1) via Box-Muller. Consumes exactly two u32 draws per pair; the
    // second value of a pair is cached and returned by the next call.
    double standard_normal();

    // Unbiased integer in [0, n); n must be >= 1 and <= 2^32.
    std::uint64_t uniform_below(std::uint64_t n);

    bool has_pending_gaussian() const { return has_pending_; }

private:
    std::uint64_t state_;
    std::uint64_t inc_;
    bool has_pending_ = false;
    double pending_ = 0.0;
};

// The Box-Muller transform itself, exposed for direct testing:
// returns (r*cos(2*pi*u2), r*sin(2*pi*u2)) with r = sqrt(-2*ln(u1)).
std::pair<double, double> box_muller(double u1, double u2);

}  // namespace diffquant
