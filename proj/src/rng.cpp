#include "diffquant/rng.hpp"

#include <cmath>
#include <numbers>

#include "diffquant/errors.hpp"

namespace diffquant {

namespace {
constexpr std::uint64_t kMultiplier = 6364136223846793005ull;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : state_(seed), inc_((stream << 1u) | 1u) {
    next_u32();
    next_u32();
}

std::uint32_t Rng::next_u32() {
    const std::uint64_t old = state_;
    state_ = old * kMultiplier + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
}

double Rng::uniform01() {
    return (static_cast<double>(next_u32()) + 1.0) * 0x1p-32;
}

double Rng::standard_normal() {
    if (has_pending_) {
        has_pending_ = false;
        return pending_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    auto [z0, z1] = box_muller(u1, u2);
    pending_ = z1;
    has_pending_ = true;
    return z0;
}

std::uint64_t Rng::uniform_below(std::uint64_t n) {
    if (n == 0 || n > (1ull << 32)) throw InputError("uniform_below: n out of range");
    if (n == 1) return 0;
    // Rejection below 2^32 mod n removes modulo bias.
    const std::uint64_t threshold = (1ull << 32) % n;
    for (;;) {
        const std::uint64_t x = next_u32();
        if (x >= threshold) return x % n;
    }
}

std::pair<double, double> box_muller(double u1, double u2) {
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}

}  // namespace diffquant
