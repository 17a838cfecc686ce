#include "diffquant/schedule.hpp"

#include <cmath>
#include <numbers>

#include "diffquant/errors.hpp"

namespace diffquant {

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::Linear;
    if (s == "cosine") return ScheduleKind::Cosine;
    if (s == "constant") return ScheduleKind::ConstantBeta;
    throw ConfigError("schedule: unknown kind '" + s + "'");
}

std::string to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::Linear:
            return "linear";
        case ScheduleKind::Cosine:
            return "cosine";
        case ScheduleKind::ConstantBeta:
            return "constant";
    }
    return "unknown";
}

void NoiseSchedule::check_t(int t) const {
    if (t < 1 || t > T) throw InputError("schedule: timestep out of range");
}

namespace {

std::vector<double> linear_betas(int T) {
    const double scale = 1000.0 / static_cast<double>(T);
    const double lo = 1e-4, hi = 0.02;
    std::vector<double> beta(static_cast<std::size_t>(T) + 1, 0.0);
    for (int t = 1; t <= T; ++t) {
        double b;
        if (t == 1) {
            b = lo;
        } else if (t == T) {
            b = hi;
        } else {
            b = lo + (hi - lo) * (static_cast<double>(t - 1) / static_cast<double>(T - 1));
        }
        b *= scale;
        if (b > 0.999) b = 0.999;
        beta[static_cast<std::size_t>(t)] = b;
    }
    return beta;
}

std::vector<double> cosine_betas(int T) {
    auto f = [&](double t) {
        const double a = ((t / static_cast<double>(T)) + 0.008) / 1.008;
        const double c = std::cos(a * std::numbers::pi / 2.0);
        return c * c;
    };
    const double f0 = f(0.0);
    std::vector<double> beta(static_cast<std::size_t>(T) + 1, 0.0);
    double abar_prev = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double abar = f(static_cast<double>(t)) / f0;
        double b = 1.0 - abar / abar_prev;
        if (b > 0.999) b = 0.999;
        beta[static_cast<std::size_t>(t)] = b;
        abar_prev = abar;
    }
    return beta;
}

}  // namespace

NoiseSchedule make_schedule(ScheduleKind kind, int T, double const_beta) {
    if (T < 2) throw InputError("schedule: T must be >= 2");
    NoiseSchedule s;
    s.kind = kind;
    s.T = T;
    s.const_beta = const_beta;
    switch (kind) {
        case ScheduleKind::Linear:
            s.beta = linear_betas(T);
            break;
        case ScheduleKind::Cosine:
            s.beta = cosine_betas(T);
            break;
        case ScheduleKind::ConstantBeta:
            if (!(const_beta > 0.0 && const_beta < 1.0)) {
                throw ConfigError("schedule: constant beta must be in (0, 1)");
            }
            s.beta.assign(static_cast<std::size_t>(T) + 1, const_beta);
            s.beta[0] = 0.0;
            break;
    }

    const auto n = static_cast<std::size_t>(T) + 1;
    s.alpha.assign(n, 0.0);
    s.alpha_bar.assign(n, 0.0);
    s.beta_tilde.assign(n, 0.0);
    s.post_coef_x0.assign(n, 0.0);
    s.post_coef_xt.assign(n, 0.0);
    s.alpha_bar[0] = 1.0;

    for (int t = 1; t <= T; ++t) {
        const auto i = static_cast<std::size_t>(t);
        const double b = s.beta[i];
        if (!(b > 0.0 && b < 1.0)) throw NumericError("schedule: beta out of (0, 1)");
        s.alpha[i] = 1.0 - b;
        s.alpha_bar[i] = s.alpha_bar[i - 1] * s.alpha[i];
        if (!(s.alpha_bar[i] > 0.0 && s.alpha_bar[i] < s.alpha_bar[i - 1])) {
            throw NumericError("schedule: alpha_bar must decrease strictly within (0, 1)");
        }
        const double one_minus_abar = 1.0 - s.alpha_bar[i];
        const double one_minus_abar_prev = 1.0 - s.alpha_bar[i - 1];
        s.beta_tilde[i] = t == 1 ? b : one_minus_abar_prev / one_minus_abar * b;
        s.post_coef_x0[i] = std::sqrt(s.alpha_bar[i - 1]) * b / one_minus_abar;
        s.post_coef_xt[i] = std::sqrt(s.alpha[i]) * one_minus_abar_prev / one_minus_abar;
    }
    return s;
}

}  // namespace diffquant
