#pragma once

#include <string>
#include <vector>

namespace diffquant {

enum class ScheduleKind { Linear, Cosine, ConstantBeta };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

// Arrays are indexed 1..T; index 0 is a sentinel with alpha_bar[0] = 1 so the
// t -> 0 limit is the identity and t_prev = 0 is well-defined.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::Linear;
    int T = 0;
    double const_beta = 0.0;  // ConstantBeta only
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
    std::vector<double> beta_tilde;
    std::vector<double> post_coef_x0;
    std::vector<double> post_coef_xt;

    void check_t(int t) const;  // throws InputError unless 1 <= t <= T
};

// Linear: betas linearly spaced 1e-4..0.02, scaled by 1000/T, clamped to
// (0, 0.999]. Cosine: alpha_bar from the squared-cosine profile, betas clipped
// at 0.999 and the derived arrays rebuilt from the clipped betas. ConstantBeta
// is a test-only kind with beta[t] = const_beta.
NoiseSchedule make_schedule(ScheduleKind kind, int T, double const_beta = 0.0);

}  // namespace diffquant
