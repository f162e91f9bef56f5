#ifndef MIXLAB_SCHEDULE_HPP
#define MIXLAB_SCHEDULE_HPP

#include <vector>

#include "mixlab/geometry.hpp"

namespace mixlab {

// DDPM noise schedule. Timesteps are integers 0..T-1; the continuous [0,1]
// scale used by guidance tau parameters maps as t/T.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;
    std::vector<double> alphas;     // 1 - beta_t
    std::vector<double> alpha_bars; // prod_{u<=t} alpha_u

    double beta(int t) const { return betas.at(static_cast<std::size_t>(t)); }
    double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t)); }
    double alpha_bar(int t) const { return alpha_bars.at(static_cast<std::size_t>(t)); }
    // alpha_bar with the t = -1 boundary treated as 1 (no noise).
    double alpha_bar_before(int t) const { return t <= 0 ? 1.0 : alpha_bar(t - 1); }
    double t_norm(int t) const { return static_cast<double>(t) / static_cast<double>(T); }

    void check_step(int t) const;
};

// Linear beta interpolation from beta_start to beta_end over T steps.
NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

// DDPM default used throughout: T=1000, betas 1e-4 .. 2e-2.
NoiseSchedule default_schedule();

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Vec2 forward_noise(Vec2 x0, int t, Vec2 eps, const NoiseSchedule& s);

} // namespace mixlab

#endif
