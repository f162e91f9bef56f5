#include "mixlab/schedule.hpp"

#include <cmath>
#include <string>

#include "mixlab/common.hpp"

namespace mixlab {

void NoiseSchedule::check_step(int t) const {
    if (t < 0 || t >= T)
        throw UsageError("bad-step: t=" + std::to_string(t) + " outside [0, " + std::to_string(T) + ")");
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw UsageError("bad-schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw UsageError("bad-schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<std::size_t>(T));
    s.alphas.resize(static_cast<std::size_t>(T));
    s.alpha_bars.resize(static_cast<std::size_t>(T));
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        const double frac = T > 1 ? static_cast<double>(t) / static_cast<double>(T - 1) : 0.0;
        const double beta = beta_start + (beta_end - beta_start) * frac;
        prod *= 1.0 - beta;
        s.betas[static_cast<std::size_t>(t)] = beta;
        s.alphas[static_cast<std::size_t>(t)] = 1.0 - beta;
        s.alpha_bars[static_cast<std::size_t>(t)] = prod;
    }
    return s;
}

NoiseSchedule default_schedule() { return make_schedule(1000, 1e-4, 2e-2); }

Vec2 forward_noise(Vec2 x0, int t, Vec2 eps, const NoiseSchedule& s) {
    s.check_step(t);
    const double ab = s.alpha_bar(t);
    const double c0 = std::sqrt(ab);
    const double c1 = std::sqrt(1.0 - ab);
    return {c0 * x0.x + c1 * eps.x, c0 * x0.y + c1 * eps.y};
}

} // namespace mixlab
