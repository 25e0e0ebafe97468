#include "gpolab/sampler.hpp"

#include <cmath>

namespace gpolab {

namespace {

// Below this alpha the x0 estimate (x - sigma*eps_hat)/alpha degenerates;
// the prior-mean estimate x0 = 0 is used instead (data is centered).
constexpr double kAlphaFloor = 1e-6;

}  // namespace

Array generate_group(const DenoiserConfig& cfg, const ParamStore& params,
                     const std::vector<int>& conditions, int steps, const NoiseSchedule& sched,
                     const std::vector<uint64_t>& seeds, Array* initial_noise) {
    if (steps < 1) throw UsageError("generate: steps must be >= 1");
    if (conditions.size() != seeds.size()) {
        throw UsageError("generate: one seed per condition required");
    }
    const size_t g = conditions.size();
    const size_t d = cfg.data_dim;

    std::vector<Rng> rngs;
    rngs.reserve(g);
    for (uint64_t s : seeds) rngs.emplace_back(s);

    Array x({g, d});
    for (size_t i = 0; i < g; ++i) {
        for (size_t j = 0; j < d; ++j) x.at(i, j) = static_cast<float>(rngs[i].normal());
    }
    if (initial_noise) *initial_noise = x;

    const bool vp = sched.kind == ScheduleKind::VariancePreserving;
    for (int step = 0; step < steps; ++step) {
        const double t = 1.0 - static_cast<double>(step) / steps;
        const double t_next = 1.0 - static_cast<double>(step + 1) / steps;

        const std::vector<double> t_rows(g, t);
        Array eps_hat = predict_noise(cfg, params, x, t_rows, conditions);

        const double a_t = sched.alpha(t);
        const double s_t = sched.sigma(t);
        if (vp) {
            const double abar_t = a_t * a_t;
            const double abar_n = sched.alpha(t_next) * sched.alpha(t_next);
            const double a_step = abar_t / abar_n;
            const double b_step = 1.0 - a_step;
            const double coef_x0 = std::sqrt(abar_n) * b_step / (1.0 - abar_t);
            const double coef_xt = std::sqrt(a_step) * (1.0 - abar_n) / (1.0 - abar_t);
            const double stddev = std::sqrt(b_step * (1.0 - abar_n) / (1.0 - abar_t));
            for (size_t i = 0; i < g; ++i) {
                for (size_t j = 0; j < d; ++j) {
                    const double xv = x.at(i, j);
                    const double ev = eps_hat.at(i, j);
                    const double x0_hat = a_t < kAlphaFloor ? 0.0 : (xv - s_t * ev) / a_t;
                    double nxt = coef_x0 * x0_hat + coef_xt * xv;
                    if (stddev > 0.0) nxt += stddev * rngs[i].normal();
                    x.at(i, j) = static_cast<float>(nxt);
                }
            }
        } else {
            const double dt = t - t_next;
            for (size_t i = 0; i < g; ++i) {
                for (size_t j = 0; j < d; ++j) {
                    const double xv = x.at(i, j);
                    const double ev = eps_hat.at(i, j);
                    const double x0_hat = a_t < kAlphaFloor ? 0.0 : (xv - s_t * ev) / a_t;
                    const double velocity = ev - x0_hat;
                    x.at(i, j) = static_cast<float>(xv - dt * velocity);
                }
            }
        }
        if (!all_finite(x)) {
            throw NumericError("generate: non-finite sample at step " + std::to_string(step));
        }
    }
    return x;
}

Trajectory generate(const DenoiserConfig& cfg, const ParamStore& params, int condition, int steps,
                    const NoiseSchedule& sched, uint64_t seed) {
    Array noise;
    Array x0 = generate_group(cfg, params, {condition}, steps, sched, {seed}, &noise);
    Trajectory traj;
    traj.condition = condition;
    traj.steps = steps;
    traj.initial_noise = Array({cfg.data_dim});
    traj.x0 = Array({cfg.data_dim});
    for (size_t j = 0; j < cfg.data_dim; ++j) {
        traj.initial_noise.data[j] = noise.at(0, j);
        traj.x0.data[j] = x0.at(0, j);
    }
    return traj;
}

}  // namespace gpolab
