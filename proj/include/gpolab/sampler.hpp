#pragma once

#include <cstdint>
#include <vector>

#include "gpolab/mlp.hpp"
#include "gpolab/schedule.hpp"

namespace gpolab {

struct Trajectory {
    int condition = 0;
    Array initial_noise;
    int steps = 0;
    Array x0;
};

// Integrates a batch of samples from t=1 to t=0 on a uniform grid, one row
// per group member. Flow-matching uses Euler steps on the velocity implied
// by the predicted noise; variance-preserving uses the ancestral update.
// Member i draws all of its noise from a stream seeded by seeds[i], so the
// result is independent of batch composition: row i equals generate() run
// alone with the same seed.
Array generate_group(const DenoiserConfig& cfg, const ParamStore& params,
                     const std::vector<int>& conditions, int steps, const NoiseSchedule& sched,
                     const std::vector<uint64_t>& seeds, Array* initial_noise = nullptr);

Trajectory generate(const DenoiserConfig& cfg, const ParamStore& params, int condition, int steps,
                    const NoiseSchedule& sched, uint64_t seed);

}  // namespace gpolab
