#pragma once

#include <string>

#include "gpolab/array.hpp"
#include "gpolab/rng.hpp"

namespace gpolab {

enum class ScheduleKind { VariancePreserving, FlowMatching };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind kind);

// Continuous-time signal/noise schedule on t in [0,1].
//   variance-preserving: alpha^2 + sigma^2 = 1 (cosine ramp)
//   flow-matching:       alpha + sigma = 1   (linear ramp)
// Both run from (alpha,sigma) = (1,0) at t=0 to (0,1) at t=1.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::FlowMatching;

    double alpha(double t) const;
    double sigma(double t) const;
};

inline NoiseSchedule make_schedule(ScheduleKind kind) { return NoiseSchedule{kind}; }

// x_t = alpha(t) * x0 + sigma(t) * eps
Array add_noise(const Array& x0, const Array& eps, double t, const NoiseSchedule& sched);

// Timestep draws for training. Uniform, or the resolution-shift map
// t = s*u / (1 + (s-1)*u) applied to a uniform draw (s=1 is the identity).
struct TimestepSampler {
    enum class Mode { Uniform, Shifted };
    Mode mode = Mode::Shifted;
    double shift = 3.0;

    double sample(Rng& rng) const;
    double apply(double u) const;
};

}  // namespace gpolab
