#include "gpolab/schedule.hpp"

#include <cmath>

namespace gpolab {

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "variance-preserving" || s == "vp" || s == "ddpm") {
        return ScheduleKind::VariancePreserving;
    }
    if (s == "flow-matching" || s == "fm") return ScheduleKind::FlowMatching;
    throw ConfigError("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind kind) {
    return kind == ScheduleKind::VariancePreserving ? "variance-preserving" : "flow-matching";
}

namespace {
constexpr double kHalfPi = 1.57079632679489661923;
}

double NoiseSchedule::alpha(double t) const {
    return kind == ScheduleKind::VariancePreserving ? std::cos(kHalfPi * t) : 1.0 - t;
}

double NoiseSchedule::sigma(double t) const {
    return kind == ScheduleKind::VariancePreserving ? std::sin(kHalfPi * t) : t;
}

Array add_noise(const Array& x0, const Array& eps, double t, const NoiseSchedule& sched) {
    if (!x0.same_shape(eps)) {
        throw UsageError("add_noise: shape mismatch " + shape_string(x0.shape) + " vs " +
                         shape_string(eps.shape));
    }
    if (t < 0.0 || t > 1.0) {
        throw UsageError("add_noise: t=" + std::to_string(t) + " outside [0,1]");
    }
    const double a = sched.alpha(t);
    const double s = sched.sigma(t);
    Array out(x0.shape);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = static_cast<float>(a * static_cast<double>(x0.data[i]) +
                                         s * static_cast<double>(eps.data[i]));
    }
    return out;
}

double TimestepSampler::apply(double u) const {
    if (mode == Mode::Uniform) return u;
    return shift * u / (1.0 + (shift - 1.0) * u);
}

double TimestepSampler::sample(Rng& rng) const {
    if (mode == Mode::Shifted && shift <= 0.0) {
        throw ConfigError("TimestepSampler: shift must be positive");
    }
    return apply(rng.uniform_open());
}

}  // namespace gpolab
