#include "gpolab/optimizer.hpp"

#include <cmath>

namespace gpolab {

double gradient_norm(const GradMap& grads) {
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        for (float v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(sq);
}

double AdamW::step(ParamStore& params, const GradMap& grads) {
    const double norm = gradient_norm(grads);
    if (!std::isfinite(norm)) throw NumericError("optimizer: non-finite gradient norm");
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    for (const auto& [name, grad] : grads) {
        Array& p = params.mutable_value(name);
        if (!p.same_shape(grad)) {
            throw UsageError("optimizer: gradient shape mismatch for '" + name + "'");
        }
        auto [mit, inserted_m] = m_.try_emplace(name, Array(p.shape));
        auto [vit, inserted_v] = v_.try_emplace(name, Array(p.shape));
        Array& m = mit->second;
        Array& v = vit->second;
        for (size_t i = 0; i < p.data.size(); ++i) {
            const double g = static_cast<double>(grad.data[i]) * scale;
            const double mi = cfg_.beta1 * static_cast<double>(m.data[i]) + (1.0 - cfg_.beta1) * g;
            const double vi =
                cfg_.beta2 * static_cast<double>(v.data[i]) + (1.0 - cfg_.beta2) * g * g;
            m.data[i] = static_cast<float>(mi);
            v.data[i] = static_cast<float>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            double value = static_cast<double>(p.data[i]);
            value -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
            value -= cfg_.lr * cfg_.weight_decay * static_cast<double>(p.data[i]);
            p.data[i] = static_cast<float>(value);
        }
        check_finite(p, "optimizer update of " + name);
    }
    params.bump_version();
    return norm;
}

ParamStore AdamW::export_moments() const {
    ParamStore out;
    for (const auto& [name, arr] : m_) out.add("m." + name, arr);
    for (const auto& [name, arr] : v_) out.add("v." + name, arr);
    return out;
}

void AdamW::import_moments(const ParamStore& moments, uint64_t steps) {
    m_.clear();
    v_.clear();
    t_ = steps;
    for (const auto& name : moments.names()) {
        if (name.rfind("m.", 0) == 0) m_[name.substr(2)] = moments.get(name);
        if (name.rfind("v.", 0) == 0) v_[name.substr(2)] = moments.get(name);
    }
}

}  // namespace gpolab
