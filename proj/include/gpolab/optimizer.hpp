#pragma once

#include "gpolab/param_store.hpp"
#include "gpolab/tape.hpp"

namespace gpolab {

// Adam with decoupled weight decay and global-norm gradient clipping.
struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 1.0;  // 0 disables clipping
};

class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    // Applies one update; bumps params.version() exactly once. Parameters
    // absent from `grads` are left untouched. Returns the pre-clip global
    // gradient norm.
    double step(ParamStore& params, const GradMap& grads);

    uint64_t steps_taken() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

    // Moments round-trip through a ParamStore ("m.<name>" / "v.<name>")
    // so checkpoints can reuse the GPO1 container.
    ParamStore export_moments() const;
    void import_moments(const ParamStore& moments, uint64_t steps);

private:
    AdamWConfig cfg_;
    uint64_t t_ = 0;
    std::map<std::string, Array> m_, v_;
};

double gradient_norm(const GradMap& grads);

}  // namespace gpolab
