#include "gpolab/alignment.hpp"

#include <cmath>

#include "gpolab/kernels.hpp"

namespace gpolab::alignment {

namespace k = kernels;

PairStrategy pair_strategy_from_string(const std::string& s) {
    if (s == "all") return PairStrategy::All;
    if (s == "max") return PairStrategy::Max;
    if (s == "min") return PairStrategy::Min;
    throw ConfigError("unknown pair strategy: " + s);
}

std::string to_string(PairStrategy strategy) {
    switch (strategy) {
        case PairStrategy::All: return "all";
        case PairStrategy::Max: return "max";
        case PairStrategy::Min: return "min";
    }
    return "all";
}

NodeId residual_rows(Tape& tape, const DenoiserConfig& cfg, const ParamStore& policy,
                     const ParamStore& ref, const Array& x0, const std::vector<double>& t,
                     const std::vector<int>& cond, const Array& eps, const NoiseSchedule& sched) {
    if (!x0.same_shape(eps)) {
        throw UsageError("residual_rows: x0/eps shape mismatch");
    }
    const size_t batch = x0.shape[0];
    if (t.size() != batch || cond.size() != batch) {
        throw UsageError("residual_rows: need one (t, cond) per row");
    }

    // x_t rows are constants: gradients flow into the policy only.
    Array xt({batch, cfg.data_dim});
    for (size_t i = 0; i < batch; ++i) {
        const double a = sched.alpha(t[i]);
        const double s = sched.sigma(t[i]);
        for (size_t j = 0; j < cfg.data_dim; ++j) {
            xt.at(i, j) = static_cast<float>(a * static_cast<double>(x0.at(i, j)) +
                                             s * static_cast<double>(eps.at(i, j)));
        }
    }

    Array ref_pred = predict_noise(cfg, ref, xt, t, cond);
    Array ref_norms = k::rowsum(k::ew_square(k::ew_sub(eps, ref_pred)));
    check_finite(ref_norms, "residual_rows reference norms");

    NodeId policy_pred = predict_noise(cfg, policy, tape, xt, t, cond);
    NodeId eps_leaf = tape.leaf(eps);
    NodeId policy_norms = tape.rowsum(tape.square(tape.sub(eps_leaf, policy_pred)));
    return tape.sub(policy_norms, tape.leaf(std::move(ref_norms)));
}

ResidualS residual_s(Tape& tape, const DenoiserConfig& cfg, const ParamStore& policy,
                     const ParamStore& ref, const Array& x0_row, int cond, double t,
                     const Array& eps_row, const NoiseSchedule& sched) {
    Array x0({1, cfg.data_dim}, x0_row.data);
    Array eps({1, cfg.data_dim}, eps_row.data);
    ResidualS out;
    out.node = residual_rows(tape, cfg, policy, ref, x0, {t}, {cond}, eps, sched);
    out.value = tape.value(out.node).scalar();
    return out;
}

ResidualS dpo_pair_loss(Tape& tape, const ResidualS& s_w, const ResidualS& s_l, double beta) {
    if (beta <= 0.0) throw UsageError("dpo_pair_loss: beta must be positive");
    ResidualS out;
    out.node = tape.softplus(tape.scale(tape.sub(s_w.node, s_l.node), beta));
    out.value = tape.value(out.node).scalar();
    return out;
}

double dpo_pair_loss_value(double s_w, double s_l, double beta) {
    if (beta <= 0.0) throw UsageError("dpo_pair_loss: beta must be positive");
    return k::stable_softplus(beta * (s_w - s_l));
}

std::vector<double> group_dpo_coeffs(size_t group_size) {
    if (group_size < 2) throw UsageError("group_dpo_coeffs: group size must be >= 2");
    std::vector<double> coeffs(group_size);
    for (size_t i = 0; i < group_size; ++i) {
        coeffs[i] = static_cast<double>(group_size) - 1.0 - 2.0 * static_cast<double>(i);
    }
    return coeffs;
}

std::vector<std::pair<size_t, size_t>> select_pairs(const rewards::RewardVector& r,
                                                    PairStrategy strategy) {
    const auto& v = r.values;
    if (v.size() < 2) throw UsageError("select_pairs: group size must be >= 2");

    std::vector<std::pair<size_t, size_t>> out;
    if (strategy == PairStrategy::All) {
        for (size_t i = 0; i < v.size(); ++i) {
            for (size_t j = i + 1; j < v.size(); ++j) {
                if (v[i] > v[j]) out.emplace_back(i, j);
                else if (v[j] > v[i]) out.emplace_back(j, i);
            }
        }
        return out;
    }

    bool found = false;
    double best_margin = 0.0;
    std::pair<size_t, size_t> best{0, 0};
    for (size_t i = 0; i < v.size(); ++i) {
        for (size_t j = i + 1; j < v.size(); ++j) {
            if (v[i] == v[j]) continue;
            const double margin = std::abs(v[i] - v[j]);
            const bool better = !found || (strategy == PairStrategy::Max ? margin > best_margin
                                                                         : margin < best_margin);
            if (better) {
                found = true;
                best_margin = margin;
                best = v[i] > v[j] ? std::make_pair(i, j) : std::make_pair(j, i);
            }
        }
    }
    if (found) out.push_back(best);
    return out;
}

GroupLoss gpo_loss(const DenoiserConfig& cfg, const ParamStore& policy, const ParamStore& ref,
                   const Array& samples, const std::vector<int>& conditions,
                   const rewards::AdvantageVector& advantages, const std::vector<double>& t_list,
                   const Array& eps, const NoiseSchedule& sched) {
    if (advantages.skipped) {
        throw UsageError("gpo_loss: group was skipped (flat rewards), no loss to build");
    }
    const size_t g = samples.rows();
    const size_t kk = t_list.size();
    if (kk == 0) throw UsageError("gpo_loss: need at least one timestep");
    if (advantages.values.size() != g || conditions.size() != g) {
        throw UsageError("gpo_loss: advantages/conditions must match group size");
    }
    if (eps.rows() != g * kk) {
        throw UsageError("gpo_loss: eps must have one row per (member, timestep)");
    }

    // Stack rows member-major: row i*k + j holds (x^i, t_j, eps_ij).
    const size_t batch = g * kk;
    Array x0({batch, cfg.data_dim});
    std::vector<double> t_rows(batch);
    std::vector<int> cond_rows(batch);
    Array weights({1, batch});
    for (size_t i = 0; i < g; ++i) {
        for (size_t j = 0; j < kk; ++j) {
            const size_t row = i * kk + j;
            for (size_t d = 0; d < cfg.data_dim; ++d) x0.at(row, d) = samples.at(i, d);
            t_rows[row] = t_list[j];
            cond_rows[row] = conditions[i];
            weights.data[row] =
                static_cast<float>(advantages.values[i] / static_cast<double>(kk));
        }
    }

    GroupLoss out;
    NodeId s = residual_rows(out.tape, cfg, policy, ref, x0, t_rows, cond_rows, eps, sched);
    out.node = out.tape.matmul(out.tape.leaf(std::move(weights)), s);
    out.value = out.tape.value(out.node).scalar();
    return out;
}

}  // namespace gpolab::alignment
