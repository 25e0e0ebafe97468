#pragma once

#include <utility>
#include <vector>

#include "gpolab/mlp.hpp"
#include "gpolab/rewards.hpp"
#include "gpolab/schedule.hpp"

namespace gpolab::alignment {

enum class PairStrategy { All, Max, Min };

PairStrategy pair_strategy_from_string(const std::string& s);
std::string to_string(PairStrategy strategy);

// A residual value living on some tape: s(x, t, eps) =
// ||eps - eps_theta(x_t)||^2 - ||eps - eps_ref(x_t)||^2. Gradients flow only
// through the policy term; the reference term enters as a constant.
struct ResidualS {
    NodeId node = -1;
    double value = 0.0;
};

// Batched per-row residuals, node shape [B,1]. Row b pairs x0[b] with t[b],
// cond[b] and eps[b].
NodeId residual_rows(Tape& tape, const DenoiserConfig& cfg, const ParamStore& policy,
                     const ParamStore& ref, const Array& x0, const std::vector<double>& t,
                     const std::vector<int>& cond, const Array& eps, const NoiseSchedule& sched);

ResidualS residual_s(Tape& tape, const DenoiserConfig& cfg, const ParamStore& policy,
                     const ParamStore& ref, const Array& x0_row, int cond, double t,
                     const Array& eps_row, const NoiseSchedule& sched);

// -log sigmoid(-beta * (s_w - s_l)), elementwise over the residual nodes.
ResidualS dpo_pair_loss(Tape& tape, const ResidualS& s_w, const ResidualS& s_l, double beta);
double dpo_pair_loss_value(double s_w, double s_l, double beta);

// Coefficients (G-1-2i) of the closed-form all-pairs objective, i indexing
// preference-sorted members best-first.
std::vector<double> group_dpo_coeffs(size_t group_size);

// Winner/loser index pairs under a selection strategy. ALL returns every
// ordered pair with strictly larger winner reward; MAX/MIN return the single
// pair with the largest/smallest nonzero margin (first such pair in (i,j)
// scan order on ties). A flat group yields no pairs.
std::vector<std::pair<size_t, size_t>> select_pairs(const rewards::RewardVector& r,
                                                    PairStrategy strategy);

struct GroupLoss {
    Tape tape;
    NodeId node = -1;
    double value = 0.0;
};

// mean over the k timesteps of sum_i A_i * s(x^i, t_j, eps_ij). eps has one
// row per (member, timestep) pair, member-major: row i*k + j.
GroupLoss gpo_loss(const DenoiserConfig& cfg, const ParamStore& policy, const ParamStore& ref,
                   const Array& samples, const std::vector<int>& conditions,
                   const rewards::AdvantageVector& advantages, const std::vector<double>& t_list,
                   const Array& eps, const NoiseSchedule& sched);

}  // namespace gpolab::alignment
