#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gpolab/array.hpp"

namespace gpolab::rewards {

// Target object counts for the counting evaluator, e.g. {(dog,2),(cat,1)}.
struct CountTarget {
    std::vector<std::pair<std::string, int>> items;
    void validate() const;
};

// Case-folded token set for the text-IoU evaluator.
struct TokenSet {
    std::set<std::string> tokens;
    static TokenSet of(const std::vector<std::string>& raw);
};

struct RewardVector {
    std::vector<double> values;
    std::string source;
};

// Standardized (z-scored) rewards. `skipped` marks groups whose rewards were
// all identical; those carry no preference signal and contribute no update.
struct AdvantageVector {
    std::vector<double> values;
    bool skipped = false;
};

// Per-label relative count error e = |N_det - N_target| / N_target mapped to
// reward 1 - min(1, e); multi-object targets average per-label rewards.
// Labels absent from `detected` count as zero.
double count_score(const std::map<std::string, int>& detected, const CountTarget& target);

// |ocr ∩ target| / |ocr ∪ target|
double text_iou_score(const TokenSet& ocr, const TokenSet& target);

// Fraction of yes answers.
double vqa_score(const std::vector<bool>& answers);

// Binarize an H x W grid at `threshold` and count 4-connected components of
// area >= 2 pixels (single-pixel speckle is ignored). Returns {"dot": n}.
std::map<std::string, int> detect_dots(const Array& grid, double threshold);

// exp(-||sample - modes[target]||^2 / scale^2), continuous in (0,1].
double gmm_mode_reward(const std::array<double, 2>& sample, size_t target_mode,
                       const std::vector<std::array<double, 2>>& modes, double scale);

// Population z-scores. Groups with zero reward spread are skipped rather
// than epsilon-smoothed.
AdvantageVector standardize(const RewardVector& r);

// sgn(r - mean(r)); the hard-sign alternative used by the standardization
// ablation. Same skip rule as standardize().
AdvantageVector sign_advantages(const RewardVector& r);

}  // namespace gpolab::rewards
