#include "gpolab/rewards.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace gpolab::rewards {

void CountTarget::validate() const {
    if (items.empty()) throw UsageError("CountTarget: empty target");
    std::set<std::string> seen;
    for (const auto& [label, count] : items) {
        if (count < 1) throw UsageError("CountTarget: count must be >= 1 for '" + label + "'");
        if (!seen.insert(label).second) {
            throw UsageError("CountTarget: duplicate label '" + label + "'");
        }
    }
}

TokenSet TokenSet::of(const std::vector<std::string>& raw) {
    TokenSet out;
    for (const std::string& token : raw) {
        std::string folded;
        folded.reserve(token.size());
        for (char c : token) folded.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        if (!folded.empty()) out.tokens.insert(folded);
    }
    return out;
}

double count_score(const std::map<std::string, int>& detected, const CountTarget& target) {
    target.validate();
    double total = 0.0;
    for (const auto& [label, want] : target.items) {
        const auto it = detected.find(label);
        const int got = it == detected.end() ? 0 : it->second;
        const double err = std::abs(got - want) / static_cast<double>(want);
        total += 1.0 - std::min(1.0, err);
    }
    return total / static_cast<double>(target.items.size());
}

double text_iou_score(const TokenSet& ocr, const TokenSet& target) {
    if (target.tokens.empty()) throw UsageError("text_iou_score: empty target");
    size_t inter = 0;
    for (const auto& t : ocr.tokens) inter += target.tokens.count(t);
    const size_t uni = ocr.tokens.size() + target.tokens.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double vqa_score(const std::vector<bool>& answers) {
    if (answers.empty()) throw UsageError("vqa_score: empty answers");
    size_t yes = 0;
    for (bool a : answers) yes += a ? 1 : 0;
    return static_cast<double>(yes) / static_cast<double>(answers.size());
}

std::map<std::string, int> detect_dots(const Array& grid, double threshold) {
    if (grid.shape.size() != 2) {
        throw UsageError("detect_dots: expected H x W grid, got " + shape_string(grid.shape));
    }
    const size_t h = grid.shape[0], w = grid.shape[1];
    std::vector<char> on(h * w), visited(h * w, 0);
    for (size_t i = 0; i < h * w; ++i) on[i] = grid.data[i] >= threshold ? 1 : 0;

    int dots = 0;
    std::vector<size_t> stack;
    for (size_t start = 0; start < h * w; ++start) {
        if (!on[start] || visited[start]) continue;
        size_t area = 0;
        stack.assign(1, start);
        visited[start] = 1;
        while (!stack.empty()) {
            const size_t p = stack.back();
            stack.pop_back();
            ++area;
            const size_t r = p / w, c = p % w;
            const size_t neighbors[4] = {
                r > 0 ? p - w : p, r + 1 < h ? p + w : p,
                c > 0 ? p - 1 : p, c + 1 < w ? p + 1 : p};
            for (size_t q : neighbors) {
                if (q != p && on[q] && !visited[q]) {
                    visited[q] = 1;
                    stack.push_back(q);
                }
            }
        }
        if (area >= 2) ++dots;
    }
    return {{"dot", dots}};
}

double gmm_mode_reward(const std::array<double, 2>& sample, size_t target_mode,
                       const std::vector<std::array<double, 2>>& modes, double scale) {
    if (scale <= 0.0) throw UsageError("gmm_mode_reward: scale must be positive");
    if (target_mode >= modes.size()) {
        throw UsageError("gmm_mode_reward: mode index " + std::to_string(target_mode) +
                         " out of range");
    }
    const double dx = sample[0] - modes[target_mode][0];
    const double dy = sample[1] - modes[target_mode][1];
    return std::exp(-(dx * dx + dy * dy) / (scale * scale));
}

namespace {

bool all_identical(const std::vector<double>& v) {
    for (double x : v) {
        if (x != v[0]) return false;
    }
    return true;
}

void check_group(const RewardVector& r) {
    if (r.values.size() < 2) throw UsageError("standardize: group size must be >= 2");
    for (double v : r.values) {
        if (!std::isfinite(v)) throw NumericError("standardize: non-finite reward");
    }
}

}  // namespace

AdvantageVector standardize(const RewardVector& r) {
    check_group(r);
    AdvantageVector out;
    if (all_identical(r.values)) {
        out.skipped = true;
        return out;
    }
    const size_t n = r.values.size();
    double mean = 0.0;
    for (double v : r.values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : r.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double stddev = std::sqrt(var);
    out.values.reserve(n);
    for (double v : r.values) out.values.push_back((v - mean) / stddev);
    return out;
}

AdvantageVector sign_advantages(const RewardVector& r) {
    check_group(r);
    AdvantageVector out;
    if (all_identical(r.values)) {
        out.skipped = true;
        return out;
    }
    const size_t n = r.values.size();
    double mean = 0.0;
    for (double v : r.values) mean += v;
    mean /= static_cast<double>(n);
    out.values.reserve(n);
    for (double v : r.values) {
        out.values.push_back(v > mean ? 1.0 : (v < mean ? -1.0 : 0.0));
    }
    return out;
}

}  // namespace gpolab::rewards
