#include <doctest.h>

#include <cmath>
#include <queue>

#include "gpolab/rewards.hpp"
#include "gpolab/rng.hpp"

using namespace gpolab;
using namespace gpolab::rewards;

namespace {

// Independent flood-fill oracle: BFS with an explicit queue, separate from
// the DFS-stack implementation under test.
int oracle_dot_count(const Array& grid, double threshold) {
    const size_t h = grid.shape[0], w = grid.shape[1];
    std::vector<char> seen(h * w, 0);
    int count = 0;
    for (size_t r = 0; r < h; ++r) {
        for (size_t c = 0; c < w; ++c) {
            const size_t p = r * w + c;
            if (seen[p] || grid.data[p] < threshold) continue;
            int area = 0;
            std::queue<std::pair<size_t, size_t>> queue;
            queue.push({r, c});
            seen[p] = 1;
            while (!queue.empty()) {
                auto [cr, cc] = queue.front();
                queue.pop();
                ++area;
                const long long dr[4] = {-1, 1, 0, 0};
                const long long dc[4] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    const long long nr = static_cast<long long>(cr) + dr[d];
                    const long long nc = static_cast<long long>(cc) + dc[d];
                    if (nr < 0 || nc < 0 || nr >= static_cast<long long>(h) ||
                        nc >= static_cast<long long>(w)) {
                        continue;
                    }
                    const size_t np = static_cast<size_t>(nr) * w + static_cast<size_t>(nc);
                    if (!seen[np] && grid.data[np] >= threshold) {
                        seen[np] = 1;
                        queue.push({static_cast<size_t>(nr), static_cast<size_t>(nc)});
                    }
                }
            }
            if (area >= 2) ++count;
        }
    }
    return count;
}

CountTarget target_of(std::vector<std::pair<std::string, int>> items) {
    CountTarget t;
    t.items = std::move(items);
    return t;
}

}  // namespace

TEST_SUITE_BEGIN("rewards");

TEST_CASE("count_score fixtures") {
    CHECK(count_score({{"dog", 2}}, target_of({{"dog", 2}})) == doctest::Approx(1.0));
    CHECK(count_score({{"dog", 3}}, target_of({{"dog", 2}})) == doctest::Approx(0.5));
    CHECK(count_score({{"dog", 2}, {"cat", 0}}, target_of({{"dog", 2}, {"cat", 1}})) ==
          doctest::Approx(0.5));
    // absent label counts as zero detections
    CHECK(count_score({}, target_of({{"dog", 2}})) == doctest::Approx(0.0));
    // clamped at error 1: five detections for a target of two
    CHECK(count_score({{"dog", 5}}, target_of({{"dog", 2}})) == doctest::Approx(0.0));
    CHECK_THROWS_AS(count_score({}, CountTarget{}), UsageError);
    CHECK_THROWS_AS(count_score({}, target_of({{"dog", 0}})), UsageError);
    CHECK_THROWS_AS(count_score({}, target_of({{"dog", 1}, {"dog", 2}})), UsageError);
}

TEST_CASE("count_score properties: range, exactness, monotone in count error") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const int want = 1 + static_cast<int>(rng.below(7));
        const int got = static_cast<int>(rng.below(12));
        const double s = count_score({{"dot", got}}, target_of({{"dot", want}}));
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
        CHECK((s == 1.0) == (got == want));
        const double worse = count_score({{"dot", got + (got >= want ? 1 : -1)}},
                                         target_of({{"dot", want}}));
        CHECK(worse <= s + 1e-12);
    }
}

TEST_CASE("text_iou_score fixtures") {
    const TokenSet hello_neurips = TokenSet::of({"Hello", "NeurIPS"});
    CHECK(text_iou_score(TokenSet::of({"hello", "neurips"}), hello_neurips) ==
          doctest::Approx(1.0));
    CHECK(text_iou_score(TokenSet::of({"hello"}), hello_neurips) == doctest::Approx(0.5));
    CHECK(text_iou_score(TokenSet::of({}), hello_neurips) == doctest::Approx(0.0));
    CHECK(text_iou_score(TokenSet::of({"bye"}), hello_neurips) == doctest::Approx(0.0));
    CHECK_THROWS_AS(text_iou_score(TokenSet::of({"x"}), TokenSet::of({})), UsageError);
}

TEST_CASE("vqa_score fixtures") {
    CHECK(vqa_score({true, true, true, true}) == doctest::Approx(1.0));
    CHECK(vqa_score({true, true, true, false}) == doctest::Approx(0.75));
    CHECK(vqa_score({false}) == doctest::Approx(0.0));
    CHECK_THROWS_AS(vqa_score({}), UsageError);
}

TEST_CASE("scores equal 1 iff exact match") {
    CHECK(text_iou_score(TokenSet::of({"a", "b"}), TokenSet::of({"a", "b", "c"})) < 1.0);
    CHECK(vqa_score({true, false}) < 1.0);
    CHECK(count_score({{"a", 1}, {"b", 2}}, target_of({{"a", 1}, {"b", 2}})) == 1.0);
}

TEST_CASE("detect_dots fixtures") {
    Array zero({6, 6});
    CHECK(detect_dots(zero, 0.5).at("dot") == 0);

    // two disjoint 2x2 blocks
    Array two({6, 6});
    for (size_t r = 0; r < 2; ++r)
        for (size_t c = 0; c < 2; ++c) two.at(r, c) = 1.0f;
    for (size_t r = 4; r < 6; ++r)
        for (size_t c = 4; c < 6; ++c) two.at(r, c) = 1.0f;
    CHECK(detect_dots(two, 0.5).at("dot") == 2);

    // blocks sharing only a diagonal corner stay separate under 4-connectivity
    Array diag({4, 4});
    for (size_t r = 0; r < 2; ++r)
        for (size_t c = 0; c < 2; ++c) diag.at(r, c) = 1.0f;
    for (size_t r = 2; r < 4; ++r)
        for (size_t c = 2; c < 4; ++c) diag.at(r, c) = 1.0f;
    CHECK(detect_dots(diag, 0.5).at("dot") == 2);

    // single pixels are not dots
    Array speck({3, 3});
    speck.at(1, 1) = 1.0f;
    CHECK(detect_dots(speck, 0.5).at("dot") == 0);

    CHECK_THROWS_AS(detect_dots(Array({4}), 0.5), UsageError);
}

TEST_CASE("detect_dots agrees with a BFS oracle on 1000 random grids") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t h = 1 + rng.below(14), w = 1 + rng.below(14);
        Array grid({h, w});
        for (float& v : grid.data) v = static_cast<float>(rng.uniform());
        const double threshold = 0.3 + 0.4 * rng.uniform();
        CHECK(detect_dots(grid, threshold).at("dot") == oracle_dot_count(grid, threshold));
    }
}

TEST_CASE("gmm_mode_reward values") {
    const std::vector<std::array<double, 2>> modes = {{0.0, 0.0}, {3.0, 4.0}};
    CHECK(gmm_mode_reward({3.0, 4.0}, 1, modes, 2.0) == doctest::Approx(1.0));
    // at distance == scale the reward is e^-1
    CHECK(gmm_mode_reward({2.0, 0.0}, 0, modes, 2.0) == doctest::Approx(std::exp(-1.0)));
    // far away: tiny but finite
    const double far = gmm_mode_reward({20.0, 0.0}, 0, modes, 2.0);
    CHECK(far < 1e-43);
    CHECK(far >= 0.0);
    CHECK(std::isfinite(far));
    CHECK_THROWS_AS(gmm_mode_reward({0, 0}, 2, modes, 2.0), UsageError);
    CHECK_THROWS_AS(gmm_mode_reward({0, 0}, 0, modes, 0.0), UsageError);
}

TEST_CASE("standardize fixture: [1,2,3]") {
    RewardVector r;
    r.values = {1.0, 2.0, 3.0};
    const AdvantageVector a = standardize(r);
    REQUIRE(!a.skipped);
    // population std of [1,2,3] is sqrt(2/3)
    CHECK(a.values[0] == doctest::Approx(-1.2247448714));
    CHECK(a.values[1] == doctest::Approx(0.0));
    CHECK(a.values[2] == doctest::Approx(1.2247448714));
}

TEST_CASE("standardize skips flat groups and rejects tiny ones") {
    RewardVector flat;
    flat.values = {5.0, 5.0, 5.0, 5.0};
    CHECK(standardize(flat).skipped);
    CHECK(sign_advantages(flat).skipped);

    RewardVector tiny;
    tiny.values = {1.0};
    CHECK_THROWS_AS(standardize(tiny), UsageError);
}

TEST_CASE("standardize properties over random groups") {
    Rng rng(55);
    for (int trial = 0; trial < 300; ++trial) {
        const size_t g = 2 + rng.below(31);
        RewardVector r;
        for (size_t i = 0; i < g; ++i) r.values.push_back(rng.uniform());
        const AdvantageVector a = standardize(r);
        REQUIRE(!a.skipped);

        double mean = 0.0, var = 0.0;
        for (double v : a.values) mean += v;
        mean /= static_cast<double>(g);
        for (double v : a.values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(g);
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);

        // positive-affine invariance
        const double scale = 0.1 + 5.0 * rng.uniform();
        const double shift = 10.0 * (rng.uniform() - 0.5);
        RewardVector r2;
        for (double v : r.values) r2.values.push_back(scale * v + shift);
        const AdvantageVector a2 = standardize(r2);
        double r_mean = 0.0;
        for (double v : r.values) r_mean += v;
        r_mean /= static_cast<double>(g);
        for (size_t i = 0; i < g; ++i) {
            CHECK(std::abs(a.values[i] - a2.values[i]) < 1e-6);
            // sign(A_i) matches the side of the group mean
            if (r.values[i] > r_mean) CHECK(a.values[i] > 0.0);
            if (r.values[i] < r_mean) CHECK(a.values[i] < 0.0);
        }
    }
}

TEST_SUITE_END();
