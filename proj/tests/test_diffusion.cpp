#include <doctest.h>

#include <cmath>

#include "gpolab/mlp.hpp"
#include "gpolab/rng.hpp"
#include "gpolab/sampler.hpp"
#include "gpolab/schedule.hpp"

using namespace gpolab;

namespace {

bool bitwise_equal(const Array& a, const Array& b) {
    if (a.shape != b.shape) return false;
    for (size_t i = 0; i < a.data.size(); ++i) {
        if (a.data[i] != b.data[i]) return false;
    }
    return true;
}

// Identity eps-predictor: with zero hidden layers and a head that passes the
// sample columns through, eps_hat(x, t, c) == x for every t and c.
ParamStore identity_denoiser(const DenoiserConfig& cfg) {
    ParamStore params;
    Array w({cfg.input_dim(), cfg.data_dim});
    for (size_t j = 0; j < cfg.data_dim; ++j) w.at(j, j) = 1.0f;
    params.add("head.w", std::move(w));
    params.add("head.b", Array({cfg.data_dim}));
    params.add("cond_embed", Array({cfg.n_conditions, cfg.embed_dim}));
    return params;
}

}  // namespace

TEST_SUITE_BEGIN("diffusion");

TEST_CASE("schedule identities hold on a 1000-point grid") {
    const NoiseSchedule vp = make_schedule(ScheduleKind::VariancePreserving);
    const NoiseSchedule fm = make_schedule(ScheduleKind::FlowMatching);
    for (int i = 0; i <= 1000; ++i) {
        const double t = static_cast<double>(i) / 1000.0;
        CHECK(std::abs(vp.alpha(t) * vp.alpha(t) + vp.sigma(t) * vp.sigma(t) - 1.0) < 1e-6);
        CHECK(std::abs(fm.alpha(t) + fm.sigma(t) - 1.0) < 1e-6);
    }
    for (const NoiseSchedule& sched : {vp, fm}) {
        CHECK(sched.alpha(0.0) == doctest::Approx(1.0));
        CHECK(sched.sigma(0.0) == doctest::Approx(0.0));
        CHECK(sched.alpha(1.0) == doctest::Approx(0.0));
        CHECK(sched.sigma(1.0) == doctest::Approx(1.0));
    }
}

TEST_CASE("add_noise endpoint and interior values") {
    const NoiseSchedule fm = make_schedule(ScheduleKind::FlowMatching);
    Array x0({3}, {1.0f, -2.0f, 0.5f});
    Array eps({3}, {0.3f, 0.7f, -0.1f});

    Array at0 = add_noise(x0, eps, 0.0, fm);
    CHECK(bitwise_equal(at0, x0));

    Array at1 = add_noise(x0, eps, 1.0, fm);
    CHECK(bitwise_equal(at1, eps));

    Array x1({1}, {1.0f});
    Array e0({1}, {0.0f});
    CHECK(add_noise(x1, e0, 0.3, fm).data[0] == doctest::Approx(0.7));

    CHECK_THROWS_AS(add_noise(x0, eps, -0.1, fm), UsageError);
    CHECK_THROWS_AS(add_noise(x0, eps, 1.1, fm), UsageError);
    CHECK_THROWS_AS(add_noise(x0, Array({2}), 0.5, fm), UsageError);
}

TEST_CASE("shifted timestep sampler") {
    TimestepSampler sampler;
    sampler.mode = TimestepSampler::Mode::Shifted;

    sampler.shift = 1.0;  // identity
    CHECK(sampler.apply(0.4) == doctest::Approx(0.4));

    sampler.shift = 3.0;  // 3*0.5 / (1 + 2*0.5) = 0.75
    CHECK(sampler.apply(0.5) == doctest::Approx(0.75));

    // uniform mode: Monte-Carlo mean 0.5 +- 0.01 over 1e5 draws
    TimestepSampler uniform;
    uniform.mode = TimestepSampler::Mode::Uniform;
    Rng rng(1);
    double total = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double t = uniform.sample(rng);
        CHECK(t > 0.0);
        CHECK(t < 1.0);
        total += t;
    }
    CHECK(std::abs(total / n - 0.5) < 0.01);

    // shifted draws stay in (0,1) and shift>1 skews upward
    Rng rng2(2);
    double total2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = sampler.sample(rng2);
        CHECK(t > 0.0);
        CHECK(t < 1.0);
        total2 += t;
    }
    CHECK(total2 / n > 0.6);
}

TEST_CASE("variance-preserving noising keeps unit variance") {
    const NoiseSchedule vp = make_schedule(ScheduleKind::VariancePreserving);
    Rng rng(33);
    for (double t : {0.1, 0.35, 0.5, 0.8, 0.95}) {
        const int n = 10000;
        double sum = 0.0, sumsq = 0.0;
        for (int i = 0; i < n; ++i) {
            Array x0({1}, {static_cast<float>(rng.normal())});
            Array eps({1}, {static_cast<float>(rng.normal())});
            const double v = add_noise(x0, eps, t, vp).data[0];
            sum += v;
            sumsq += v * v;
        }
        const double mean = sum / n;
        const double var = sumsq / n - mean * mean;
        CHECK(std::abs(var - 1.0) < 0.05);
    }
}

TEST_CASE("one Euler step with a perfect noise predictor removes all noise") {
    DenoiserConfig cfg;
    cfg.data_dim = 4;
    cfg.n_conditions = 2;
    cfg.n_hidden = 0;
    cfg.embed_dim = 4;
    const ParamStore params = identity_denoiser(cfg);
    const NoiseSchedule fm = make_schedule(ScheduleKind::FlowMatching);

    Trajectory traj = generate(cfg, params, 1, 1, fm, 77);
    for (size_t j = 0; j < cfg.data_dim; ++j) {
        CHECK(traj.x0.data[j] == 0.0f);
        CHECK(traj.initial_noise.data[j] != 0.0f);
    }
}

TEST_CASE("generation is reproducible bit-exactly") {
    DenoiserConfig cfg;
    cfg.data_dim = 6;
    cfg.n_conditions = 3;
    cfg.hidden_dim = 16;
    cfg.n_hidden = 2;
    cfg.embed_dim = 8;
    const ParamStore params = init_denoiser(cfg, 5);
    for (ScheduleKind kind : {ScheduleKind::FlowMatching, ScheduleKind::VariancePreserving}) {
        const NoiseSchedule sched = make_schedule(kind);
        Trajectory a = generate(cfg, params, 2, 10, sched, 123);
        Trajectory b = generate(cfg, params, 2, 10, sched, 123);
        CHECK(bitwise_equal(a.x0, b.x0));
        Trajectory c = generate(cfg, params, 2, 10, sched, 124);
        CHECK(!bitwise_equal(a.x0, c.x0));
    }
}

TEST_CASE("group generation row equals standalone generation with the same seed") {
    DenoiserConfig cfg;
    cfg.data_dim = 5;
    cfg.n_conditions = 4;
    cfg.hidden_dim = 12;
    cfg.n_hidden = 1;
    cfg.embed_dim = 6;
    const ParamStore params = init_denoiser(cfg, 8);
    for (ScheduleKind kind : {ScheduleKind::FlowMatching, ScheduleKind::VariancePreserving}) {
        const NoiseSchedule sched = make_schedule(kind);
        const std::vector<int> conds = {0, 1, 2, 3};
        const std::vector<uint64_t> seeds = {11, 22, 33, 44};
        Array batch = generate_group(cfg, params, conds, 8, sched, seeds);
        for (size_t i = 0; i < conds.size(); ++i) {
            Trajectory single = generate(cfg, params, conds[i], 8, sched, seeds[i]);
            for (size_t j = 0; j < cfg.data_dim; ++j) {
                CHECK(batch.at(i, j) == single.x0.data[j]);
            }
        }
    }
}

TEST_CASE("non-finite samples raise a numeric error naming the step") {
    DenoiserConfig cfg;
    cfg.data_dim = 2;
    cfg.n_conditions = 1;
    cfg.n_hidden = 0;
    cfg.embed_dim = 4;
    ParamStore params = identity_denoiser(cfg);
    // blow up the head so the Euler update overflows float range
    for (float& v : params.mutable_value("head.w").data) v *= 1e30f;
    const NoiseSchedule fm = make_schedule(ScheduleKind::FlowMatching);
    try {
        generate(cfg, params, 0, 4, fm, 9);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("generate validates arguments") {
    DenoiserConfig cfg;
    cfg.data_dim = 2;
    cfg.n_conditions = 1;
    cfg.n_hidden = 0;
    cfg.embed_dim = 4;
    const ParamStore params = identity_denoiser(cfg);
    const NoiseSchedule fm = make_schedule(ScheduleKind::FlowMatching);
    CHECK_THROWS_AS(generate(cfg, params, 0, 0, fm, 1), UsageError);
    CHECK_THROWS_AS(generate_group(cfg, params, {0, 0}, 4, fm, {1}), UsageError);
}

TEST_SUITE_END();
