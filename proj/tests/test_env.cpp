#include <catch2/catch.hpp>

#include <random>

#include "drsmt/env.hpp"

using namespace drsmt;

namespace {

SeriesTable ramp_table(std::size_t T, std::size_t d, const std::vector<int>& labels = {}) {
    SeriesTable t;
    t.timesteps = T;
    t.features = d;
    for (std::size_t j = 0; j < d; ++j) t.feature_names.push_back("f" + std::to_string(j));
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < d; ++j)
            t.values.push_back(static_cast<double>(i * 10 + j));
    t.labels = labels.empty() ? std::vector<int>(T, 0) : labels;
    return t;
}

PenaltyArray zero_penalty(std::size_t T, std::size_t n_steps) {
    PenaltyArray p;
    p.n_steps = n_steps;
    p.p.assign(T, 0.0);
    return p;
}

}  // namespace

TEST_CASE("augment") {
    Tensor2 w(2, 3, {1, 2, 3, 4, 5, 6});

    SECTION("indicator zero") {
        Tensor2 s = augment(w, 0);
        REQUIRE(s.cols == 4);
        for (std::size_t i = 0; i < 2; ++i) CHECK(s(i, 3) == 0.0);
    }

    SECTION("indicator one") {
        Tensor2 s = augment(w, 1);
        for (std::size_t i = 0; i < 2; ++i) CHECK(s(i, 3) == 1.0);
    }

    SECTION("stripping the indicator recovers the window") {
        Tensor2 s = augment(w, 1);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 3; ++j) CHECK(s(i, j) == w(i, j));
    }
}

TEST_CASE("reset") {
    SECTION("cursor lands on the first full window") {
        WindowEnv env(ramp_table(100, 2), zero_penalty(100, 25), 25);
        EnvState s = env.reset();
        CHECK(s.t == 24);
        CHECK(s.window.rows == 25);
        CHECK(s.window.cols == 2);
    }

    SECTION("two resets give identical state") {
        WindowEnv env(ramp_table(50, 2), zero_penalty(50, 10), 10);
        EnvState a = env.reset();
        EnvState b = env.reset();
        CHECK(a.t == b.t);
        CHECK(a.s0.v == b.s0.v);
        CHECK(a.s1.v == b.s1.v);
    }

    SECTION("series shorter than n_steps+1 is rejected") {
        CHECK_THROWS_AS(WindowEnv(ramp_table(10, 2), zero_penalty(10, 10), 10), DataError);
    }
}

TEST_CASE("step") {
    SECTION("episode yields T - n_steps decisions") {
        const std::size_t T = 30, n = 7;
        WindowEnv env(ramp_table(T, 1), zero_penalty(T, n), n);
        env.reset();
        std::size_t decisions = 0;
        while (!env.done()) {
            env.step(0);
            ++decisions;
        }
        CHECK(decisions == T - n);
        CHECK(decisions == env.decisions());
        CHECK_THROWS_AS(env.step(0), TrainingError);
    }

    SECTION("returned label tracks the new final timestep") {
        std::vector<int> labels = {0, 0, 0, 1, 0, 1, 1, 0};
        WindowEnv env(ramp_table(8, 1, labels), zero_penalty(8, 3), 3);
        env.reset();
        std::vector<int> seen;
        while (!env.done()) {
            StepOutcome out = env.step(0);
            CHECK(out.y == labels[env.cursor()]);
            seen.push_back(out.y);
        }
        CHECK(seen == std::vector<int>{1, 0, 1, 1, 0});
    }

    SECTION("candidate next states differ only in the indicator column") {
        WindowEnv env(ramp_table(20, 3), zero_penalty(20, 5), 5);
        env.reset();
        StepOutcome out = env.step(1);
        REQUIRE(out.s0_next.cols == 4);
        for (std::size_t i = 0; i < out.s0_next.rows; ++i) {
            for (std::size_t j = 0; j < 3; ++j) CHECK(out.s0_next(i, j) == out.s1_next(i, j));
            CHECK(out.s0_next(i, 3) == 0.0);
            CHECK(out.s1_next(i, 3) == 1.0);
        }
    }

    SECTION("state windows mirror the underlying table exactly") {
        auto table = ramp_table(40, 2);
        WindowEnv env(table, zero_penalty(40, 6), 6);
        env.reset();
        std::mt19937_64 rng(3);
        while (!env.done()) {
            StepOutcome out = env.step(0);
            const std::size_t t = env.cursor();
            std::uniform_int_distribution<std::size_t> ri(0, 5), rj(0, 1);
            for (int probe = 0; probe < 3; ++probe) {
                const std::size_t i = ri(rng), j = rj(rng);
                CHECK(out.s0_next(i, j) == table.value(t + 1 - 6 + i, j));
            }
        }
    }

    SECTION("episode length property over random sizes") {
        std::mt19937_64 rng(11);
        std::uniform_int_distribution<std::size_t> td(5, 80), nd(2, 10);
        for (int trial = 0; trial < 25; ++trial) {
            const std::size_t n = nd(rng);
            const std::size_t T = std::max(td(rng), n + 2);
            WindowEnv env(ramp_table(T, 1), zero_penalty(T, n), n);
            env.reset();
            std::size_t decisions = 0;
            while (!env.done()) {
                env.step(0);
                ++decisions;
            }
            CHECK(decisions == T - n);
        }
    }
}

TEST_CASE("load_slice") {
    const std::size_t n = 4;
    auto table = ramp_table(60, 2);
    PenaltyArray p;
    p.n_steps = n;
    p.p.assign(60, 0.0);
    for (std::size_t t = n - 1; t < 60; ++t) p.p[t] = static_cast<double>(t) * 0.5;

    SECTION("reset lands on the slice's first full window") {
        WindowEnv env(table, p, n);
        auto slice = table.slice(20, 20);
        env.load_slice(slice, p.slice(20, 20));
        EnvState s = env.reset();
        CHECK(s.t == n - 1);
        CHECK(s.window(0, 0) == table.value(20, 0));
    }

    SECTION("re-based penalties equal global values at shifted indices") {
        WindowEnv env(table, p, n);
        auto slice = table.slice(24, 18);
        env.load_slice(slice, p.slice(24, 18));
        for (std::size_t t = n - 1; t < 18; ++t)
            CHECK(env.penalty_at(t) == p.p[24 + t]);
        for (std::size_t t = 0; t + 1 < n; ++t) CHECK(env.penalty_at(t) == 0.0);
    }

    SECTION("K-fold slices visit every decision timestep exactly once") {
        const std::size_t K = 5;
        auto slices = kfold_slices(table, K, n + 1);
        std::size_t total = 0;
        for (auto& s : slices) {
            WindowEnv env(s, zero_penalty(s.timesteps, n), n);
            env.reset();
            while (!env.done()) {
                env.step(0);
                ++total;
            }
        }
        std::size_t expect = 0;
        for (auto& s : slices) expect += s.timesteps - n;
        CHECK(total == expect);
    }

    SECTION("short slice rejected") {
        WindowEnv env(table, p, n);
        auto slice = table.slice(0, n);
        CHECK_THROWS_AS(env.load_slice(slice, p.slice(0, n)), DataError);
    }
}
