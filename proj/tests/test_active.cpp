#include <catch2/catch.hpp>

#include <random>

#include "drsmt/active.hpp"
#include "oracles.hpp"

using namespace drsmt;

namespace {

// pool of n entries with random features, no labels
LabelPool random_pool(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
    std::vector<Window> windows(n);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        windows[i].start = i;
        windows[i].flat.resize(dim);
        for (double& x : windows[i].flat) x = u(rng);
    }
    return LabelPool::from_windows(windows, 1, dim);
}

}  // namespace

TEST_CASE("margin") {
    CHECK(margin(0.3, 0.3) == 0.0);
    CHECK(margin(2.0, -1.0) == 3.0);
    CHECK(margin(-1.0, 2.0) == margin(2.0, -1.0));
}

TEST_CASE("rbf_weight") {
    std::vector<double> a{1.0, 2.0}, b{4.0, 6.0};
    CHECK(rbf_weight(a, a, 1.0) == 1.0);
    CHECK(rbf_weight(a, b, 1.0) == Approx(std::exp(-25.0 / 2.0)));
    CHECK(rbf_weight(a, b, 0.5) == rbf_weight(b, a, 0.5));
    CHECK(rbf_weight(a, b, 0.01) < 1e-200);  // weight vanishes with distance
    CHECK_THROWS_AS(rbf_weight(a, b, 0.0), ConfigError);
}

TEST_CASE("select_uncertain") {
    std::mt19937_64 rng(4);
    LabelPool pool = random_pool(3, 2, rng);
    std::vector<double> margins{5.0, 0.1, 3.0};

    SECTION("argmin margin wins") {
        auto sel = select_uncertain(pool, margins, 1);
        REQUIRE(sel.size() == 1);
        CHECK(sel[0] == 1);
    }

    SECTION("asking for everything sorts by margin") {
        auto sel = select_uncertain(pool, margins, 3);
        CHECK(sel == std::vector<std::size_t>{1, 2, 0});
    }

    SECTION("labeled entries are never selected") {
        pool.oracle_label({1}, {0, 0, 0});
        auto sel = select_uncertain(pool, margins, 3);
        CHECK(sel == std::vector<std::size_t>{2, 0});
    }

    SECTION("ties break toward the lower index") {
        std::vector<double> tied{2.0, 2.0, 2.0};
        auto sel = select_uncertain(pool, tied, 2);
        CHECK(sel == std::vector<std::size_t>{0, 1});
    }

    SECTION("selected margins never exceed excluded unlabeled margins") {
        std::mt19937_64 prng(44);
        std::uniform_real_distribution<double> md(0.0, 10.0);
        std::uniform_int_distribution<std::size_t> kd(1, 19);
        for (int trial = 0; trial < 50; ++trial) {
            LabelPool p = random_pool(20, 2, prng);
            std::vector<double> ms(20);
            for (double& m : ms) m = md(prng);
            const std::size_t k = kd(prng);
            auto sel = select_uncertain(p, ms, k);
            std::vector<bool> chosen(20, false);
            for (std::size_t i : sel) chosen[i] = true;
            double max_sel = 0.0, min_rest = 1e18;
            for (std::size_t i = 0; i < 20; ++i) {
                if (chosen[i])
                    max_sel = std::max(max_sel, ms[i]);
                else
                    min_rest = std::min(min_rest, ms[i]);
            }
            CHECK(max_sel <= min_rest);
        }
    }
}

TEST_CASE("oracle_label") {
    std::mt19937_64 rng(9);
    LabelPool pool = random_pool(4, 2, rng);
    std::vector<int> truth{1, 0, 1, 0};

    SECTION("labels come from the ground truth") {
        pool.oracle_label({2}, truth);
        CHECK(pool[2].label == 1);
        CHECK(pool[2].source == LabelSource::oracle);
        CHECK(pool.oracle_used() == 1);
    }

    SECTION("relabeling is a no-op and never double-counts") {
        pool.oracle_label({0, 0}, truth);
        CHECK(pool.oracle_used() == 1);
        pool.oracle_label({0}, truth);
        CHECK(pool.oracle_used() == 1);
    }
}

TEST_CASE("spread_labels") {
    SECTION("single labeled neighbor pulls the unlabeled node to it") {
        std::vector<Window> w(2);
        w[0].flat = {0.0};
        w[1].flat = {0.0};  // identical features, weight 1
        w[0].start = 0;
        w[1].start = 1;
        LabelPool pool = LabelPool::from_windows(w, 1, 1);
        pool.oracle_label({0}, {1, 0});
        auto g = build_similarity_graph(pool, 1, 1.0);
        auto res = spread_labels(pool, g);
        CHECK(res.converged);
        CHECK(res.p1[1] == Approx(1.0).margin(1e-9));
    }

    SECTION("node equidistant from both classes settles at one half") {
        std::vector<Window> w(3);
        w[0].flat = {-1.0};
        w[1].flat = {0.0};
        w[2].flat = {1.0};
        for (std::size_t i = 0; i < 3; ++i) w[i].start = i;
        LabelPool pool = LabelPool::from_windows(w, 1, 1);
        pool.oracle_label({0, 2}, {0, -1, 1});
        auto g = build_similarity_graph(pool, 2, 1.0);
        auto res = spread_labels(pool, g);
        CHECK(res.p1[1] == Approx(0.5).margin(1e-6));
    }

    SECTION("ten-node fixed point matches the dense linear solve") {
        std::mt19937_64 rng(77);
        for (int trial = 0; trial < 10; ++trial) {
            LabelPool pool = random_pool(10, 3, rng);
            std::vector<int> truth(10, 0);
            truth[3] = 1;
            pool.oracle_label({3, 7}, truth);

            auto g = build_similarity_graph(pool, 9, 1.0);  // dense on 10 nodes
            auto res = spread_labels(pool, g, 100000, 1.0, 1e-12);
            REQUIRE(res.converged);

            std::vector<std::vector<double>> w(10, std::vector<double>(10, 0.0));
            for (std::size_t i = 0; i < 10; ++i)
                for (std::size_t j = 0; j < 10; ++j)
                    if (i != j) w[i][j] = rbf_weight(pool[i].x, pool[j].x, 1.0);
            std::vector<int> labels(10, -1);
            labels[3] = 1;
            labels[7] = 0;
            auto expect = oracles::spread_dense_solve(w, labels);
            for (std::size_t i = 0; i < 10; ++i)
                CHECK(res.p1[i] == Approx(expect[i]).margin(1e-6));
        }
    }

    SECTION("fixed point satisfies the propagation residual") {
        std::mt19937_64 rng(5);
        LabelPool pool = random_pool(30, 4, rng);
        std::vector<int> truth(30, 0);
        for (std::size_t i = 0; i < 30; i += 7) truth[i] = 1;
        pool.oracle_label({0, 7, 14, 2, 9}, truth);
        auto g = build_similarity_graph(pool, 5);
        auto res = spread_labels(pool, g, 100000, 1.0, 1e-9);
        REQUIRE(res.converged);
        CHECK(spread_residual(pool, g, res.p1) <= 1e-6);
    }

    SECTION("probabilities stay valid distributions") {
        std::mt19937_64 rng(6);
        LabelPool pool = random_pool(25, 3, rng);
        std::vector<int> truth(25, 0);
        truth[4] = 1;
        pool.oracle_label({4, 11}, truth);
        auto g = build_similarity_graph(pool, 4);
        auto res = spread_labels(pool, g);
        for (double p : res.p1) {
            CHECK(p >= -1e-9);
            CHECK(p <= 1.0 + 1e-9);
        }
    }

    SECTION("single-class labels send all mass to that class") {
        std::mt19937_64 rng(8);
        LabelPool pool = random_pool(6, 2, rng);
        pool.oracle_label({0}, {1, 1, 1, 1, 1, 1});
        auto g = build_similarity_graph(pool, 5, 1.0);
        auto res = spread_labels(pool, g, 100000, 1.0, 1e-10);
        for (double p : res.p1) CHECK(p == Approx(1.0).margin(1e-6));
    }

    SECTION("no labeled entries is an error") {
        std::mt19937_64 rng(10);
        LabelPool pool = random_pool(5, 2, rng);
        auto g = build_similarity_graph(pool, 2);
        CHECK_THROWS_AS(spread_labels(pool, g), DataError);
    }
}

TEST_CASE("assign_pseudo_labels") {
    std::mt19937_64 rng(12);
    LabelPool pool = random_pool(5, 2, rng);

    SECTION("threshold gates everything") {
        std::vector<double> p1(5, 0.5);
        CHECK(assign_pseudo_labels(pool, p1, 5, 0.9) == 0);
        for (std::size_t i = 0; i < 5; ++i) CHECK(pool[i].label == -1);
    }

    SECTION("zero budget is a no-op") {
        std::vector<double> p1{0.99, 0.01, 0.95, 0.2, 0.5};
        CHECK(assign_pseudo_labels(pool, p1, 0, 0.8) == 0);
    }

    SECTION("assignments equal the argmax class, most confident first") {
        std::vector<double> p1{0.99, 0.01, 0.95, 0.2, 0.5};
        CHECK(assign_pseudo_labels(pool, p1, 2, 0.8) == 2);
        CHECK(pool[0].label == 1);   // conf 0.99
        CHECK(pool[1].label == 0);   // conf 0.99
        CHECK(pool[2].label == -1);  // conf 0.95, lost to the two 0.99s
        CHECK(pool[0].source == LabelSource::propagated);
    }
}

TEST_CASE("inject_labeled_transitions") {
    const std::size_t n = 3;
    SeriesTable table;
    table.timesteps = 12;
    table.features = 1;
    table.feature_names = {"a"};
    for (std::size_t i = 0; i < 12; ++i) {
        table.values.push_back(static_cast<double>(i));
        table.labels.push_back(0);
    }
    PenaltyArray pen;
    pen.n_steps = n;
    pen.p.assign(12, 0.0);
    for (std::size_t t = n - 1; t < 12; ++t) pen.p[t] = 0.1 * static_cast<double>(t);
    WindowEnv env(table, pen, n);

    auto windows = make_windows(table, n);
    LabelPool pool = LabelPool::from_windows(windows, n, 1);
    RewardConfig rcfg;

    SECTION("one transition per newly labeled window") {
        ReplayMemory mem(50);
        pool.oracle_label({2, 4, 6}, std::vector<int>(windows.size(), 1));
        CHECK(inject_labeled_transitions(pool, env, rcfg, 0.5, mem) == 3);
        CHECK(mem.size() == 3);
    }

    SECTION("injected rewards match recomputation against the label") {
        ReplayMemory mem(50);
        pool.oracle_label({3}, std::vector<int>(windows.size(), 1));
        inject_labeled_transitions(pool, env, rcfg, 0.25, mem);
        REQUIRE(mem.size() == 1);
        const std::size_t t = 3 + n - 1;
        const RewardVector expect = reward_vector(1, pen.p[t], 0.25, rcfg);
        CHECK(mem[0].r0 == expect.r0);
        CHECK(mem[0].r1 == expect.r1);
        CHECK(mem[0].action == 1);
        // state is the predecessor window, successor carries the label bit
        CHECK(mem[0].state(n - 1, 0) == table.value(t - 1, 0));
        CHECK(mem[0].next_state(n - 1, 0) == table.value(t, 0));
        CHECK(mem[0].next_state(0, 1) == 1.0);
    }

    SECTION("unchanged labels are not re-injected") {
        ReplayMemory mem(50);
        pool.oracle_label({2}, std::vector<int>(windows.size(), 1));
        CHECK(inject_labeled_transitions(pool, env, rcfg, 0.5, mem) == 1);
        CHECK(inject_labeled_transitions(pool, env, rcfg, 0.5, mem) == 0);
        CHECK(mem.size() == 1);
    }

    SECTION("window without a predecessor is skipped") {
        ReplayMemory mem(50);
        pool.oracle_label({0}, std::vector<int>(windows.size(), 1));
        CHECK(inject_labeled_transitions(pool, env, rcfg, 0.5, mem) == 0);
    }
}

TEST_CASE("active learner episode orchestration") {
    const std::size_t n = 3;
    std::mt19937_64 rng(21);
    SeriesTable table;
    table.timesteps = 60;
    table.features = 2;
    table.feature_names = {"a", "b"};
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t i = 0; i < 60; ++i) {
        table.values.push_back(g(rng));
        table.values.push_back(g(rng));
        table.labels.push_back(i >= 40 && i < 45 ? 1 : 0);
    }
    PenaltyArray pen;
    pen.n_steps = n;
    pen.p.assign(60, 0.1);
    WindowEnv env(table, pen, n);

    auto windows = make_windows(table, n);
    std::vector<int> truth(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) truth[i] = windows[i].label;

    ActiveConfig acfg;
    acfg.k_al = 4;
    acfg.k_lp = 6;
    acfg.oracle_cap = 0.1;  // 5 of 58 windows
    acfg.knn = 5;

    ActiveLearner learner(LabelPool::from_windows(windows, n, 2), truth, &env, RewardConfig{},
                          acfg);
    ReplayMemory mem(500);
    QNet qnet = build_qnet(3, 4, n, 5);

    SECTION("oracle budget is a hard cap across the whole run") {
        for (int e = 0; e < 6; ++e) learner.run_episode(qnet, 1.0, mem, e);
        CHECK(learner.pool().oracle_used() <= learner.oracle_budget());
        CHECK(learner.pool().oracle_used() == 5);  // cap 0.1 * 58 = 5
        CHECK(learner.audit().size() == 6);
        // first episode exhausts most of the budget: k_al=4, then 1 remains
        CHECK(learner.audit()[0].queried.size() == 4);
        CHECK(learner.audit()[1].queried.size() == 1);
        CHECK(learner.audit()[2].queried.empty());
    }

    SECTION("injections recorded in the audit trail") {
        learner.run_episode(qnet, 1.0, mem, 0);
        const auto& row = learner.audit()[0];
        CHECK(row.injected >= row.queried.size() - 1);  // window 0 may be skipped
        CHECK(mem.size() == row.injected);
    }
}
