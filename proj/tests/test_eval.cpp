#include <catch2/catch.hpp>

#include <random>

#include "drsmt/eval.hpp"
#include "oracles.hpp"

using namespace drsmt;

TEST_CASE("confusion") {
    SECTION("perfect prediction") {
        auto c = confusion({1, 0, 1}, {1, 0, 1});
        CHECK(c.tp == 2);
        CHECK(c.tn == 1);
        CHECK(c.fp == 0);
        CHECK(c.fn == 0);
    }

    SECTION("all false alarms") {
        auto c = confusion({1, 1}, {0, 0});
        CHECK(c.fp == 2);
    }

    SECTION("counts always partition the length") {
        std::mt19937_64 rng(3);
        std::uniform_int_distribution<int> bit(0, 1);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<int> p(17), t(17);
            for (int i = 0; i < 17; ++i) {
                p[i] = bit(rng);
                t[i] = bit(rng);
            }
            auto c = confusion(p, t);
            CHECK(c.tp + c.tn + c.fp + c.fn == 17);
        }
    }

    SECTION("length mismatch") {
        CHECK_THROWS_AS(confusion({1}, {1, 0}), EvalError);
    }
}

TEST_CASE("precision_recall_f1") {
    SECTION("perfect") {
        auto m = precision_recall_f1({2, 0, 0, 0});
        CHECK(m.precision == 1.0);
        CHECK(m.recall == 1.0);
        CHECK(m.f1 == 1.0);
    }

    SECTION("degenerate zero-denominator cases return zero") {
        auto m = precision_recall_f1({0, 0, 0, 5});
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);
        CHECK(m.f1 == 0.0);
    }

    SECTION("direct evaluation") {
        auto m = precision_recall_f1({1, 0, 1, 3});
        CHECK(m.precision == Approx(0.5));
        CHECK(m.recall == Approx(0.25));
        CHECK(m.f1 == Approx(1.0 / 3.0));
    }

    SECTION("exhaustive agreement with the brute-force oracle up to length 8") {
        for (int n = 1; n <= 8; ++n) {
            for (long pm = 0; pm < (1l << n); ++pm) {
                for (long tm = 0; tm < (1l << n); ++tm) {
                    std::vector<int> p(n), t(n);
                    for (int i = 0; i < n; ++i) {
                        p[i] = (pm >> i) & 1;
                        t[i] = (tm >> i) & 1;
                    }
                    auto mine = confusion(p, t);
                    auto ref = oracles::confusion_bruteforce(p, t);
                    REQUIRE(mine.tp == ref.tp);
                    REQUIRE(mine.tn == ref.tn);
                    REQUIRE(mine.fp == ref.fp);
                    REQUIRE(mine.fn == ref.fn);
                }
            }
        }
    }
}

TEST_CASE("aupr") {
    SECTION("perfect ranking scores one") {
        auto a = aupr({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0});
        REQUIRE(a.has_value());
        CHECK(*a == Approx(1.0));
    }

    SECTION("constant scores give the positive rate") {
        std::vector<double> scores(20, 0.5);
        std::vector<int> truths(20, 0);
        for (int i = 0; i < 7; ++i) truths[i] = 1;
        auto a = aupr(scores, truths);
        REQUIRE(a.has_value());
        CHECK(*a == Approx(0.35).margin(1e-9));
    }

    SECTION("random instances match the brute-force sweep") {
        std::mt19937_64 rng(19);
        std::uniform_real_distribution<double> sd(-2.0, 2.0);
        std::uniform_int_distribution<int> bit(0, 1);
        std::uniform_int_distribution<int> nd(2, 20);
        std::uniform_int_distribution<int> dup(0, 3);
        for (int trial = 0; trial < 300; ++trial) {
            const int n = nd(rng);
            std::vector<double> scores(n);
            std::vector<int> truths(n);
            bool any_pos = false;
            for (int i = 0; i < n; ++i) {
                // duplicate scores sometimes, ties matter
                scores[i] = dup(rng) == 0 && i > 0 ? scores[i - 1] : sd(rng);
                truths[i] = bit(rng);
                any_pos |= truths[i] == 1;
            }
            if (!any_pos) truths[0] = 1;
            auto a = aupr(scores, truths);
            REQUIRE(a.has_value());
            CHECK(*a == Approx(oracles::aupr_bruteforce(scores, truths)).margin(1e-9));
        }
    }

    SECTION("invariant under strictly monotone transforms") {
        std::mt19937_64 rng(23);
        std::uniform_real_distribution<double> sd(-3.0, 3.0);
        std::uniform_int_distribution<int> bit(0, 1);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> scores(15);
            std::vector<int> truths(15);
            for (int i = 0; i < 15; ++i) {
                scores[i] = sd(rng);
                truths[i] = bit(rng);
            }
            truths[3] = 1;
            std::vector<double> warped(15);
            for (int i = 0; i < 15; ++i) warped[i] = std::exp(0.5 * scores[i]) + 2.0;
            CHECK(*aupr(scores, truths) == Approx(*aupr(warped, truths)).epsilon(1e-12));
        }
    }

    SECTION("no positives is undefined") {
        CHECK_FALSE(aupr({0.1, 0.2}, {0, 0}).has_value());
    }
}

TEST_CASE("validate") {
    // deterministic series, labels in a block
    auto make_table = [](std::size_t T) {
        SeriesTable t;
        t.timesteps = T;
        t.features = 2;
        t.feature_names = {"a", "b"};
        std::mt19937_64 rng(31);
        std::normal_distribution<double> g(0.0, 1.0);
        for (std::size_t i = 0; i < T; ++i) {
            t.values.push_back(g(rng));
            t.values.push_back(g(rng));
            t.labels.push_back(i % 17 == 0 ? 1 : 0);
        }
        return t;
    };

    const std::size_t n = 4;
    auto table = make_table(120);
    PenaltyArray pen;
    pen.n_steps = n;
    pen.p.assign(120, 0.0);

    SECTION("zero network predicts all normal: recall zero") {
        QNet net = build_qnet(3, 4, n, 0);
        for (auto& p : net.params) p.value.fill(0.0);
        auto report = validate(table, pen, net, 3, n);
        for (const auto& s : report.slices) {
            for (int p : s.predictions) CHECK(p == 0);
            CHECK(s.metrics.recall == 0.0);
        }
    }

    SECTION("K=1 aggregate equals the single slice") {
        QNet net = build_qnet(3, 4, n, 7);
        auto report = validate(table, pen, net, 1, n);
        REQUIRE(report.slices.size() == 1);
        CHECK(report.mean_f1 == report.slices[0].metrics.f1);
        if (report.slices[0].aupr_defined)
            CHECK(report.mean_aupr == report.slices[0].aupr_value);
        CHECK(report.std_aupr == 0.0);
    }

    SECTION("aggregate mean F1 is the arithmetic mean of slices") {
        QNet net = build_qnet(3, 4, n, 9);
        auto report = validate(table, pen, net, 4, n);
        double acc = 0.0;
        for (const auto& s : report.slices) acc += s.metrics.f1;
        CHECK(report.mean_f1 == Approx(acc / 4.0).margin(1e-12));
    }

    SECTION("prediction count equals the slice decision count") {
        QNet net = build_qnet(3, 4, n, 11);
        auto report = validate(table, pen, net, 5, n);
        auto slices = kfold_slices(table, 5, n + 1);
        REQUIRE(report.slices.size() == 5);
        for (std::size_t k = 0; k < 5; ++k)
            CHECK(report.slices[k].predictions.size() == slices[k].timesteps - n);
    }
}
