#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "drsmt/agent.hpp"
#include "drsmt/data.hpp"
#include "drsmt/env.hpp"

// ============================================================================
// Confusion-matrix metrics, area under the precision-recall curve, and
// greedy K-fold validation episodes.
// ============================================================================

namespace drsmt {

struct Confusion {
    long tp = 0, tn = 0, fp = 0, fn = 0;
};

inline Confusion confusion(const std::vector<int>& preds, const std::vector<int>& truths) {
    if (preds.size() != truths.size())
        throw EvalError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(truths.size()) + " truths");
    Confusion c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == 1 && truths[i] == 1) ++c.tp;
        if (preds[i] == 0 && truths[i] == 0) ++c.tn;
        if (preds[i] == 1 && truths[i] == 0) ++c.fp;
        if (preds[i] == 0 && truths[i] == 1) ++c.fn;
    }
    return c;
}

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Zero denominators yield 0 rather than NaN so aggregates stay defined.
inline Prf precision_recall_f1(const Confusion& c) {
    Prf m;
    m.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
    m.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

struct PrCurve {
    std::vector<std::pair<double, double>> points;  // (recall, precision)
    double area = 0.0;
};

// Step-wise area with right-continuous precision: thresholds sweep the
// distinct scores from high to low, tied scores grouped.
inline std::optional<PrCurve> aupr_curve(const std::vector<double>& scores,
                                         const std::vector<int>& truths) {
    if (scores.size() != truths.size())
        throw EvalError("aupr: " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(truths.size()) + " truths");
    long total_pos = 0;
    for (int t : truths) total_pos += t;
    if (total_pos == 0) return std::nullopt;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    PrCurve curve;
    long tp = 0, fp = 0;
    double prev_recall = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            if (truths[order[i]] == 1)
                ++tp;
            else
                ++fp;
            ++i;
        }
        const double precision = static_cast<double>(tp) / (tp + fp);
        const double recall = static_cast<double>(tp) / total_pos;
        curve.points.emplace_back(recall, precision);
        curve.area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return curve;
}

inline std::optional<double> aupr(const std::vector<double>& scores,
                                  const std::vector<int>& truths) {
    auto curve = aupr_curve(scores, truths);
    if (!curve) return std::nullopt;
    return curve->area;
}

struct SliceReport {
    std::size_t index = 0;
    Prf metrics;
    double aupr_value = 0.0;
    bool aupr_defined = false;
    std::vector<int> predictions;
    std::vector<int> truths;
    std::vector<double> scores;           // Q(s,1) - Q(s,0) per decision
    std::vector<std::size_t> timesteps;   // slice-local timestep per decision
    std::vector<double> value0;           // first feature per decision (plot data)
    PrCurve pr;
};

struct EvalReport {
    std::vector<SliceReport> slices;
    double mean_f1 = 0.0;
    double mean_aupr = 0.0;
    double std_aupr = 0.0;
};

// Greedy rollout over one environment slice; the anomaly score is the Q-value
// margin of the taken decision's state.
inline SliceReport run_greedy_episode(WindowEnv& env, const QNet& qnet) {
    SliceReport rep;
    EnvState st = env.reset();
    Tensor2 s = st.s0;
    while (!env.done()) {
        auto [q0, q1] = q_forward(qnet, s);
        const int a = q1 > q0 ? 1 : 0;  // epsilon = 0; ties predict normal
        StepOutcome out = env.step(a);
        rep.predictions.push_back(a);
        rep.truths.push_back(out.y);
        rep.scores.push_back(q1 - q0);
        rep.timesteps.push_back(env.cursor());
        rep.value0.push_back(env.table().value(env.cursor(), 0));
        s = a == 0 ? out.s0_next : out.s1_next;
    }
    rep.metrics = precision_recall_f1(confusion(rep.predictions, rep.truths));
    if (auto curve = aupr_curve(rep.scores, rep.truths)) {
        rep.aupr_defined = true;
        rep.aupr_value = curve->area;
        rep.pr = std::move(*curve);
    }
    return rep;
}

// Splits the series into K contiguous slices and runs one greedy episode per
// slice. Aggregates are the arithmetic mean of F1 and mean/std of the defined
// slice AU-PRs (sample std, 0 when fewer than two).
inline EvalReport validate(const SeriesTable& table, const PenaltyArray& penalty,
                           const QNet& qnet, std::size_t K, std::size_t n_steps) {
    EvalReport report;
    auto slices = kfold_slices(table, K, n_steps + 1);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < slices.size(); ++k) {
        WindowEnv env(slices[k], penalty.slice(offset, slices[k].timesteps), n_steps);
        SliceReport rep = run_greedy_episode(env, qnet);
        rep.index = k;
        report.slices.push_back(std::move(rep));
        offset += slices[k].timesteps;
    }

    double f1_acc = 0.0;
    std::vector<double> auprs;
    for (const auto& s : report.slices) {
        f1_acc += s.metrics.f1;
        if (s.aupr_defined) auprs.push_back(s.aupr_value);
    }
    report.mean_f1 = f1_acc / static_cast<double>(report.slices.size());
    if (!auprs.empty()) {
        report.mean_aupr = std::accumulate(auprs.begin(), auprs.end(), 0.0) /
                           static_cast<double>(auprs.size());
        if (auprs.size() > 1) {
            double acc = 0.0;
            for (double a : auprs) acc += (a - report.mean_aupr) * (a - report.mean_aupr);
            report.std_aupr = std::sqrt(acc / static_cast<double>(auprs.size() - 1));
        }
    }
    return report;
}

}  // namespace drsmt
