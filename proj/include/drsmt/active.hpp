#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <vector>

#include "drsmt/agent.hpp"
#include "drsmt/env.hpp"
#include "drsmt/reward.hpp"

// ============================================================================
// Margin-based active learning with label spreading. Each episode: rank
// unlabeled windows by Q-margin, spend the oracle budget on the most
// uncertain, spread labels over the similarity graph for pseudo-labels, and
// inject transitions for everything newly labeled into the replay memory.
// ============================================================================

namespace drsmt {

inline double margin(double q0, double q1) { return std::abs(q0 - q1); }

inline double rbf_weight(const std::vector<double>& xi, const std::vector<double>& xj,
                         double sigma) {
    if (sigma <= 0.0) throw ConfigError("rbf_weight: sigma must be positive");
    if (xi.size() != xj.size())
        throw DimensionError("rbf_weight: dimension mismatch " + std::to_string(xi.size()) +
                             " vs " + std::to_string(xj.size()));
    double d2 = 0.0;
    for (std::size_t k = 0; k < xi.size(); ++k) {
        const double d = xi[k] - xj[k];
        d2 += d * d;
    }
    return std::exp(-d2 / (2.0 * sigma * sigma));
}

enum class LabelSource { none, given, oracle, propagated };

// Per-window labeling state over the training windows.
class LabelPool {
public:
    struct Entry {
        std::size_t index = 0;        // window position (window covers [index, index+n_steps))
        std::vector<double> x;        // flat standardized window
        int label = -1;               // -1 unlabeled
        LabelSource source = LabelSource::none;
        int injected_label = -1;      // last label pushed into replay, -1 if none
    };

    LabelPool(std::size_t n_steps, std::size_t d) : n_steps_(n_steps), d_(d) {}

    static LabelPool from_windows(const std::vector<Window>& windows, std::size_t n_steps,
                                  std::size_t d) {
        LabelPool pool(n_steps, d);
        for (std::size_t i = 0; i < windows.size(); ++i) {
            Entry e;
            e.index = windows[i].start;
            e.x = windows[i].flat;
            pool.entries_.push_back(std::move(e));
        }
        return pool;
    }

    std::size_t size() const { return entries_.size(); }
    Entry& operator[](std::size_t i) { return entries_[i]; }
    const Entry& operator[](std::size_t i) const { return entries_[i]; }
    std::size_t n_steps() const { return n_steps_; }
    std::size_t dims() const { return d_; }
    std::size_t oracle_used() const { return oracle_used_; }

    std::size_t unlabeled_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.label < 0;
        return n;
    }

    bool clamped(std::size_t i) const {
        return entries_[i].source == LabelSource::given ||
               entries_[i].source == LabelSource::oracle;
    }

    // Assigns ground-truth labels; already-oracle-labeled entries are no-ops
    // so the budget counter never double-counts.
    void oracle_label(const std::vector<std::size_t>& indices,
                      const std::vector<int>& ground_truth) {
        for (std::size_t i : indices) {
            if (i >= entries_.size())
                throw DataError("oracle_label: index " + std::to_string(i) + " out of range");
            Entry& e = entries_[i];
            if (e.source == LabelSource::oracle) continue;
            e.label = ground_truth[i];
            e.source = LabelSource::oracle;
            ++oracle_used_;
        }
    }

private:
    std::vector<Entry> entries_;
    std::size_t n_steps_;
    std::size_t d_;
    std::size_t oracle_used_ = 0;
};

// Q-margins for every entry (labeled ones too; callers filter). States are
// the 0-augmented windows.
inline std::vector<double> compute_margins(const LabelPool& pool, const QNet& qnet) {
    std::vector<double> margins(pool.size(), 0.0);
    const std::size_t chunk = 256;
    std::vector<Tensor2> states;
    std::vector<const Tensor2*> ptrs;
    for (std::size_t off = 0; off < pool.size(); off += chunk) {
        const std::size_t B = std::min(chunk, pool.size() - off);
        states.clear();
        ptrs.clear();
        for (std::size_t i = 0; i < B; ++i) {
            Tensor2 w(pool.n_steps(), pool.dims(), pool[off + i].x);
            states.push_back(augment(w, 0));
        }
        for (const auto& s : states) ptrs.push_back(&s);
        Tensor2 q = q_forward_batch(qnet, ptrs);
        for (std::size_t i = 0; i < B; ++i) margins[off + i] = margin(q(i, 0), q(i, 1));
    }
    return margins;
}

// The k unlabeled entries with smallest margin; ties break toward the lower
// index. Asking for more than exist returns all unlabeled, sorted by margin.
inline std::vector<std::size_t> select_uncertain(const LabelPool& pool,
                                                 const std::vector<double>& margins,
                                                 std::size_t k) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i].label < 0) candidates.push_back(i);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return margins[a] < margins[b]; });
    if (candidates.size() > k) candidates.resize(k);
    return candidates;
}

inline std::vector<std::size_t> select_uncertain(const LabelPool& pool, const QNet& qnet,
                                                 std::size_t k) {
    return select_uncertain(pool, compute_margins(pool, qnet), k);
}

// Symmetrized k-nearest-neighbor similarity graph over the pool features.
// Built once; the features never change during a run.
struct SimilarityGraph {
    std::vector<std::vector<std::size_t>> neighbors;
    std::vector<std::vector<double>> weights;
    double sigma = 0.0;
};

inline double median_pairwise_distance(const LabelPool& pool, std::size_t subsample = 512) {
    const std::size_t n = std::min(subsample, pool.size());
    if (n < 2) return 1.0;
    const std::size_t stride = std::max<std::size_t>(1, pool.size() / n);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pool.size() && idx.size() < n; i += stride) idx.push_back(i);
    std::vector<double> dists;
    dists.reserve(idx.size() * (idx.size() - 1) / 2);
    for (std::size_t a = 0; a < idx.size(); ++a) {
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
            double d2 = 0.0;
            const auto& xa = pool[idx[a]].x;
            const auto& xb = pool[idx[b]].x;
            for (std::size_t k = 0; k < xa.size(); ++k) {
                const double d = xa[k] - xb[k];
                d2 += d * d;
            }
            dists.push_back(std::sqrt(d2));
        }
    }
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    return std::max(dists[dists.size() / 2], 1e-12);
}

inline SimilarityGraph build_similarity_graph(const LabelPool& pool, std::size_t knn,
                                              double sigma = 0.0) {
    SimilarityGraph g;
    g.sigma = sigma > 0.0 ? sigma : median_pairwise_distance(pool);
    const std::size_t n = pool.size();
    const std::size_t k = std::min(knn, n > 0 ? n - 1 : 0);
    g.neighbors.assign(n, {});
    g.weights.assign(n, {});
    if (k == 0) return g;

    // directed kNN by squared distance, then symmetrize
    std::vector<std::vector<std::size_t>> knn_of(n);
    for (std::size_t i = 0; i < n; ++i) {
        // max-heap of (dist2, j) keeping the k smallest
        std::priority_queue<std::pair<double, std::size_t>> heap;
        const auto& xi = pool[i].x;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            const auto& xj = pool[j].x;
            for (std::size_t c = 0; c < xi.size(); ++c) {
                const double d = xi[c] - xj[c];
                d2 += d * d;
            }
            if (heap.size() < k) {
                heap.emplace(d2, j);
            } else if (d2 < heap.top().first) {
                heap.pop();
                heap.emplace(d2, j);
            }
        }
        while (!heap.empty()) {
            knn_of[i].push_back(heap.top().second);
            heap.pop();
        }
    }
    std::vector<std::vector<std::size_t>> merged(n);
    for (std::size_t i = 0; i < n; ++i) merged[i] = knn_of[i];
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i : knn_of[j]) merged[i].push_back(j);
    for (std::size_t i = 0; i < n; ++i) {
        std::sort(merged[i].begin(), merged[i].end());
        merged[i].erase(std::unique(merged[i].begin(), merged[i].end()), merged[i].end());
        for (std::size_t j : merged[i]) {
            g.neighbors[i].push_back(j);
            g.weights[i].push_back(rbf_weight(pool[i].x, pool[j].x, g.sigma));
        }
    }
    return g;
}

struct SpreadResult {
    std::vector<double> p1;  // P(y=1) per entry
    bool converged = false;
    int iterations = 0;
    double max_residual = 0.0;
};

// Fixed-point residual of the propagation equation at non-clamped nodes.
inline double spread_residual(const LabelPool& pool, const SimilarityGraph& g,
                              const std::vector<double>& p1) {
    double worst = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool.clamped(i) || g.neighbors[i].empty()) continue;
        double wsum = 0.0, acc = 0.0;
        for (std::size_t k = 0; k < g.neighbors[i].size(); ++k) {
            wsum += g.weights[i][k];
            acc += g.weights[i][k] * p1[g.neighbors[i][k]];
        }
        if (wsum <= 0.0) continue;
        worst = std::max(worst, std::abs(p1[i] - acc / wsum));
    }
    return worst;
}

// Iterative propagation: every non-clamped node's distribution becomes the
// weight-normalized average of its neighbors'; clamped (given/oracle) nodes
// stay fixed at their one-hot labels when clamp_alpha is 1.
inline SpreadResult spread_labels(const LabelPool& pool, const SimilarityGraph& g,
                                  int max_iterations = 200, double clamp_alpha = 1.0,
                                  double tol = 1e-6) {
    bool any_labeled = false;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool.clamped(i)) any_labeled = true;
    if (!any_labeled) throw DataError("spread_labels: no labeled entries to propagate from");

    SpreadResult res;
    res.p1.assign(pool.size(), 0.5);
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool.clamped(i)) res.p1[i] = static_cast<double>(pool[i].label);

    std::vector<double> next = res.p1;
    for (int it = 0; it < max_iterations; ++it) {
        double delta = 0.0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (g.neighbors[i].empty()) continue;
            double wsum = 0.0, acc = 0.0;
            for (std::size_t k = 0; k < g.neighbors[i].size(); ++k) {
                wsum += g.weights[i][k];
                acc += g.weights[i][k] * res.p1[g.neighbors[i][k]];
            }
            if (wsum <= 0.0) continue;
            const double avg = acc / wsum;
            double updated;
            if (pool.clamped(i)) {
                updated = clamp_alpha * static_cast<double>(pool[i].label) +
                          (1.0 - clamp_alpha) * avg;
            } else {
                updated = avg;
            }
            delta = std::max(delta, std::abs(updated - res.p1[i]));
            next[i] = updated;
        }
        res.p1.swap(next);
        res.iterations = it + 1;
        if (delta < tol) {
            res.converged = true;
            break;
        }
    }
    res.max_residual = spread_residual(pool, g, res.p1);
    return res;
}

// Gives the k_lp most confident unlabeled entries their propagated class,
// provided the confidence clears the threshold.
inline std::size_t assign_pseudo_labels(LabelPool& pool, const std::vector<double>& p1,
                                        std::size_t k_lp, double threshold) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].label >= 0) continue;
        const double conf = std::max(p1[i], 1.0 - p1[i]);
        if (conf >= threshold) candidates.push_back(i);
    }
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        return std::max(p1[a], 1.0 - p1[a]) > std::max(p1[b], 1.0 - p1[b]);
    });
    if (candidates.size() > k_lp) candidates.resize(k_lp);
    for (std::size_t i : candidates) {
        pool[i].label = p1[i] >= 0.5 ? 1 : 0;
        pool[i].source = LabelSource::propagated;
    }
    return candidates.size();
}

// Builds one transition per newly labeled window and pushes it into replay:
// the predecessor window is the state, the labeled class is the action taken,
// and the reward is scored against the assigned label. Windows without a
// predecessor are skipped; unchanged labels are never re-injected.
inline std::size_t inject_labeled_transitions(LabelPool& pool, const WindowEnv& env,
                                              const RewardConfig& reward_cfg, double lambda,
                                              ReplayMemory& memory) {
    std::size_t injected = 0;
    const std::size_t n = env.n_steps();
    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto& e = pool[i];
        if (e.label < 0 || e.injected_label == e.label) continue;
        if (e.index == 0) continue;  // no predecessor window
        const std::size_t t = e.index + n - 1;  // final timestep of this window
        const RewardVector r = reward_vector(e.label, env.penalty_at(t), lambda, reward_cfg);
        Transition tr;
        tr.state = augment(env.window_ending_at(t - 1), 0);
        tr.r0 = r.r0;
        tr.r1 = r.r1;
        tr.next_state = augment(env.window_ending_at(t), e.label);
        tr.done = t + 1 >= env.length();
        tr.action = e.label;
        memory.push(std::move(tr));
        e.injected_label = e.label;
        ++injected;
    }
    return injected;
}

// ----------------------------------------------------------------------------
// Per-episode orchestration used as the training loop's episode hook.
// ----------------------------------------------------------------------------

struct ActiveConfig {
    std::size_t k_al = 8;
    std::size_t k_lp = 16;
    double oracle_cap = 0.05;   // fraction of all windows the oracle may label
    double threshold = 0.8;     // pseudo-label confidence gate
    double sigma = 0.0;         // 0 = median pairwise-distance heuristic
    std::size_t knn = 10;
    int max_iters = 200;
    double clamp_alpha = 1.0;
    bool enabled = true;
};

struct ALAuditRow {
    int episode = 0;
    std::vector<std::size_t> queried;
    std::vector<double> margins;
    std::vector<int> labels;
    std::size_t pseudo_count = 0;
    std::size_t injected = 0;
    bool spread_converged = true;
};

class ActiveLearner {
public:
    ActiveLearner(LabelPool pool, std::vector<int> ground_truth, const WindowEnv* env,
                  RewardConfig reward_cfg, ActiveConfig cfg)
        : pool_(std::move(pool)),
          truth_(std::move(ground_truth)),
          env_(env),
          reward_cfg_(reward_cfg),
          cfg_(cfg) {
        graph_ = build_similarity_graph(pool_, cfg_.knn, cfg_.sigma);
        oracle_budget_ = static_cast<std::size_t>(cfg_.oracle_cap *
                                                  static_cast<double>(pool_.size()));
    }

    void run_episode(const QNet& qnet, double lambda, ReplayMemory& memory, int episode) {
        ALAuditRow row;
        row.episode = episode;

        const std::size_t remaining =
            oracle_budget_ > pool_.oracle_used() ? oracle_budget_ - pool_.oracle_used() : 0;
        const std::size_t k = std::min(cfg_.k_al, remaining);
        if (k > 0 && pool_.unlabeled_count() > 0) {
            auto margins = compute_margins(pool_, qnet);
            row.queried = select_uncertain(pool_, margins, k);
            for (std::size_t i : row.queried) row.margins.push_back(margins[i]);
            pool_.oracle_label(row.queried, truth_);
            for (std::size_t i : row.queried) row.labels.push_back(pool_[i].label);
        }

        bool any_clamped = false;
        for (std::size_t i = 0; i < pool_.size(); ++i)
            if (pool_.clamped(i)) any_clamped = true;
        if (any_clamped && cfg_.k_lp > 0) {
            auto spread = spread_labels(pool_, graph_, cfg_.max_iters, cfg_.clamp_alpha);
            row.spread_converged = spread.converged;
            row.pseudo_count = assign_pseudo_labels(pool_, spread.p1, cfg_.k_lp, cfg_.threshold);
        }

        row.injected = inject_labeled_transitions(pool_, *env_, reward_cfg_, lambda, memory);
        audit_.push_back(std::move(row));
    }

    const LabelPool& pool() const { return pool_; }
    const SimilarityGraph& graph() const { return graph_; }
    const std::vector<ALAuditRow>& audit() const { return audit_; }
    std::size_t oracle_budget() const { return oracle_budget_; }

private:
    LabelPool pool_;
    std::vector<int> truth_;
    const WindowEnv* env_;
    RewardConfig reward_cfg_;
    ActiveConfig cfg_;
    SimilarityGraph graph_;
    std::size_t oracle_budget_ = 0;
    std::vector<ALAuditRow> audit_;
};

}  // namespace drsmt
