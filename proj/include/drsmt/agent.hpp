#pragma once

#include <functional>
#include <random>
#include <vector>

#include "drsmt/autodiff.hpp"
#include "drsmt/env.hpp"
#include "drsmt/optim.hpp"
#include "drsmt/reward.hpp"

// ============================================================================
// LSTM Q-network, epsilon-greedy policy, ring-buffer replay, warm-up seeding,
// Bellman regression against a periodically synced target network, and the
// per-episode training loop.
// ============================================================================

namespace drsmt {

struct Transition {
    Tensor2 state;       // n_steps x (d+1): state the action was chosen from
    double r0 = 0.0;     // reward vector (both actions' rewards are known)
    double r1 = 0.0;
    Tensor2 next_state;  // successor augmented with the taken action
    bool done = false;
    int action = 0;
};

class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity) : cap_(capacity) {
        if (capacity == 0) throw ConfigError("ReplayMemory: capacity must be positive");
        buf_.reserve(capacity);
    }

    void push(Transition t) {
        if (buf_.size() < cap_) {
            buf_.push_back(std::move(t));
        } else {
            buf_[next_] = std::move(t);
        }
        next_ = (next_ + 1) % cap_;
        ++inserted_;
    }

    std::size_t size() const { return buf_.size(); }
    std::size_t capacity() const { return cap_; }
    std::uint64_t inserted() const { return inserted_; }
    const Transition& operator[](std::size_t i) const { return buf_[i]; }

    std::vector<const Transition*> sample(std::size_t batch, std::mt19937_64& rng) const {
        if (buf_.empty()) throw TrainingError("ReplayMemory::sample: empty buffer");
        std::uniform_int_distribution<std::size_t> pick(0, buf_.size() - 1);
        std::vector<const Transition*> out;
        out.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) out.push_back(&buf_[pick(rng)]);
        return out;
    }

private:
    std::vector<Transition> buf_;
    std::size_t cap_;
    std::size_t next_ = 0;
    std::uint64_t inserted_ = 0;
};

struct AgentConfig {
    double gamma = 0.99;
    std::size_t hidden = 64;
    std::size_t batch = 64;
    std::size_t target_sync = 500;     // sync every C optimizer steps
    std::size_t replay_capacity = 10000;
    std::size_t warmup = 1000;
    std::string warmup_strategy = "random";  // random | outlier_guided
    double lr = 1e-3;
    int episodes = 30;
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_decay_fraction = 0.5;   // fraction of total steps spent decaying
    std::uint64_t seed = 0;
    bool record_epsilon_trace = false;
};

struct QNet {
    std::size_t input = 0;   // d+1 after augmentation
    std::size_t hidden = 0;
    std::size_t n_steps = 0;
    ParamSet params;
    LstmCell cell;
    int head_w = -1, head_b = -1;
};

inline QNet build_qnet(std::size_t input, std::size_t hidden, std::size_t n_steps,
                       std::uint64_t seed) {
    QNet net;
    net.input = input;
    net.hidden = hidden;
    net.n_steps = n_steps;
    std::mt19937_64 rng(seed);
    auto fan_in = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
    net.cell.input = input;
    net.cell.hidden = hidden;
    net.cell.wx = net.params.add("lstm.wx", Tensor2::uniform(input, 4 * hidden, fan_in(input), rng));
    net.cell.wh = net.params.add("lstm.wh", Tensor2::uniform(hidden, 4 * hidden, fan_in(hidden), rng));
    net.cell.b = net.params.add("lstm.b", Tensor2::zeros(1, 4 * hidden));
    net.head_w = net.params.add("head.w", Tensor2::uniform(hidden, 2, fan_in(hidden), rng));
    net.head_b = net.params.add("head.b", Tensor2::zeros(1, 2));
    return net;
}

inline bool same_architecture(const QNet& a, const QNet& b) {
    return a.input == b.input && a.hidden == b.hidden && a.n_steps == b.n_steps;
}

// Runs the LSTM across the window rows and the dense head on the final
// hidden state. Rows of the result are (Q(s,0), Q(s,1)) per batch entry.
inline Tensor2 q_forward_batch(const QNet& net, const std::vector<const Tensor2*>& states) {
    const std::size_t B = states.size();
    for (const Tensor2* s : states)
        if (s->rows != net.n_steps || s->cols != net.input)
            throw DimensionError("q_forward: state " + s->shape_str() + ", expected " +
                                 Tensor2::shape_str(net.n_steps, net.input));
    Tensor2 h = Tensor2::zeros(B, net.hidden);
    Tensor2 c = Tensor2::zeros(B, net.hidden);
    Tensor2 x_t(B, net.input);
    for (std::size_t t = 0; t < net.n_steps; ++t) {
        for (std::size_t i = 0; i < B; ++i)
            std::copy(states[i]->row(t), states[i]->row(t) + net.input, x_t.row(i));
        lstm_eval_step(net.params, net.cell, x_t, h, c);
    }
    return dense_eval(net.params[net.head_w], net.params[net.head_b], h, Act::identity);
}

inline std::pair<double, double> q_forward(const QNet& net, const Tensor2& state) {
    Tensor2 q = q_forward_batch(net, {&state});
    return {q(0, 0), q(0, 1)};
}

// Taped batch forward for training.
inline Tape::Id q_forward_tape(Tape& tape, QNet& net, const std::vector<const Tensor2*>& states) {
    const std::size_t B = states.size();
    Tape::Id h = tape.constant(Tensor2::zeros(B, net.hidden));
    Tape::Id c = tape.constant(Tensor2::zeros(B, net.hidden));
    Tensor2 x_t(B, net.input);
    for (std::size_t t = 0; t < net.n_steps; ++t) {
        for (std::size_t i = 0; i < B; ++i)
            std::copy(states[i]->row(t), states[i]->row(t) + net.input, x_t.row(i));
        auto [h2, c2] = lstm_step(tape, net.params, net.cell, tape.constant(x_t), h, c);
        h = h2;
        c = c2;
    }
    return dense_forward(tape, net.params[net.head_w], net.params[net.head_b], h, Act::identity);
}

// Greedy with probability 1-eps, uniform otherwise. Ties break toward 0
// (predict normal), biasing against false alarms.
inline int select_action(double q0, double q1, double epsilon, std::mt19937_64& rng) {
    if (epsilon < 0.0 || epsilon > 1.0)
        throw ConfigError("select_action: epsilon must be in [0,1]");
    if (epsilon > 0.0) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(rng) < epsilon) {
            std::uniform_int_distribution<int> coin(0, 1);
            return coin(rng);
        }
    }
    return q1 > q0 ? 1 : 0;
}

inline double epsilon_at(const AgentConfig& cfg, std::size_t step, std::size_t total_steps) {
    const double decay_steps = cfg.eps_decay_fraction * static_cast<double>(total_steps);
    if (decay_steps <= 0.0) return cfg.eps_end;
    const double frac = std::min(1.0, static_cast<double>(step) / decay_steps);
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
}

inline void sync_target(const QNet& net, QNet& target) {
    if (!same_architecture(net, target))
        throw DimensionError("sync_target: architecture mismatch");
    target.params.copy_values_from(net.params);
}

// Bellman targets for one transition: bootstrap both heads from the observed
// successor (the taken action's next state); terminal transitions use the
// raw reward vector.
inline std::pair<double, double> bellman_target(const Transition& tr, const QNet& target_net,
                                                double gamma) {
    if (tr.done) return {tr.r0, tr.r1};
    auto [q0, q1] = q_forward(target_net, tr.next_state);
    const double boot = gamma * std::max(q0, q1);
    return {tr.r0 + boot, tr.r1 + boot};
}

// One minibatch regression step: both Q heads toward their Bellman targets.
inline double train_step(QNet& net, const QNet& target_net,
                         const std::vector<const Transition*>& batch, AdamState& opt,
                         double gamma, Tape& tape) {
    if (batch.empty()) throw TrainingError("train_step: empty batch");
    const std::size_t B = batch.size();

    std::vector<const Tensor2*> next_states;
    next_states.reserve(B);
    for (const Transition* t : batch) next_states.push_back(&t->next_state);
    Tensor2 next_q = q_forward_batch(target_net, next_states);

    Tensor2 targets(B, 2);
    for (std::size_t i = 0; i < B; ++i) {
        const Transition& tr = *batch[i];
        const double boot =
            tr.done ? 0.0 : gamma * std::max(next_q(i, 0), next_q(i, 1));
        targets(i, 0) = tr.r0 + boot;
        targets(i, 1) = tr.r1 + boot;
    }

    std::vector<const Tensor2*> states;
    states.reserve(B);
    for (const Transition* t : batch) states.push_back(&t->state);

    tape.reset();
    Tape::Id preds = q_forward_tape(tape, net, states);
    Tape::Id loss = tape.mse(preds, tape.constant(targets));
    const double loss_val = tape.val(loss).v[0];
    if (!std::isfinite(loss_val))
        throw TrainingError("train_step: non-finite loss; inspect learning rate and rewards");
    tape.backward(loss);
    adam_step(net.params, opt);
    return loss_val;
}

namespace detail {

// Robust per-timestep outlier score: per-feature |x - median| / (MAD/0.6745),
// maxed over features.
inline std::vector<double> robust_z_scores(const SeriesTable& table) {
    std::vector<double> z(table.timesteps, 0.0);
    for (std::size_t j = 0; j < table.features; ++j) {
        std::vector<double> col(table.timesteps);
        for (std::size_t t = 0; t < table.timesteps; ++t) col[t] = table.value(t, j);
        std::vector<double> sorted = col;
        std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
        const double med = sorted[sorted.size() / 2];
        std::vector<double> dev(table.timesteps);
        for (std::size_t t = 0; t < table.timesteps; ++t) dev[t] = std::abs(col[t] - med);
        std::vector<double> dev_sorted = dev;
        std::nth_element(dev_sorted.begin(), dev_sorted.begin() + dev_sorted.size() / 2,
                         dev_sorted.end());
        const double mad = std::max(dev_sorted[dev_sorted.size() / 2], 1e-12);
        const double scale = mad / 0.6745;
        for (std::size_t t = 0; t < table.timesteps; ++t)
            z[t] = std::max(z[t], dev[t] / scale);
    }
    return z;
}

}  // namespace detail

// Fills the replay memory to target_size with random-action rollouts.
// outlier_guided oversamples episode starts near robust-z outliers.
inline void warm_up(WindowEnv& env, ReplayMemory& memory, std::size_t target_size,
                    const std::string& strategy, double lambda, const RewardConfig& reward_cfg,
                    std::mt19937_64& rng) {
    std::uniform_int_distribution<int> coin(0, 1);

    std::vector<double> start_weights;
    if (strategy == "outlier_guided") {
        auto z = detail::robust_z_scores(env.table());
        const std::size_t lo = env.n_steps() - 1;
        const std::size_t hi = env.length() - 2;
        start_weights.assign(hi - lo + 1, 1.0);
        for (std::size_t t = 0; t < z.size(); ++t) {
            if (z[t] <= 3.0) continue;
            const std::size_t from = t > env.n_steps() ? t - env.n_steps() : 0;
            const std::size_t to = std::min(hi, t + env.n_steps());
            for (std::size_t s = std::max(from, lo); s <= to; ++s) start_weights[s - lo] = 10.0;
        }
    } else if (strategy != "random") {
        throw ConfigError("warm_up: unknown seeding strategy '" + strategy + "'");
    }

    while (memory.size() < target_size) {
        EnvState state;
        if (start_weights.empty()) {
            state = env.reset();
        } else {
            std::discrete_distribution<std::size_t> pick(start_weights.begin(),
                                                         start_weights.end());
            state = env.reset_at(env.n_steps() - 1 + pick(rng));
        }
        Tensor2 s = state.s0;
        int rolled = 0;
        while (!env.done() && memory.size() < target_size &&
               (start_weights.empty() || rolled < 32)) {
            const int a = coin(rng);
            StepOutcome out = env.step(a);
            const RewardVector r =
                reward_vector(out.y, env.penalty_at(env.cursor()), lambda, reward_cfg);
            Transition tr;
            tr.state = s;
            tr.r0 = r.r0;
            tr.r1 = r.r1;
            tr.next_state = a == 0 ? out.s0_next : out.s1_next;
            tr.done = out.done;
            tr.action = a;
            memory.push(std::move(tr));
            s = a == 0 ? out.s0_next : out.s1_next;
            ++rolled;
        }
    }
}

struct EpisodeLog {
    int episode = 0;
    double total_reward = 0.0;
    double lambda = 0.0;
    double epsilon = 0.0;
    double mean_loss = 0.0;
    double train_f1 = 0.0;  // F1 of the rollout's own decisions
};

struct TrainResult {
    QNet qnet;
    std::vector<EpisodeLog> log;
    std::vector<double> epsilon_trace;
    std::vector<std::size_t> sync_steps;  // optimizer steps at which the target synced
};

// Hook invoked before each episode's rollout; the active-learning module
// plugs in here to label windows and inject transitions.
using EpisodeHook = std::function<void(const QNet&, double lambda, ReplayMemory&, int episode)>;

// The main training loop: per episode, run the hook, roll out epsilon-greedy
// across the whole series with per-step minibatch updates and periodic target
// syncs, then update lambda from the episode reward.
inline TrainResult run_training(WindowEnv& env, ReplayMemory& memory, LambdaState& lambda_state,
                                bool adapt_lambda, const RewardConfig& reward_cfg,
                                const AgentConfig& cfg, const EpisodeHook& episode_hook = {}) {
    TrainResult result;
    result.qnet = build_qnet(env.feature_count() + 1, cfg.hidden, env.n_steps(), cfg.seed);
    QNet target = build_qnet(env.feature_count() + 1, cfg.hidden, env.n_steps(), cfg.seed);
    sync_target(result.qnet, target);

    AdamState opt(result.qnet.params, cfg.lr);
    std::mt19937_64 rng(cfg.seed + 0x9e3779b97f4a7c15ull);
    Tape tape;

    const std::size_t total_steps =
        static_cast<std::size_t>(cfg.episodes) * env.decisions();
    std::size_t step = 0;

    for (int episode = 0; episode < cfg.episodes; ++episode) {
        if (episode_hook) episode_hook(result.qnet, lambda_state.lambda, memory, episode);

        EnvState st = env.reset();
        Tensor2 s = st.s0;
        double total_reward = 0.0;
        double loss_acc = 0.0;
        std::size_t loss_n = 0;
        long tp = 0, fp = 0, fn = 0;
        double eps = cfg.eps_end;

        while (!env.done()) {
            eps = epsilon_at(cfg, step, total_steps);
            if (cfg.record_epsilon_trace) result.epsilon_trace.push_back(eps);
            auto [q0, q1] = q_forward(result.qnet, s);
            const int a = select_action(q0, q1, eps, rng);
            StepOutcome out = env.step(a);
            const RewardVector r =
                reward_vector(out.y, env.penalty_at(env.cursor()), lambda_state.lambda,
                              reward_cfg);

            Transition tr;
            tr.state = s;
            tr.r0 = r.r0;
            tr.r1 = r.r1;
            tr.next_state = a == 0 ? out.s0_next : out.s1_next;
            tr.done = out.done;
            tr.action = a;
            memory.push(std::move(tr));

            auto batch = memory.sample(cfg.batch, rng);
            loss_acc += train_step(result.qnet, target, batch, opt, cfg.gamma, tape);
            ++loss_n;
            ++step;
            if (step % cfg.target_sync == 0) {
                sync_target(result.qnet, target);
                result.sync_steps.push_back(step);
            }

            if (a == 1 && out.y == 1) ++tp;
            if (a == 1 && out.y == 0) ++fp;
            if (a == 0 && out.y == 1) ++fn;
            total_reward += r[a];
            s = a == 0 ? out.s0_next : out.s1_next;
        }

        if (adapt_lambda)
            update_lambda(lambda_state, total_reward);
        else
            lambda_state.history.push_back(lambda_state.lambda);

        EpisodeLog row;
        row.episode = episode;
        row.total_reward = total_reward;
        row.lambda = lambda_state.lambda;
        row.epsilon = eps;
        row.mean_loss = loss_n ? loss_acc / static_cast<double>(loss_n) : 0.0;
        const double prec = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double rec = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
        row.train_f1 = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        result.log.push_back(row);
    }
    return result;
}

}  // namespace drsmt
