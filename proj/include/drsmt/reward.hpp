#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "drsmt/tensor.hpp"

namespace drsmt {

// Asymmetric classification payoffs. Detecting a true anomaly pays most,
// missing one costs most.
struct RewardConfig {
    double tp_val = 10.0;
    double tn_val = 1.0;
    double fp_val = -1.0;
    double fn_val = -10.0;

    // How the reconstruction penalty enters the reward vector:
    //   additive_both     — lambda*p added to both actions' rewards
    //   subtract_on_normal — lambda*p subtracted from the "normal" action only
    enum class PenaltyMode { additive_both, subtract_on_normal };
    PenaltyMode penalty_mode = PenaltyMode::additive_both;

    bool valid() const { return tp_val > tn_val && tn_val > 0.0 && 0.0 > fp_val && fp_val > fn_val; }
};

inline double classification_reward(int action, int truth, const RewardConfig& cfg = {}) {
    if (action == 1 && truth == 1) return cfg.tp_val;
    if (action == 0 && truth == 0) return cfg.tn_val;
    if (action == 1 && truth == 0) return cfg.fp_val;
    return cfg.fn_val;
}

struct RewardVector {
    double r0 = 0.0;  // reward for predicting normal
    double r1 = 0.0;  // reward for predicting anomalous

    double operator[](int a) const { return a == 0 ? r0 : r1; }
};

inline RewardVector reward_vector(int truth, double penalty, double lambda,
                                  const RewardConfig& cfg = {}) {
    RewardVector r;
    r.r0 = classification_reward(0, truth, cfg);
    r.r1 = classification_reward(1, truth, cfg);
    switch (cfg.penalty_mode) {
        case RewardConfig::PenaltyMode::additive_both:
            r.r0 += lambda * penalty;
            r.r1 += lambda * penalty;
            break;
        case RewardConfig::PenaltyMode::subtract_on_normal:
            r.r0 -= lambda * penalty;
            break;
    }
    return r;
}

// Proportional controller for the penalty coefficient. Updated once per
// episode from the total episode reward; always clipped to its bounds.
struct LambdaState {
    double lambda = 1.0;
    double alpha = 0.01;
    double r_target = 0.0;
    double lambda_min = 0.0;
    double lambda_max = 10.0;
    std::vector<double> history;  // per-episode trace

    LambdaState() = default;
    LambdaState(double l0, double a, double target, double lmin, double lmax)
        : lambda(l0), alpha(a), r_target(target), lambda_min(lmin), lambda_max(lmax) {}
};

inline double update_lambda(LambdaState& state, double r_episode) {
    const double raw = state.lambda + state.alpha * (state.r_target - r_episode);
    state.lambda = std::clamp(raw, state.lambda_min, state.lambda_max);
    state.history.push_back(state.lambda);
    return state.lambda;
}

}  // namespace drsmt
