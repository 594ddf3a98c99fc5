#pragma once

#include <cmath>
#include <vector>

#include "drsmt/autodiff.hpp"

namespace drsmt {

// Adaptive-moment optimizer state: one first/second moment buffer per
// parameter, a shared step counter, and the learning rate.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Tensor2> m;  // first moments, shaped like the params
    std::vector<Tensor2> v;  // second moments

    explicit AdamState(const ParamSet& params, double learning_rate = 1e-3) : lr(learning_rate) {
        for (const auto& p : params) {
            m.push_back(Tensor2::zeros(p.value.rows, p.value.cols));
            v.push_back(Tensor2::zeros(p.value.rows, p.value.cols));
        }
    }
};

// One bias-corrected update from the gradients currently in `params`.
// Gradients are left untouched; the next backward() re-zeroes them.
inline void adam_step(ParamSet& params, AdamState& opt) {
    if (opt.m.size() != params.size())
        throw DimensionError("adam_step: optimizer state does not match parameter set");
    opt.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = params[static_cast<int>(i)];
        Tensor2& m = opt.m[i];
        Tensor2& v = opt.v[i];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const double g = p.grad.v[k];
            m.v[k] = opt.beta1 * m.v[k] + (1.0 - opt.beta1) * g;
            v.v[k] = opt.beta2 * v.v[k] + (1.0 - opt.beta2) * g * g;
            const double mhat = m.v[k] / bc1;
            const double vhat = v.v[k] / bc2;
            p.value.v[k] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
    }
}

}  // namespace drsmt
