#pragma once

#include <random>
#include <vector>

#include "drsmt/autodiff.hpp"
#include "drsmt/data.hpp"
#include "drsmt/optim.hpp"

// ============================================================================
// Variational autoencoder over flattened windows. Trained on normal windows
// only; its reconstruction error over the whole series becomes the intrinsic
// reward for the agent.
// ============================================================================

namespace drsmt {

struct VaeConfig {
    std::size_t latent = 8;
    std::size_t hidden = 64;
    int epochs = 50;
    std::size_t batch = 128;
    double lr = 1e-3;
    double beta = 1.0;  // weight on the KL term
    std::uint64_t seed = 0;
};

struct VaeModel {
    std::size_t n_steps = 0;
    std::size_t d = 0;
    std::size_t input_width = 0;
    VaeConfig config;
    ParamSet params;
    int enc_w1 = -1, enc_b1 = -1;  // input -> hidden, softplus
    int enc_w2 = -1, enc_b2 = -1;  // hidden -> 2L (mu | logvar)
    int dec_w1 = -1, dec_b1 = -1;  // L -> hidden, softplus
    int dec_w2 = -1, dec_b2 = -1;  // hidden -> input
};

// Per-timestep reconstruction penalties. Entry t is the error of the window
// ending at t; the first n_steps-1 entries are zero by construction.
struct PenaltyArray {
    std::size_t n_steps = 0;
    std::vector<double> p;

    double operator[](std::size_t t) const { return p[t]; }
    std::size_t size() const { return p.size(); }

    PenaltyArray slice(std::size_t start, std::size_t len) const {
        PenaltyArray out;
        out.n_steps = n_steps;
        out.p.assign(len, 0.0);
        for (std::size_t t = n_steps - 1; t < len; ++t) out.p[t] = p[start + t];
        return out;
    }
};

inline VaeModel build_vae(std::size_t n_steps, std::size_t d, const VaeConfig& config) {
    VaeModel m;
    m.n_steps = n_steps;
    m.d = d;
    m.input_width = n_steps * d;
    m.config = config;
    if (config.latent >= m.input_width)
        throw ConfigError("build_vae: latent size " + std::to_string(config.latent) +
                          " must be smaller than input width " + std::to_string(m.input_width));

    std::mt19937_64 rng(config.seed);
    auto fan_in = [](std::size_t n) { return 1.0 / std::sqrt(static_cast<double>(n)); };
    const std::size_t W = m.input_width, H = config.hidden, L = config.latent;

    m.enc_w1 = m.params.add("enc.w1", Tensor2::uniform(W, H, fan_in(W), rng));
    m.enc_b1 = m.params.add("enc.b1", Tensor2::zeros(1, H));
    m.enc_w2 = m.params.add("enc.w2", Tensor2::uniform(H, 2 * L, fan_in(H), rng));
    m.enc_b2 = m.params.add("enc.b2", Tensor2::zeros(1, 2 * L));
    m.dec_w1 = m.params.add("dec.w1", Tensor2::uniform(L, H, fan_in(L), rng));
    m.dec_b1 = m.params.add("dec.b1", Tensor2::zeros(1, H));
    m.dec_w2 = m.params.add("dec.w2", Tensor2::uniform(H, W, fan_in(H), rng));
    m.dec_b2 = m.params.add("dec.b2", Tensor2::zeros(1, W));
    return m;
}

// Posterior mean for a batch of flattened windows (rows).
inline Tensor2 vae_encode_mu(const VaeModel& m, const Tensor2& x) {
    if (x.cols != m.input_width)
        throw DimensionError("vae_encode_mu: input width " + std::to_string(x.cols) +
                             ", model expects " + std::to_string(m.input_width));
    Tensor2 h = dense_eval(m.params[m.enc_w1], m.params[m.enc_b1], x, Act::softplus);
    Tensor2 e = dense_eval(m.params[m.enc_w2], m.params[m.enc_b2], h, Act::identity);
    Tensor2 mu(x.rows, m.config.latent);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < m.config.latent; ++j) mu(i, j) = e(i, j);
    return mu;
}

// Deterministic reconstruction through the posterior mean (no sampling).
inline Tensor2 reconstruct(const VaeModel& m, const Tensor2& x) {
    Tensor2 mu = vae_encode_mu(m, x);
    Tensor2 h = dense_eval(m.params[m.dec_w1], m.params[m.dec_b1], mu, Act::softplus);
    return dense_eval(m.params[m.dec_w2], m.params[m.dec_b2], h, Act::identity);
}

// Minimizes reconstruction MSE plus beta-weighted KL on shuffled minibatches.
// Returns the per-epoch mean loss trace.
inline std::vector<double> train_vae(VaeModel& m, const std::vector<Window>& windows,
                                     std::mt19937_64& rng) {
    if (windows.empty()) throw DataError("train_vae: no training windows");
    for (const auto& w : windows)
        if (w.flat.size() != m.input_width)
            throw DimensionError("train_vae: window width " + std::to_string(w.flat.size()) +
                                 ", model expects " + std::to_string(m.input_width));

    AdamState opt(m.params, m.config.lr);
    std::vector<std::size_t> order(windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const std::size_t L = m.config.latent;
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> trace;
    Tape tape;

    for (int epoch = 0; epoch < m.config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t off = 0; off < order.size(); off += m.config.batch) {
            const std::size_t B = std::min(m.config.batch, order.size() - off);
            Tensor2 x(B, m.input_width);
            for (std::size_t i = 0; i < B; ++i)
                std::copy(windows[order[off + i]].flat.begin(),
                          windows[order[off + i]].flat.end(), x.row(i));
            Tensor2 noise(B, L);
            for (double& n : noise.v) n = gauss(rng);

            tape.reset();
            auto xn = tape.constant(x);
            auto h = dense_forward(tape, m.params[m.enc_w1], m.params[m.enc_b1], xn,
                                   Act::softplus);
            auto e = dense_forward(tape, m.params[m.enc_w2], m.params[m.enc_b2], h,
                                   Act::identity);
            auto mu = tape.slice_cols(e, 0, static_cast<int>(L));
            auto lv = tape.slice_cols(e, static_cast<int>(L), static_cast<int>(2 * L));
            auto z = reparameterize(tape, mu, lv, tape.constant(noise));
            auto dh = dense_forward(tape, m.params[m.dec_w1], m.params[m.dec_b1], z,
                                    Act::softplus);
            auto xhat = dense_forward(tape, m.params[m.dec_w2], m.params[m.dec_b2], dh,
                                      Act::identity);
            auto rec = tape.mse(xhat, xn);
            auto kl = tape.kl_std_normal(mu, lv);
            auto loss = tape.add_scalar(rec, tape.scale(kl, m.config.beta));

            const double loss_val = tape.val(loss).v[0];
            if (!std::isfinite(loss_val))
                throw TrainingError("train_vae: non-finite loss at epoch " +
                                    std::to_string(epoch) + ", batch " + std::to_string(batches) +
                                    " (consider lowering lr=" + std::to_string(m.config.lr) + ")");
            tape.backward(loss);
            adam_step(m.params, opt);
            epoch_loss += loss_val;
            ++batches;
        }
        trace.push_back(epoch_loss / static_cast<double>(batches));
    }
    return trace;
}

// Reconstruction error of the window ending at each timestep, zero-padded at
// the head. Error metric is the same element mean as mse_loss.
inline PenaltyArray compute_penalty(const VaeModel& m, const SeriesTable& table,
                                    std::size_t n_steps) {
    if (table.features != m.d)
        throw DimensionError("compute_penalty: table has " + std::to_string(table.features) +
                             " features, model trained on " + std::to_string(m.d));
    if (n_steps != m.n_steps)
        throw DimensionError("compute_penalty: n_steps " + std::to_string(n_steps) +
                             ", model trained with " + std::to_string(m.n_steps));

    PenaltyArray pa;
    pa.n_steps = n_steps;
    pa.p.assign(table.timesteps, 0.0);

    auto windows = make_windows(table, n_steps);
    const std::size_t chunk = 256;
    for (std::size_t off = 0; off < windows.size(); off += chunk) {
        const std::size_t B = std::min(chunk, windows.size() - off);
        Tensor2 x(B, m.input_width);
        for (std::size_t i = 0; i < B; ++i)
            std::copy(windows[off + i].flat.begin(), windows[off + i].flat.end(), x.row(i));
        Tensor2 xhat = reconstruct(m, x);
        for (std::size_t i = 0; i < B; ++i) {
            double acc = 0.0;
            const double* a = x.row(i);
            const double* b = xhat.row(i);
            for (std::size_t k = 0; k < m.input_width; ++k) {
                const double diff = a[k] - b[k];
                acc += diff * diff;
            }
            pa.p[windows[off + i].end(n_steps)] = acc / static_cast<double>(m.input_width);
        }
    }
    return pa;
}

}  // namespace drsmt
