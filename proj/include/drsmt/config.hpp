#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "drsmt/active.hpp"
#include "drsmt/agent.hpp"
#include "drsmt/data.hpp"
#include "drsmt/reward.hpp"
#include "drsmt/vae.hpp"

// ============================================================================
// Line-based [section] key = value configuration. Every run is fully
// described by one file plus a mandatory seed; the effective (defaults
// resolved) config is always written next to the outputs so any run can be
// reproduced from its artifacts.
// ============================================================================

namespace drsmt {

struct RunConfig {
    // [run]
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = "runs";
    std::optional<double> fixed_lambda;  // ablation: freeze the coefficient
    bool disable_al = false;             // ablation: skip active learning

    // [data]
    std::string csv;
    std::string labels;
    std::size_t n_steps = 25;
    std::size_t k_folds = 5;
    double train_fraction = 0.5;

    // [synth]
    SynthSpec synth;

    // [vae]
    VaeConfig vae;

    // [agent]
    AgentConfig agent;

    // [reward]
    RewardConfig reward;
    double lambda0 = 1.0;
    double lambda_alpha = 0.01;
    double lambda_min = 0.0;
    double lambda_max = 10.0;
    double r_target_fraction = 0.8;  // R_target = fraction * episode length * TN

    // [active]
    ActiveConfig active;

    void validate() const {
        if (!seed_set) throw ConfigError("config: run.seed is mandatory");
        if (n_steps < 2) throw ConfigError("config: data.n_steps must be at least 2");
        if (k_folds < 1) throw ConfigError("config: data.k_folds must be at least 1");
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw ConfigError("config: data.train_fraction must be in (0,1)");
        if (!reward.valid())
            throw ConfigError("config: reward values must satisfy tp > tn > 0 > fp > fn");
        if (lambda_min > lambda_max)
            throw ConfigError("config: reward.lambda_min exceeds lambda_max");
        if (lambda0 < lambda_min || lambda0 > lambda_max)
            throw ConfigError("config: reward.lambda0 outside [lambda_min, lambda_max]");
        if (fixed_lambda && (*fixed_lambda < lambda_min || *fixed_lambda > lambda_max))
            throw ConfigError("config: run.fixed_lambda outside [lambda_min, lambda_max]");
        if (!(agent.gamma >= 0.0 && agent.gamma < 1.0))
            throw ConfigError("config: agent.gamma must be in [0,1)");
        if (agent.eps_start < 0.0 || agent.eps_start > 1.0 || agent.eps_end < 0.0 ||
            agent.eps_end > 1.0)
            throw ConfigError("config: agent epsilon bounds must be in [0,1]");
        if (agent.target_sync < 1) throw ConfigError("config: agent.target_sync must be >= 1");
        if (agent.batch < 1 || agent.episodes < 1 || agent.replay_capacity < 1)
            throw ConfigError("config: agent batch, episodes, replay_capacity must be positive");
        if (vae.latent < 1 || vae.hidden < 1 || vae.epochs < 1 || vae.batch < 1)
            throw ConfigError("config: vae latent, hidden, epochs, batch must be positive");
        if (!(active.oracle_cap >= 0.0 && active.oracle_cap <= 1.0))
            throw ConfigError("config: active.oracle_cap must be in [0,1]");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

struct ConfigReader {
    std::map<std::string, std::string> kv;

    bool take(const std::string& key, std::string& out) {
        auto it = kv.find(key);
        if (it == kv.end()) return false;
        out = it->second;
        kv.erase(it);
        return true;
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        std::string raw;
        if (!take(key, raw)) return;
        std::istringstream ss(raw);
        T v;
        if (!(ss >> v)) throw ConfigError("config: bad value for " + key + ": '" + raw + "'");
        out = v;
    }

    void get(const std::string& key, std::string& out) {
        std::string raw;
        if (take(key, raw)) out = raw;
    }

    void get(const std::string& key, bool& out) {
        std::string raw;
        if (!take(key, raw)) return;
        if (raw == "true" || raw == "1")
            out = true;
        else if (raw == "false" || raw == "0")
            out = false;
        else
            throw ConfigError("config: bad boolean for " + key + ": '" + raw + "'");
    }
};

}  // namespace detail

inline RunConfig parse_config_text(std::istream& in, const std::string& origin) {
    detail::ConfigReader reader;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string s = detail::trim(line);
        if (s.empty() || s[0] == '#') continue;
        if (s.front() == '[' && s.back() == ']') {
            section = s.substr(1, s.size() - 2);
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config " + origin + ":" + std::to_string(line_no) +
                              ": expected key = value");
        const std::string key = detail::trim(s.substr(0, eq));
        const std::string value = detail::trim(s.substr(eq + 1));
        if (section.empty())
            throw ConfigError("config " + origin + ":" + std::to_string(line_no) +
                              ": key '" + key + "' outside any [section]");
        reader.kv[section + "." + key] = value;
    }

    RunConfig cfg;
    std::string raw;
    if (reader.take("run.seed", raw)) {
        cfg.seed = std::stoull(raw);
        cfg.seed_set = true;
    }
    reader.get("run.out_dir", cfg.out_dir);
    if (reader.take("run.fixed_lambda", raw)) cfg.fixed_lambda = std::stod(raw);
    reader.get("run.disable_al", cfg.disable_al);

    reader.get("data.csv", cfg.csv);
    reader.get("data.labels", cfg.labels);
    reader.get("data.n_steps", cfg.n_steps);
    reader.get("data.k_folds", cfg.k_folds);
    reader.get("data.train_fraction", cfg.train_fraction);

    reader.get("synth.d", cfg.synth.features);
    reader.get("synth.T", cfg.synth.timesteps);
    reader.get("synth.anomaly_rate", cfg.synth.anomaly_rate);
    reader.get("synth.kind", cfg.synth.kind);

    reader.get("vae.latent", cfg.vae.latent);
    reader.get("vae.hidden", cfg.vae.hidden);
    reader.get("vae.epochs", cfg.vae.epochs);
    reader.get("vae.batch", cfg.vae.batch);
    reader.get("vae.lr", cfg.vae.lr);
    reader.get("vae.beta", cfg.vae.beta);

    reader.get("agent.gamma", cfg.agent.gamma);
    reader.get("agent.hidden", cfg.agent.hidden);
    reader.get("agent.batch", cfg.agent.batch);
    reader.get("agent.target_sync", cfg.agent.target_sync);
    reader.get("agent.replay_capacity", cfg.agent.replay_capacity);
    reader.get("agent.warmup", cfg.agent.warmup);
    reader.get("agent.warmup_strategy", cfg.agent.warmup_strategy);
    reader.get("agent.lr", cfg.agent.lr);
    reader.get("agent.episodes", cfg.agent.episodes);
    reader.get("agent.eps_start", cfg.agent.eps_start);
    reader.get("agent.eps_end", cfg.agent.eps_end);
    reader.get("agent.eps_decay_fraction", cfg.agent.eps_decay_fraction);

    reader.get("reward.tp", cfg.reward.tp_val);
    reader.get("reward.tn", cfg.reward.tn_val);
    reader.get("reward.fp", cfg.reward.fp_val);
    reader.get("reward.fn", cfg.reward.fn_val);
    if (reader.take("reward.penalty_mode", raw)) {
        if (raw == "additive_both")
            cfg.reward.penalty_mode = RewardConfig::PenaltyMode::additive_both;
        else if (raw == "subtract_on_normal")
            cfg.reward.penalty_mode = RewardConfig::PenaltyMode::subtract_on_normal;
        else
            throw ConfigError("config: unknown reward.penalty_mode '" + raw + "'");
    }
    reader.get("reward.lambda0", cfg.lambda0);
    reader.get("reward.alpha", cfg.lambda_alpha);
    reader.get("reward.lambda_min", cfg.lambda_min);
    reader.get("reward.lambda_max", cfg.lambda_max);
    reader.get("reward.r_target_fraction", cfg.r_target_fraction);

    reader.get("active.k_al", cfg.active.k_al);
    reader.get("active.k_lp", cfg.active.k_lp);
    reader.get("active.oracle_cap", cfg.active.oracle_cap);
    reader.get("active.threshold", cfg.active.threshold);
    reader.get("active.sigma", cfg.active.sigma);
    reader.get("active.knn", cfg.active.knn);
    reader.get("active.max_iters", cfg.active.max_iters);

    if (!reader.kv.empty())
        throw ConfigError("config " + origin + ": unknown key '" + reader.kv.begin()->first +
                          "'");

    // derived seeds: one root seed drives every stage deterministically
    cfg.synth.seed = cfg.seed;
    cfg.vae.seed = cfg.seed + 1;
    cfg.agent.seed = cfg.seed + 2;
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    return parse_config_text(in, path);
}

inline void write_effective_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("config: cannot write '" + path + "'");
    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "[run]\n";
    out << "seed = " << cfg.seed << "\n";
    out << "out_dir = " << cfg.out_dir << "\n";
    if (cfg.fixed_lambda) out << "fixed_lambda = " << num(*cfg.fixed_lambda) << "\n";
    out << "disable_al = " << (cfg.disable_al ? "true" : "false") << "\n";
    out << "\n[data]\n";
    out << "csv = " << cfg.csv << "\n";
    out << "labels = " << cfg.labels << "\n";
    out << "n_steps = " << cfg.n_steps << "\n";
    out << "k_folds = " << cfg.k_folds << "\n";
    out << "train_fraction = " << num(cfg.train_fraction) << "\n";
    out << "\n[synth]\n";
    out << "d = " << cfg.synth.features << "\n";
    out << "T = " << cfg.synth.timesteps << "\n";
    out << "anomaly_rate = " << num(cfg.synth.anomaly_rate) << "\n";
    out << "kind = " << cfg.synth.kind << "\n";
    out << "\n[vae]\n";
    out << "latent = " << cfg.vae.latent << "\n";
    out << "hidden = " << cfg.vae.hidden << "\n";
    out << "epochs = " << cfg.vae.epochs << "\n";
    out << "batch = " << cfg.vae.batch << "\n";
    out << "lr = " << num(cfg.vae.lr) << "\n";
    out << "beta = " << num(cfg.vae.beta) << "\n";
    out << "\n[agent]\n";
    out << "gamma = " << num(cfg.agent.gamma) << "\n";
    out << "hidden = " << cfg.agent.hidden << "\n";
    out << "batch = " << cfg.agent.batch << "\n";
    out << "target_sync = " << cfg.agent.target_sync << "\n";
    out << "replay_capacity = " << cfg.agent.replay_capacity << "\n";
    out << "warmup = " << cfg.agent.warmup << "\n";
    out << "warmup_strategy = " << cfg.agent.warmup_strategy << "\n";
    out << "lr = " << num(cfg.agent.lr) << "\n";
    out << "episodes = " << cfg.agent.episodes << "\n";
    out << "eps_start = " << num(cfg.agent.eps_start) << "\n";
    out << "eps_end = " << num(cfg.agent.eps_end) << "\n";
    out << "eps_decay_fraction = " << num(cfg.agent.eps_decay_fraction) << "\n";
    out << "\n[reward]\n";
    out << "tp = " << num(cfg.reward.tp_val) << "\n";
    out << "tn = " << num(cfg.reward.tn_val) << "\n";
    out << "fp = " << num(cfg.reward.fp_val) << "\n";
    out << "fn = " << num(cfg.reward.fn_val) << "\n";
    out << "penalty_mode = "
        << (cfg.reward.penalty_mode == RewardConfig::PenaltyMode::additive_both
                ? "additive_both"
                : "subtract_on_normal")
        << "\n";
    out << "lambda0 = " << num(cfg.lambda0) << "\n";
    out << "alpha = " << num(cfg.lambda_alpha) << "\n";
    out << "lambda_min = " << num(cfg.lambda_min) << "\n";
    out << "lambda_max = " << num(cfg.lambda_max) << "\n";
    out << "r_target_fraction = " << num(cfg.r_target_fraction) << "\n";
    out << "\n[active]\n";
    out << "k_al = " << cfg.active.k_al << "\n";
    out << "k_lp = " << cfg.active.k_lp << "\n";
    out << "oracle_cap = " << num(cfg.active.oracle_cap) << "\n";
    out << "threshold = " << num(cfg.active.threshold) << "\n";
    out << "sigma = " << num(cfg.active.sigma) << "\n";
    out << "knn = " << cfg.active.knn << "\n";
    out << "max_iters = " << cfg.active.max_iters << "\n";
}

}  // namespace drsmt
