#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "drsmt/active.hpp"
#include "drsmt/agent.hpp"
#include "drsmt/checkpoint.hpp"
#include "drsmt/config.hpp"
#include "drsmt/data.hpp"
#include "drsmt/env.hpp"
#include "drsmt/eval.hpp"
#include "drsmt/reward.hpp"
#include "drsmt/vae.hpp"

// ============================================================================
// End-to-end runs: dataset preparation, VAE training, penalty computation,
// warm-up, RL training with active learning, validation, and all output
// files. Every artifact is a pure function of (config, seed).
// ============================================================================

namespace drsmt {

namespace fsys = std::filesystem;

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 14695981039346656037ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t table_hash(const SeriesTable& t) {
    std::uint64_t h = fnv1a(t.values.data(), t.values.size() * sizeof(double));
    h = fnv1a(t.labels.data(), t.labels.size() * sizeof(int), h);
    return h;
}

// ----------------------------------------------------------------------------
// Data preparation: chronological train/test split, zero-variance pruning
// fitted on the training rows, standardization fitted on the normal training
// rows only.
// ----------------------------------------------------------------------------

struct PreparedData {
    SeriesTable train_std;
    SeriesTable test_std;
    ScalerStats scaler;
    std::vector<std::string> kept_features;
    std::uint64_t split_hash = 0;
};

inline SeriesTable select_features(const SeriesTable& table,
                                   const std::vector<std::string>& names) {
    std::vector<std::size_t> idx;
    for (const auto& name : names) {
        auto it = std::find(table.feature_names.begin(), table.feature_names.end(), name);
        if (it == table.feature_names.end())
            throw DataError("select_features: feature '" + name + "' not present in data");
        idx.push_back(static_cast<std::size_t>(it - table.feature_names.begin()));
    }
    SeriesTable out;
    out.timesteps = table.timesteps;
    out.features = idx.size();
    out.labels = table.labels;
    out.feature_names = names;
    out.values.reserve(out.timesteps * out.features);
    for (std::size_t t = 0; t < table.timesteps; ++t)
        for (std::size_t j : idx) out.values.push_back(table.value(t, j));
    return out;
}

inline PreparedData prepare_data(const SeriesTable& raw, const RunConfig& cfg) {
    const std::size_t t_train =
        static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(raw.timesteps));
    if (t_train < cfg.n_steps + 1 || raw.timesteps - t_train < cfg.n_steps + 1)
        throw DataError("prepare_data: train/test split too short for n_steps=" +
                        std::to_string(cfg.n_steps));
    SeriesTable train_raw = raw.slice(0, t_train);
    SeriesTable test_raw = raw.slice(t_train, raw.timesteps - t_train);

    PreparedData prep;
    prep.split_hash = fnv1a(&t_train, sizeof(t_train), table_hash(raw));

    std::vector<bool> train_rows(train_raw.timesteps, true);
    auto [train_kept, kept_names] = drop_zero_variance(train_raw, train_rows);
    prep.kept_features = kept_names;
    SeriesTable test_kept = select_features(test_raw, kept_names);

    std::vector<bool> normal_rows(train_kept.timesteps);
    for (std::size_t t = 0; t < train_kept.timesteps; ++t)
        normal_rows[t] = train_kept.labels[t] == 0;
    prep.scaler = fit_standardize(train_kept, normal_rows);
    prep.train_std = apply_standardize(train_kept, prep.scaler);
    prep.test_std = apply_standardize(test_kept, prep.scaler);
    return prep;
}

// ----------------------------------------------------------------------------
// Checkpoint packing
// ----------------------------------------------------------------------------

inline void save_vae_checkpoint(const VaeModel& m, const ScalerStats& scaler,
                                const std::vector<std::string>& features,
                                const std::string& path) {
    Checkpoint ck;
    ck.set_meta("kind", "vae");
    ck.set_meta("n_steps", std::to_string(m.n_steps));
    ck.set_meta("d", std::to_string(m.d));
    ck.set_meta("latent", std::to_string(m.config.latent));
    ck.set_meta("hidden", std::to_string(m.config.hidden));
    for (std::size_t i = 0; i < features.size(); ++i)
        ck.set_meta("feature." + std::to_string(i), features[i]);
    Tensor2 mean(1, scaler.mean.size(), scaler.mean);
    Tensor2 sd(1, scaler.std.size(), scaler.std);
    ck.add_tensor("scaler.mean", std::move(mean));
    ck.add_tensor("scaler.std", std::move(sd));
    ck.add_params(m.params);
    ck.save(path);
}

struct LoadedVae {
    VaeModel model;
    ScalerStats scaler;
    std::vector<std::string> features;
};

inline LoadedVae load_vae_checkpoint(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (!ck.has_meta("kind") || ck.meta("kind") != "vae")
        throw DataError("checkpoint '" + path + "' is not a vae checkpoint");
    LoadedVae out;
    VaeConfig cfg;
    cfg.latent = std::stoul(ck.meta("latent"));
    cfg.hidden = std::stoul(ck.meta("hidden"));
    out.model = build_vae(std::stoul(ck.meta("n_steps")), std::stoul(ck.meta("d")), cfg);
    ck.restore_params(out.model.params, path);
    const Tensor2& mean = ck.tensor("scaler.mean");
    const Tensor2& sd = ck.tensor("scaler.std");
    out.scaler.mean = mean.v;
    out.scaler.std = sd.v;
    out.scaler.remove_flag.assign(mean.cols, false);
    for (std::size_t i = 0;; ++i) {
        const std::string key = "feature." + std::to_string(i);
        if (!ck.has_meta(key)) break;
        out.features.push_back(ck.meta(key));
    }
    if (out.features.size() != out.model.d)
        throw DataError("checkpoint '" + path + "': feature list does not match model width");
    return out;
}

inline void save_qnet_checkpoint(const QNet& net, const std::string& path) {
    Checkpoint ck;
    ck.set_meta("kind", "qnet");
    ck.set_meta("input", std::to_string(net.input));
    ck.set_meta("hidden", std::to_string(net.hidden));
    ck.set_meta("n_steps", std::to_string(net.n_steps));
    ck.add_params(net.params);
    ck.save(path);
}

inline QNet load_qnet_checkpoint(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (!ck.has_meta("kind") || ck.meta("kind") != "qnet")
        throw DataError("checkpoint '" + path + "' is not a qnet checkpoint");
    QNet net = build_qnet(std::stoul(ck.meta("input")), std::stoul(ck.meta("hidden")),
                          std::stoul(ck.meta("n_steps")), 0);
    ck.restore_params(net.params, path);
    return net;
}

// ----------------------------------------------------------------------------
// Output writers
// ----------------------------------------------------------------------------

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    for (const auto& l : lines) out << l << "\n";
}

inline void write_penalty(const PenaltyArray& p, const std::string& path) {
    std::vector<std::string> lines;
    lines.reserve(p.size());
    for (double v : p.p) lines.push_back(format_double(v));
    write_lines(path, lines);
}

inline void write_training_log(const std::vector<EpisodeLog>& log, const std::string& path) {
    std::vector<std::string> lines{"episode,total_reward,lambda,epsilon,mean_loss,train_f1"};
    for (const auto& row : log)
        lines.push_back(std::to_string(row.episode) + "," + format_double(row.total_reward) +
                        "," + format_double(row.lambda) + "," + format_double(row.epsilon) +
                        "," + format_double(row.mean_loss) + "," + format_double(row.train_f1));
    write_lines(path, lines);
}

inline void write_lambda_history(const std::vector<EpisodeLog>& log, const std::string& path) {
    std::vector<std::string> lines{"episode,lambda,episode_reward"};
    for (const auto& row : log)
        lines.push_back(std::to_string(row.episode) + "," + format_double(row.lambda) + "," +
                        format_double(row.total_reward));
    write_lines(path, lines);
}

inline void write_al_audit(const std::vector<ALAuditRow>& audit, const std::string& path) {
    std::vector<std::string> lines{
        "episode,queried_indices,margins,oracle_labels,pseudo_label_count,injected"};
    for (const auto& row : audit) {
        std::string q, m, l;
        for (std::size_t i = 0; i < row.queried.size(); ++i) {
            q += (i ? ";" : "") + std::to_string(row.queried[i]);
            m += (i ? ";" : "") + format_double(row.margins[i]);
            l += (i ? ";" : "") + std::to_string(row.labels[i]);
        }
        lines.push_back(std::to_string(row.episode) + "," + q + "," + m + "," + l + "," +
                        std::to_string(row.pseudo_count) + "," + std::to_string(row.injected));
    }
    write_lines(path, lines);
}

inline nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["aggregate"] = {{"mean_f1", report.mean_f1},
                      {"mean_aupr", report.mean_aupr},
                      {"std_aupr", report.std_aupr},
                      {"slices", report.slices.size()}};
    j["slices"] = nlohmann::json::array();
    for (const auto& s : report.slices) {
        nlohmann::json js;
        js["index"] = s.index;
        js["precision"] = s.metrics.precision;
        js["recall"] = s.metrics.recall;
        js["f1"] = s.metrics.f1;
        js["aupr"] = s.aupr_value;
        js["aupr_defined"] = s.aupr_defined;
        js["predictions"] = s.predictions;
        js["truths"] = s.truths;
        js["scores"] = s.scores;
        j["slices"].push_back(std::move(js));
    }
    return j;
}

inline void write_report(const EvalReport& report, const std::string& dir) {
    {
        std::ofstream out(dir + "/report.json");
        if (!out) throw DataError("cannot write '" + dir + "/report.json'");
        out << report_to_json(report).dump(2) << "\n";
    }
    std::vector<std::string> lines{"slice,precision,recall,f1,aupr,aupr_defined"};
    for (const auto& s : report.slices)
        lines.push_back(std::to_string(s.index) + "," + format_double(s.metrics.precision) +
                        "," + format_double(s.metrics.recall) + "," +
                        format_double(s.metrics.f1) + "," + format_double(s.aupr_value) + "," +
                        (s.aupr_defined ? "1" : "0"));
    lines.push_back("aggregate," + format_double(report.mean_f1) + ",," +
                    format_double(report.mean_aupr) + "," + format_double(report.std_aupr) + ",");
    write_lines(dir + "/report.csv", lines);

    fsys::create_directories(dir + "/plots");
    for (const auto& s : report.slices) {
        std::vector<std::string> plot{"timestep,value0,prediction,truth"};
        for (std::size_t i = 0; i < s.predictions.size(); ++i)
            plot.push_back(std::to_string(s.timesteps[i]) + "," + format_double(s.value0[i]) +
                           "," + std::to_string(s.predictions[i]) + "," +
                           std::to_string(s.truths[i]));
        write_lines(dir + "/plots/plotdata_slice" + std::to_string(s.index) + ".csv", plot);

        std::vector<std::string> pr{"recall,precision"};
        for (const auto& [r, p] : s.pr.points)
            pr.push_back(format_double(r) + "," + format_double(p));
        write_lines(dir + "/plots/pr_slice" + std::to_string(s.index) + ".csv", pr);
    }
}

// ----------------------------------------------------------------------------
// Commands
// ----------------------------------------------------------------------------

struct SynthSummary {
    std::size_t timesteps = 0;
    std::size_t features = 0;
    long anomalies = 0;
    double realized_rate = 0.0;
};

inline SynthSummary run_synth(const RunConfig& cfg) {
    if (cfg.csv.empty() || cfg.labels.empty())
        throw ConfigError("synth: data.csv and data.labels paths are required");
    SeriesTable table = synth_generate(cfg.synth);
    if (auto dir = fsys::path(cfg.csv).parent_path(); !dir.empty()) fsys::create_directories(dir);
    write_csv(table, cfg.csv, cfg.labels);
    SynthSummary s;
    s.timesteps = table.timesteps;
    s.features = table.features;
    s.anomalies = table.label_sum();
    s.realized_rate = static_cast<double>(s.anomalies) / static_cast<double>(table.timesteps);
    return s;
}

struct TrainOutputs {
    EvalReport report;
    std::vector<EpisodeLog> log;
    std::uint64_t split_hash = 0;
    std::string dir;
};

inline TrainOutputs run_train(const RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    fsys::create_directories(out_dir);
    write_effective_config(cfg, out_dir + "/effective.cfg");

    SeriesTable raw = load_csv(cfg.csv, cfg.labels);
    PreparedData prep = prepare_data(raw, cfg);

    // reconstruction model on normal training windows
    VaeModel vae = build_vae(cfg.n_steps, prep.train_std.features, cfg.vae);
    std::mt19937_64 vae_rng(cfg.vae.seed);
    auto loss_trace = train_vae(vae, normal_windows(prep.train_std, cfg.n_steps), vae_rng);
    {
        std::vector<std::string> lines{"epoch,loss"};
        for (std::size_t e = 0; e < loss_trace.size(); ++e)
            lines.push_back(std::to_string(e) + "," + format_double(loss_trace[e]));
        write_lines(out_dir + "/vae_loss.csv", lines);
    }

    PenaltyArray penalty_train = compute_penalty(vae, prep.train_std, cfg.n_steps);
    PenaltyArray penalty_test = compute_penalty(vae, prep.test_std, cfg.n_steps);
    write_penalty(penalty_train, out_dir + "/penalty_train.txt");
    write_penalty(penalty_test, out_dir + "/penalty_test.txt");

    WindowEnv env(prep.train_std, penalty_train, cfg.n_steps);

    LambdaState lambda_state(cfg.fixed_lambda.value_or(cfg.lambda0), cfg.lambda_alpha,
                             cfg.r_target_fraction * static_cast<double>(env.decisions()) *
                                 cfg.reward.tn_val,
                             cfg.lambda_min, cfg.lambda_max);
    const bool adapt_lambda = !cfg.fixed_lambda.has_value();

    ReplayMemory memory(cfg.agent.replay_capacity);
    std::mt19937_64 warm_rng(cfg.seed + 3);
    warm_up(env, memory, cfg.agent.warmup, cfg.agent.warmup_strategy, lambda_state.lambda,
            cfg.reward, warm_rng);

    std::unique_ptr<ActiveLearner> learner;
    EpisodeHook hook;
    if (!cfg.disable_al && cfg.active.enabled) {
        auto windows = make_windows(prep.train_std, cfg.n_steps);
        std::vector<int> truth(windows.size());
        for (std::size_t i = 0; i < windows.size(); ++i) truth[i] = windows[i].label;
        LabelPool pool =
            LabelPool::from_windows(windows, cfg.n_steps, prep.train_std.features);
        learner = std::make_unique<ActiveLearner>(std::move(pool), std::move(truth), &env,
                                                  cfg.reward, cfg.active);
        hook = [&](const QNet& q, double lambda, ReplayMemory& mem, int episode) {
            learner->run_episode(q, lambda, mem, episode);
        };
    }

    TrainResult trained =
        run_training(env, memory, lambda_state, adapt_lambda, cfg.reward, cfg.agent, hook);

    write_training_log(trained.log, out_dir + "/training_log.csv");
    write_lambda_history(trained.log, out_dir + "/lambda_history.csv");
    if (learner) write_al_audit(learner->audit(), out_dir + "/al_audit.csv");

    save_vae_checkpoint(vae, prep.scaler, prep.kept_features, out_dir + "/vae.ckpt");
    save_qnet_checkpoint(trained.qnet, out_dir + "/qnet.ckpt");

    TrainOutputs out;
    out.report = validate(prep.test_std, penalty_test, trained.qnet, cfg.k_folds, cfg.n_steps);
    write_report(out.report, out_dir);
    out.log = trained.log;
    out.split_hash = prep.split_hash;
    out.dir = out_dir;
    return out;
}

inline EvalReport run_eval(const RunConfig& cfg, const std::string& out_dir,
                           const std::string& vae_ckpt, const std::string& qnet_ckpt) {
    cfg.validate();
    fsys::create_directories(out_dir);
    write_effective_config(cfg, out_dir + "/effective.cfg");

    LoadedVae lv = load_vae_checkpoint(vae_ckpt);
    QNet qnet = load_qnet_checkpoint(qnet_ckpt);
    if (qnet.input != lv.model.d + 1 || qnet.n_steps != lv.model.n_steps)
        throw DataError("checkpoint mismatch: qnet expects input " + std::to_string(qnet.input) +
                        "/window " + std::to_string(qnet.n_steps) + ", vae provides d=" +
                        std::to_string(lv.model.d) + "/window " +
                        std::to_string(lv.model.n_steps));
    if (lv.model.n_steps != cfg.n_steps)
        throw DataError("checkpoint mismatch: model n_steps " + std::to_string(lv.model.n_steps) +
                        " differs from configured " + std::to_string(cfg.n_steps));

    SeriesTable raw = load_csv(cfg.csv, cfg.labels);
    const std::size_t t_train =
        static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(raw.timesteps));
    SeriesTable test_raw = raw.slice(t_train, raw.timesteps - t_train);
    SeriesTable test_kept = select_features(test_raw, lv.features);
    SeriesTable test_std = apply_standardize(test_kept, lv.scaler);

    PenaltyArray penalty_test = compute_penalty(lv.model, test_std, cfg.n_steps);
    EvalReport report = validate(test_std, penalty_test, qnet, cfg.k_folds, cfg.n_steps);
    write_report(report, out_dir);
    return report;
}

struct AblationRow {
    std::string variant;
    double mean_f1 = 0.0;
    double mean_aupr = 0.0;
    int episodes_to_best_f1 = 0;
    std::uint64_t split_hash = 0;
};

// Runs {full, fixed-lambda, no-AL} under the same seed and emits a comparison
// table. Directional differences are reported, not asserted.
inline std::vector<AblationRow> run_ablate(const RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    fsys::create_directories(out_dir);
    write_effective_config(cfg, out_dir + "/effective.cfg");

    auto episodes_to_best = [](const std::vector<EpisodeLog>& log) {
        double best = -1.0;
        int at = 0;
        for (const auto& row : log)
            if (row.train_f1 > best) {
                best = row.train_f1;
                at = row.episode + 1;
            }
        return at;
    };

    std::vector<AblationRow> rows;
    for (const std::string variant : {"full", "fixed_lambda", "no_al"}) {
        RunConfig vcfg = cfg;
        vcfg.fixed_lambda.reset();
        vcfg.disable_al = false;
        if (variant == "fixed_lambda") vcfg.fixed_lambda = cfg.lambda0;
        if (variant == "no_al") vcfg.disable_al = true;
        TrainOutputs out = run_train(vcfg, out_dir + "/" + variant);
        AblationRow row;
        row.variant = variant;
        row.mean_f1 = out.report.mean_f1;
        row.mean_aupr = out.report.mean_aupr;
        row.episodes_to_best_f1 = episodes_to_best(out.log);
        row.split_hash = out.split_hash;
        rows.push_back(row);
    }
    for (const auto& row : rows)
        if (row.split_hash != rows[0].split_hash)
            throw TrainingError("ablate: variants saw different data splits");

    std::vector<std::string> lines{"variant,mean_f1,mean_aupr,episodes_to_best_f1,split_hash"};
    for (const auto& row : rows)
        lines.push_back(row.variant + "," + format_double(row.mean_f1) + "," +
                        format_double(row.mean_aupr) + "," +
                        std::to_string(row.episodes_to_best_f1) + "," +
                        std::to_string(row.split_hash));
    write_lines(out_dir + "/ablation.csv", lines);
    return rows;
}

}  // namespace drsmt
