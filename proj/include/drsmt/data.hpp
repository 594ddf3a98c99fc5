#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "drsmt/tensor.hpp"

// ============================================================================
// Series ingestion and preprocessing: CSV loading, zero-variance pruning,
// standardization, sliding windows, synthetic series generation, K-fold
// slicing.
// ============================================================================

namespace drsmt {

// Aligned multivariate series with one binary label per timestep.
struct SeriesTable {
    std::size_t timesteps = 0;
    std::size_t features = 0;
    std::vector<double> values;  // timesteps x features, row-major
    std::vector<int> labels;     // 0 normal, 1 anomaly
    std::vector<std::string> feature_names;

    double& value(std::size_t t, std::size_t j) { return values[t * features + j]; }
    double value(std::size_t t, std::size_t j) const { return values[t * features + j]; }
    const double* row(std::size_t t) const { return values.data() + t * features; }

    SeriesTable slice(std::size_t start, std::size_t len) const {
        SeriesTable out;
        out.timesteps = len;
        out.features = features;
        out.feature_names = feature_names;
        out.values.assign(values.begin() + static_cast<long>(start * features),
                          values.begin() + static_cast<long>((start + len) * features));
        out.labels.assign(labels.begin() + static_cast<long>(start),
                          labels.begin() + static_cast<long>(start + len));
        return out;
    }

    long label_sum() const {
        long s = 0;
        for (int l : labels) s += l;
        return s;
    }
};

// Per-feature mean/std fitted on a row mask. Features whose std falls under
// the zero-variance threshold are flagged for removal.
struct ScalerStats {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<bool> remove_flag;

    static constexpr double kZeroVarianceThreshold = 1e-12;
    static constexpr double kStdClamp = 1e-8;
};

// Flattened standardized slice; the unit of both reconstruction and RL state.
struct Window {
    std::size_t start = 0;            // first covered timestep
    std::vector<double> flat;         // n_steps x d, time-major
    int label = 0;                    // label of the final covered timestep

    std::size_t end(std::size_t n_steps) const { return start + n_steps - 1; }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    return cells;
}

inline bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
    if (b == e) return false;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e;
}

}  // namespace detail

// Loads a comma-separated series. A header row of feature names is expected;
// a fully numeric first row is accepted as headerless (names become f0..fN).
// Labels come from `label_path` (one 0/1 per line) or from a trailing column
// literally named "label".
inline SeriesTable load_csv(const std::string& path, const std::string& label_path = "") {
    std::ifstream in(path);
    if (!in) throw DataError("load_csv: cannot open '" + path + "'");

    SeriesTable table;
    std::string line;
    std::vector<std::string> header;
    bool header_present = false;
    bool label_column = false;

    if (!std::getline(in, line)) throw DataError("load_csv: '" + path + "' is empty");
    header = detail::split_csv_line(line);
    double probe;
    for (const auto& cell : header)
        if (!detail::parse_double(cell, probe)) header_present = true;

    std::size_t ncols = header.size();
    if (header_present) {
        if (!header.empty() && header.back() == "label") label_column = true;
        table.feature_names.assign(header.begin(), header.end() - (label_column ? 1 : 0));
    } else {
        in.clear();
        in.seekg(0);
        for (std::size_t j = 0; j < ncols; ++j) table.feature_names.push_back("f" + std::to_string(j));
    }
    table.features = table.feature_names.size();
    if (table.features == 0) throw DataError("load_csv: no feature columns in '" + path + "'");

    std::size_t row_no = header_present ? 1 : 0;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != ncols)
            throw DataError("load_csv: row " + std::to_string(row_no) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(ncols));
        for (std::size_t j = 0; j < table.features; ++j) {
            double x;
            if (!detail::parse_double(cells[j], x))
                throw DataError("load_csv: non-numeric cell at row " + std::to_string(row_no) +
                                ", col " + std::to_string(j + 1) + " ('" + cells[j] + "')");
            table.values.push_back(x);
        }
        if (label_column) {
            double y;
            if (!detail::parse_double(cells.back(), y) || (y != 0.0 && y != 1.0))
                throw DataError("load_csv: label at row " + std::to_string(row_no) +
                                " must be 0 or 1, got '" + cells.back() + "'");
            table.labels.push_back(static_cast<int>(y));
        }
    }
    table.timesteps = table.values.size() / table.features;

    if (!label_column) {
        if (label_path.empty())
            throw DataError("load_csv: no label column in '" + path +
                            "' and no label file given");
        std::ifstream lin(label_path);
        if (!lin) throw DataError("load_csv: cannot open label file '" + label_path + "'");
        std::string lline;
        std::size_t lrow = 0;
        while (std::getline(lin, lline)) {
            ++lrow;
            if (lline.empty()) continue;
            double y;
            if (!detail::parse_double(lline, y) || (y != 0.0 && y != 1.0))
                throw DataError("load_csv: label file row " + std::to_string(lrow) +
                                " must be 0 or 1, got '" + lline + "'");
            table.labels.push_back(static_cast<int>(y));
        }
        if (table.labels.size() != table.timesteps)
            throw DataError("load_csv: " + std::to_string(table.timesteps) + " data rows but " +
                            std::to_string(table.labels.size()) + " labels");
    }
    return table;
}

inline void write_csv(const SeriesTable& table, const std::string& path,
                      const std::string& label_path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_csv: cannot open '" + path + "' for writing");
    for (std::size_t j = 0; j < table.features; ++j)
        out << (j ? "," : "") << table.feature_names[j];
    out << "\n";
    char buf[32];
    for (std::size_t t = 0; t < table.timesteps; ++t) {
        for (std::size_t j = 0; j < table.features; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", table.value(t, j));
            out << (j ? "," : "") << buf;
        }
        out << "\n";
    }
    std::ofstream lout(label_path);
    if (!lout) throw DataError("write_csv: cannot open '" + label_path + "' for writing");
    for (int l : table.labels) lout << l << "\n";
}

namespace detail {

inline std::pair<double, double> masked_mean_std(const SeriesTable& table, std::size_t j,
                                                 const std::vector<bool>& mask) {
    double mean = 0.0;
    long n = 0;
    for (std::size_t t = 0; t < table.timesteps; ++t)
        if (mask[t]) {
            mean += table.value(t, j);
            ++n;
        }
    mean /= static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t t = 0; t < table.timesteps; ++t)
        if (mask[t]) {
            const double d = table.value(t, j) - mean;
            acc += d * d;
        }
    return {mean, std::sqrt(acc / static_cast<double>(n))};
}

}  // namespace detail

// Removes features whose std over the masked rows is below the zero-variance
// threshold; surviving feature order is preserved.
inline std::pair<SeriesTable, std::vector<std::string>> drop_zero_variance(
    const SeriesTable& table, const std::vector<bool>& train_mask) {
    long masked = 0;
    for (bool b : train_mask) masked += b;
    if (masked < 2) throw DataError("drop_zero_variance: mask selects fewer than 2 rows");

    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < table.features; ++j) {
        auto [mean, sd] = detail::masked_mean_std(table, j, train_mask);
        (void)mean;
        if (sd >= ScalerStats::kZeroVarianceThreshold) keep.push_back(j);
    }
    if (keep.empty()) throw DataError("drop_zero_variance: all features have zero variance");

    SeriesTable out;
    out.timesteps = table.timesteps;
    out.features = keep.size();
    out.labels = table.labels;
    out.values.reserve(out.timesteps * out.features);
    for (std::size_t j : keep) out.feature_names.push_back(table.feature_names[j]);
    for (std::size_t t = 0; t < table.timesteps; ++t)
        for (std::size_t j : keep) out.values.push_back(table.value(t, j));
    return {out, out.feature_names};
}

inline ScalerStats fit_standardize(const SeriesTable& table, const std::vector<bool>& mask) {
    long masked = 0;
    for (bool b : mask) masked += b;
    if (masked < 1) throw DataError("fit_standardize: empty row mask");
    ScalerStats stats;
    for (std::size_t j = 0; j < table.features; ++j) {
        auto [mean, sd] = detail::masked_mean_std(table, j, mask);
        stats.mean.push_back(mean);
        stats.std.push_back(sd);
        stats.remove_flag.push_back(sd < ScalerStats::kZeroVarianceThreshold);
    }
    return stats;
}

inline SeriesTable apply_standardize(const SeriesTable& table, const ScalerStats& stats) {
    if (stats.mean.size() != table.features)
        throw DataError("apply_standardize: scaler has " + std::to_string(stats.mean.size()) +
                        " features, table has " + std::to_string(table.features));
    SeriesTable out = table;
    for (std::size_t j = 0; j < table.features; ++j) {
        const double mean = stats.mean[j];
        const double sd = std::max(stats.std[j], ScalerStats::kStdClamp);
        for (std::size_t t = 0; t < table.timesteps; ++t)
            out.value(t, j) = (table.value(t, j) - mean) / sd;
    }
    return out;
}

// All length-n windows; window t covers rows [t, t+n), flattened time-major.
inline std::vector<Window> make_windows(const SeriesTable& table, std::size_t n_steps) {
    if (table.timesteps < n_steps)
        throw DataError("make_windows: series length " + std::to_string(table.timesteps) +
                        " shorter than window " + std::to_string(n_steps));
    std::vector<Window> out;
    out.reserve(table.timesteps - n_steps + 1);
    for (std::size_t t = 0; t + n_steps <= table.timesteps; ++t) {
        Window w;
        w.start = t;
        w.flat.assign(table.row(t), table.row(t) + n_steps * table.features);
        w.label = table.labels[t + n_steps - 1];
        out.push_back(std::move(w));
    }
    return out;
}

// Windows whose covered timesteps are all labeled normal.
inline std::vector<Window> normal_windows(const SeriesTable& table, std::size_t n_steps) {
    auto all = make_windows(table, n_steps);
    std::vector<Window> out;
    for (auto& w : all) {
        bool clean = true;
        for (std::size_t t = w.start; t < w.start + n_steps; ++t)
            if (table.labels[t] != 0) {
                clean = false;
                break;
            }
        if (clean) out.push_back(std::move(w));
    }
    if (out.empty())
        throw DataError("normal_windows: no fully-normal windows; cannot train a reconstruction "
                        "model");
    return out;
}

// ----------------------------------------------------------------------------
// Synthetic generator: per-feature sinusoids plus Gaussian noise, with
// contiguous anomalous segments injected. Deterministic under seed.
// ----------------------------------------------------------------------------

struct SynthSpec {
    std::size_t features = 5;
    std::size_t timesteps = 10000;
    double anomaly_rate = 0.05;
    std::string kind = "mean_shift";  // mean_shift | variance_burst | correlated_fault
    std::uint64_t seed = 0;
};

inline SeriesTable synth_generate(const SynthSpec& spec) {
    if (!(spec.anomaly_rate > 0.0 && spec.anomaly_rate < 0.5))
        throw ConfigError("synth_generate: anomaly_rate must be in (0, 0.5), got " +
                          std::to_string(spec.anomaly_rate));
    if (spec.kind != "mean_shift" && spec.kind != "variance_burst" &&
        spec.kind != "correlated_fault")
        throw ConfigError("synth_generate: unknown anomaly kind '" + spec.kind + "'");
    if (spec.timesteps < 100 ||
        spec.anomaly_rate * static_cast<double>(spec.timesteps) < 10.0)
        throw ConfigError("synth_generate: need timesteps >= 100 and at least 10 expected "
                          "anomalous steps to honor the rate band");

    std::mt19937_64 rng(spec.seed);
    const std::size_t T = spec.timesteps, d = spec.features;

    std::vector<double> amp(d), period(d), phase(d);
    std::uniform_real_distribution<double> amp_d(0.5, 1.5), per_d(50.0, 200.0),
        ph_d(0.0, 2.0 * M_PI);
    for (std::size_t j = 0; j < d; ++j) {
        amp[j] = amp_d(rng);
        period[j] = per_d(rng);
        phase[j] = ph_d(rng);
    }
    const double noise_sigma = 0.1;

    SeriesTable table;
    table.timesteps = T;
    table.features = d;
    table.labels.assign(T, 0);
    table.values.resize(T * d);
    for (std::size_t j = 0; j < d; ++j)
        table.feature_names.push_back("f" + std::to_string(j));

    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < d; ++j)
            table.value(t, j) =
                amp[j] * std::sin(2.0 * M_PI * static_cast<double>(t) / period[j] + phase[j]) +
                noise_sigma * gauss(rng);

    // reference stds of the normal regime, before any injection
    std::vector<double> normal_std(d);
    std::vector<bool> all(T, true);
    for (std::size_t j = 0; j < d; ++j) normal_std[j] = detail::masked_mean_std(table, j, all).second;

    // contiguous anomalous segments until the target count is reached
    const long target = std::lround(spec.anomaly_rate * static_cast<double>(T));
    const long hard_cap = std::lround(1.15 * static_cast<double>(target));
    std::uniform_int_distribution<std::size_t> len_d(10, 40);
    std::uniform_int_distribution<std::size_t> start_d(0, T - 41);
    std::vector<bool> occupied(T, false);
    long total = 0;
    int attempts = 0;
    std::vector<std::pair<std::size_t, std::size_t>> segments;
    while (total < target && attempts < 100000) {
        ++attempts;
        std::size_t len = len_d(rng);
        if (total + static_cast<long>(len) > hard_cap)
            len = static_cast<std::size_t>(std::max(3l, target - total));
        const std::size_t start = start_d(rng);
        bool free = true;
        const std::size_t lo = start > 2 ? start - 2 : 0;
        const std::size_t hi = std::min(T, start + len + 2);
        for (std::size_t t = lo; t < hi; ++t)
            if (occupied[t]) {
                free = false;
                break;
            }
        if (!free) continue;
        for (std::size_t t = start; t < start + len; ++t) {
            occupied[t] = true;
            table.labels[t] = 1;
        }
        segments.emplace_back(start, len);
        total += static_cast<long>(len);
    }

    for (auto [start, len] : segments) {
        if (spec.kind == "mean_shift") {
            for (std::size_t t = start; t < start + len; ++t)
                for (std::size_t j = 0; j < d; ++j) table.value(t, j) += 5.0 * normal_std[j];
        } else if (spec.kind == "variance_burst") {
            for (std::size_t t = start; t < start + len; ++t)
                for (std::size_t j = 0; j < d; ++j)
                    table.value(t, j) += 6.0 * normal_std[j] * gauss(rng);
        } else {  // correlated_fault: two channels trade places, breaking
                  // cross-sensor structure while staying in range
            std::uniform_int_distribution<std::size_t> pick(0, d - 1);
            std::size_t a = pick(rng), b = pick(rng);
            if (d > 1)
                while (b == a) b = pick(rng);
            for (std::size_t t = start; t < start + len; ++t) {
                std::swap(table.value(t, a), table.value(t, b));
                for (std::size_t j = 0; j < d; ++j)
                    table.value(t, j) += 0.5 * normal_std[j] * gauss(rng);
            }
        }
    }
    return table;
}

// Contiguous non-overlapping slices covering the whole series; the last slice
// absorbs the remainder.
inline std::vector<SeriesTable> kfold_slices(const SeriesTable& table, std::size_t K,
                                             std::size_t min_len = 0) {
    if (K < 1) throw ConfigError("kfold_slices: K must be >= 1");
    const std::size_t base = table.timesteps / K;
    if (base == 0 || base < min_len)
        throw DataError("kfold_slices: slice length " + std::to_string(base) +
                        " shorter than required " + std::to_string(std::max<std::size_t>(min_len, 1)));
    std::vector<SeriesTable> out;
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t start = k * base;
        const std::size_t len = (k + 1 == K) ? table.timesteps - start : base;
        out.push_back(table.slice(start, len));
    }
    return out;
}

}  // namespace drsmt
