#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace drsmt {

// Error hierarchy; the CLI maps these to exit codes.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Rows are samples/timesteps, cols are
// features/units throughout the library.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}
    Tensor2(std::size_t r, std::size_t c, std::vector<double> data)
        : rows(r), cols(c), v(std::move(data)) {
        if (v.size() != rows * cols)
            throw DimensionError("Tensor2: data size " + std::to_string(v.size()) +
                                 " does not match " + shape_str(rows, cols));
    }

    double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }

    double& at(std::size_t i, std::size_t j) {
        if (i >= rows || j >= cols)
            throw DimensionError("Tensor2::at(" + std::to_string(i) + "," + std::to_string(j) +
                                 ") out of range for " + shape_str(rows, cols));
        return v[i * cols + j];
    }

    std::size_t size() const { return v.size(); }
    bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }

    double* row(std::size_t i) { return v.data() + i * cols; }
    const double* row(std::size_t i) const { return v.data() + i * cols; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    static Tensor2 zeros(std::size_t r, std::size_t c) { return Tensor2(r, c, 0.0); }

    static Tensor2 full(std::size_t r, std::size_t c, double x) { return Tensor2(r, c, x); }

    static Tensor2 identity(std::size_t n) {
        Tensor2 t(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    // Uniform in [-scale, scale]; used for fan-in scaled initialization.
    static Tensor2 uniform(std::size_t r, std::size_t c, double scale, std::mt19937_64& rng) {
        Tensor2 t(r, c);
        std::uniform_real_distribution<double> dist(-scale, scale);
        for (double& x : t.v) x = dist(rng);
        return t;
    }

    static std::string shape_str(std::size_t r, std::size_t c) {
        return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
    }
    std::string shape_str() const { return shape_str(rows, cols); }
};

inline void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
}

}  // namespace drsmt
