#pragma once

#include <utility>

#include "drsmt/data.hpp"
#include "drsmt/tensor.hpp"
#include "drsmt/vae.hpp"

// ============================================================================
// Sliding-window MDP. The cursor marks the final timestep of the current
// window; each step advances it by one, and the decision taken is scored
// against the label and penalty at the NEW cursor. A series of length T
// therefore yields T - n_steps decisions, covering timesteps n_steps..T-1.
// ============================================================================

namespace drsmt {

// Appends a constant indicator column (the agent's previous action) to a
// window, giving the n_steps x (d+1) network input.
inline Tensor2 augment(const Tensor2& window, int action_bit) {
    Tensor2 out(window.rows, window.cols + 1);
    for (std::size_t i = 0; i < window.rows; ++i) {
        const double* src = window.row(i);
        double* dst = out.row(i);
        for (std::size_t j = 0; j < window.cols; ++j) dst[j] = src[j];
        dst[window.cols] = static_cast<double>(action_bit);
    }
    return out;
}

struct EnvState {
    std::size_t t = 0;  // final timestep covered by the window
    Tensor2 window;     // n_steps x d
    Tensor2 s0;         // window augmented with indicator 0
    Tensor2 s1;         // window augmented with indicator 1
};

struct StepOutcome {
    Tensor2 s0_next;
    Tensor2 s1_next;
    int y = 0;        // true label at the new final timestep
    bool done = false;
};

class WindowEnv {
public:
    WindowEnv(SeriesTable table, PenaltyArray penalty, std::size_t n_steps)
        : n_steps_(n_steps) {
        bind(std::move(table), std::move(penalty));
    }

    // Rebinds the environment to a slice; penalties must already be re-based
    // to the slice origin.
    void load_slice(SeriesTable slice, PenaltyArray penalty_slice) {
        bind(std::move(slice), std::move(penalty_slice));
    }

    EnvState reset() { return reset_at(n_steps_ - 1); }

    // Warm-up seeding can start an episode at any valid cursor.
    EnvState reset_at(std::size_t cursor) {
        if (table_.timesteps < n_steps_ + 1)
            throw DataError("WindowEnv::reset: series length " +
                            std::to_string(table_.timesteps) + " too short for window " +
                            std::to_string(n_steps_));
        if (cursor < n_steps_ - 1 || cursor + 1 >= table_.timesteps)
            throw DataError("WindowEnv::reset_at: cursor " + std::to_string(cursor) +
                            " out of range");
        cursor_ = cursor;
        done_ = false;
        return state_at(cursor_);
    }

    StepOutcome step(int action) {
        (void)action;  // transitions do not depend on the action taken
        if (done_) throw TrainingError("WindowEnv::step: episode already finished");
        ++cursor_;
        StepOutcome out;
        Tensor2 w = window_ending_at(cursor_);
        out.s0_next = augment(w, 0);
        out.s1_next = augment(w, 1);
        out.y = table_.labels[cursor_];
        done_ = cursor_ + 1 >= table_.timesteps || cursor_ + 1 >= table_.labels.size();
        out.done = done_;
        return out;
    }

    bool done() const { return done_; }
    std::size_t cursor() const { return cursor_; }
    std::size_t n_steps() const { return n_steps_; }
    std::size_t length() const { return table_.timesteps; }
    std::size_t decisions() const { return table_.timesteps - n_steps_; }
    std::size_t feature_count() const { return table_.features; }
    const SeriesTable& table() const { return table_; }
    const PenaltyArray& penalty() const { return penalty_; }
    double penalty_at(std::size_t t) const { return penalty_.p[t]; }
    int label_at(std::size_t t) const { return table_.labels[t]; }

    Tensor2 window_ending_at(std::size_t t) const {
        Tensor2 w(n_steps_, table_.features);
        const std::size_t start = t + 1 - n_steps_;
        std::copy(table_.row(start), table_.row(start) + n_steps_ * table_.features,
                  w.v.begin());
        return w;
    }

    EnvState state_at(std::size_t t) const {
        EnvState s;
        s.t = t;
        s.window = window_ending_at(t);
        s.s0 = augment(s.window, 0);
        s.s1 = augment(s.window, 1);
        return s;
    }

private:
    SeriesTable table_;
    PenaltyArray penalty_;
    std::size_t n_steps_;
    std::size_t cursor_ = 0;
    bool done_ = true;

    void bind(SeriesTable table, PenaltyArray penalty) {
        if (table.timesteps < n_steps_ + 1)
            throw DataError("WindowEnv: series length " + std::to_string(table.timesteps) +
                            " too short for window " + std::to_string(n_steps_) + " (need " +
                            std::to_string(n_steps_ + 1) + ")");
        if (penalty.p.size() != table.timesteps)
            throw DimensionError("WindowEnv: penalty array length " +
                                 std::to_string(penalty.p.size()) + " vs series length " +
                                 std::to_string(table.timesteps));
        table_ = std::move(table);
        penalty_ = std::move(penalty);
        cursor_ = 0;
        done_ = true;
    }
};

}  // namespace drsmt
