#pragma once

#include <algorithm>
#include <deque>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "drsmt/tensor.hpp"

// ============================================================================
// Reverse-mode differentiation kernel.
//
// A Tape records primitive ops during the forward pass; backward() replays
// them in reverse and accumulates gradients. Parameters live in a ParamSet
// and are deduplicated on the tape, so reusing a weight matrix across
// timesteps accumulates into a single gradient buffer.
//
// Gradient contract: backward() zeroes every touched gradient first and then
// writes fresh values. Calling it twice on the same tape yields the same
// gradients, never doubled ones.
// ============================================================================

namespace drsmt {

enum class Act { identity, tanh, relu, sigmoid, softplus };

inline double act_eval(Act a, double x) {
    switch (a) {
        case Act::identity: return x;
        case Act::tanh: return std::tanh(x);
        case Act::relu: return x > 0.0 ? x : 0.0;
        case Act::sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Act::softplus:
            // log(1+e^x), stable for large |x|
            return x > 30.0 ? x : std::log1p(std::exp(x));
    }
    return x;
}

struct Param {
    std::string name;
    Tensor2 value;
    Tensor2 grad;  // same shape as value

    Param(std::string n, Tensor2 val) : name(std::move(n)), value(std::move(val)) {
        grad = Tensor2::zeros(value.rows, value.cols);
    }
};

// Named parameter tensors plus matching gradient buffers. Addresses are
// stable once added (deque), so the tape can hold Param pointers.
class ParamSet {
public:
    int add(const std::string& name, Tensor2 init) {
        params_.emplace_back(name, std::move(init));
        return static_cast<int>(params_.size()) - 1;
    }

    Param& operator[](int idx) { return params_[static_cast<std::size_t>(idx)]; }
    const Param& operator[](int idx) const { return params_[static_cast<std::size_t>(idx)]; }

    Param* find(const std::string& name) {
        for (auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }

    std::size_t size() const { return params_.size(); }

    void zero_grads() {
        for (auto& p : params_) p.grad.fill(0.0);
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    // Copies values (not grads) from another set with identical layout.
    void copy_values_from(const ParamSet& other) {
        if (other.size() != size())
            throw DimensionError("ParamSet::copy_values_from: parameter count mismatch");
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (!params_[i].value.same_shape(other.params_[i].value))
                throw DimensionError("ParamSet::copy_values_from: shape mismatch for '" +
                                     params_[i].name + "'");
            params_[i].value.v = other.params_[i].value.v;
        }
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::deque<Param> params_;
};

class Tape {
public:
    using Id = int;

    enum class Op {
        leaf,        // constant or parameter
        matmul,      // a @ b
        add,         // a + b, same shape
        sub,         // a - b
        mul,         // a * b elementwise
        add_bias,    // a + row-broadcast b (1 x C)
        scale,       // a * s
        exp,         // elementwise exp
        activation,  // i0 holds the Act
        slice_cols,  // columns [i0, i1) of a
        mse,         // scalar mean squared error between a and b
        kl_std,      // scalar KL(N(mu, e^logvar) || N(0, I)), a=mu b=logvar
        add_scalar,  // a + b where both are 1x1
    };

    struct Node {
        Tensor2 val;
        Tensor2 grad;  // allocated lazily on first backward
        Op op = Op::leaf;
        Id a = -1, b = -1;
        int i0 = 0, i1 = 0;
        double s = 0.0;
        Param* param = nullptr;
    };

    bool empty() const { return nodes_.empty(); }
    std::size_t size() const { return nodes_.size(); }

    void reset() {
        nodes_.clear();
        param_ids_.clear();
    }

    const Tensor2& val(Id id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    const Tensor2& grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    Id constant(Tensor2 t) {
        Node n;
        n.val = std::move(t);
        return push(std::move(n));
    }

    // Parameters are deduplicated: the same Param appearing many times in a
    // forward pass maps to one node, so contributions accumulate naturally.
    Id param(Param& p) {
        auto it = param_ids_.find(&p);
        if (it != param_ids_.end()) return it->second;
        Node n;
        n.val = p.value;
        n.param = &p;
        Id id = push(std::move(n));
        param_ids_.emplace(&p, id);
        return id;
    }

    Id matmul(Id a, Id b) {
        const Tensor2& A = val(a);
        const Tensor2& B = val(b);
        if (A.cols != B.rows)
            throw DimensionError("matmul: inner dimensions " + A.shape_str() + " vs " +
                                 B.shape_str());
        Node n;
        n.op = Op::matmul;
        n.a = a;
        n.b = b;
        n.val = Tensor2::zeros(A.rows, B.cols);
        matmul_into(A, B, n.val);
        return push(std::move(n));
    }

    Id add(Id a, Id b) {
        require_same_shape(val(a), val(b), "add");
        Node n = elementwise(Op::add, a, b);
        for (std::size_t i = 0; i < n.val.size(); ++i) n.val.v[i] = val(a).v[i] + val(b).v[i];
        return push(std::move(n));
    }

    Id sub(Id a, Id b) {
        require_same_shape(val(a), val(b), "sub");
        Node n = elementwise(Op::sub, a, b);
        for (std::size_t i = 0; i < n.val.size(); ++i) n.val.v[i] = val(a).v[i] - val(b).v[i];
        return push(std::move(n));
    }

    Id mul(Id a, Id b) {
        require_same_shape(val(a), val(b), "mul");
        Node n = elementwise(Op::mul, a, b);
        for (std::size_t i = 0; i < n.val.size(); ++i) n.val.v[i] = val(a).v[i] * val(b).v[i];
        return push(std::move(n));
    }

    Id add_bias(Id a, Id bias) {
        const Tensor2& A = val(a);
        const Tensor2& B = val(bias);
        if (B.rows != 1 || B.cols != A.cols)
            throw DimensionError("add_bias: bias " + B.shape_str() + " does not broadcast over " +
                                 A.shape_str());
        Node n;
        n.op = Op::add_bias;
        n.a = a;
        n.b = bias;
        n.val = A;
        for (std::size_t i = 0; i < A.rows; ++i)
            for (std::size_t j = 0; j < A.cols; ++j) n.val(i, j) += B(0, j);
        return push(std::move(n));
    }

    Id scale(Id a, double s) {
        Node n;
        n.op = Op::scale;
        n.a = a;
        n.s = s;
        n.val = val(a);
        for (double& x : n.val.v) x *= s;
        return push(std::move(n));
    }

    Id exp(Id a) {
        Node n;
        n.op = Op::exp;
        n.a = a;
        n.val = val(a);
        for (double& x : n.val.v) x = std::exp(x);
        return push(std::move(n));
    }

    Id activation(Id a, Act act) {
        if (act == Act::identity) return a;
        Node n;
        n.op = Op::activation;
        n.a = a;
        n.i0 = static_cast<int>(act);
        n.val = val(a);
        for (double& x : n.val.v) x = act_eval(act, x);
        return push(std::move(n));
    }

    Id slice_cols(Id a, int c0, int c1) {
        const Tensor2& A = val(a);
        if (c0 < 0 || c1 > static_cast<int>(A.cols) || c0 >= c1)
            throw DimensionError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                                 ") invalid for " + A.shape_str());
        Node n;
        n.op = Op::slice_cols;
        n.a = a;
        n.i0 = c0;
        n.i1 = c1;
        n.val = Tensor2::zeros(A.rows, static_cast<std::size_t>(c1 - c0));
        for (std::size_t i = 0; i < A.rows; ++i)
            for (int j = c0; j < c1; ++j) n.val(i, static_cast<std::size_t>(j - c0)) = A(i, j);
        return push(std::move(n));
    }

    // Mean over all elements of squared difference.
    Id mse(Id pred, Id target) {
        require_same_shape(val(pred), val(target), "mse_loss");
        Node n;
        n.op = Op::mse;
        n.a = pred;
        n.b = target;
        double acc = 0.0;
        const Tensor2& P = val(pred);
        const Tensor2& T = val(target);
        for (std::size_t i = 0; i < P.size(); ++i) {
            double d = P.v[i] - T.v[i];
            acc += d * d;
        }
        n.val = Tensor2(1, 1, std::vector<double>{acc / static_cast<double>(P.size())});
        return push(std::move(n));
    }

    // -1/2 sum_dims(1 + logvar - mu^2 - e^logvar), averaged over batch rows.
    Id kl_std_normal(Id mu, Id logvar) {
        require_same_shape(val(mu), val(logvar), "kl_standard_normal");
        Node n;
        n.op = Op::kl_std;
        n.a = mu;
        n.b = logvar;
        const Tensor2& M = val(mu);
        const Tensor2& L = val(logvar);
        double acc = 0.0;
        for (std::size_t i = 0; i < M.size(); ++i)
            acc += 1.0 + L.v[i] - M.v[i] * M.v[i] - std::exp(L.v[i]);
        n.val = Tensor2(1, 1, std::vector<double>{-0.5 * acc / static_cast<double>(M.rows)});
        return push(std::move(n));
    }

    Id add_scalar(Id a, Id b) {
        if (val(a).size() != 1 || val(b).size() != 1)
            throw DimensionError("add_scalar: operands must be 1x1");
        Node n;
        n.op = Op::add_scalar;
        n.a = a;
        n.b = b;
        n.val = Tensor2(1, 1, std::vector<double>{val(a).v[0] + val(b).v[0]});
        return push(std::move(n));
    }

    // Populates the gradient buffers of every parameter reachable from loss.
    void backward(Id loss) {
        if (nodes_.empty()) throw TrainingError("backward: empty tape (no forward recorded)");
        Node& ln = nodes_[static_cast<std::size_t>(loss)];
        if (ln.val.size() != 1)
            throw DimensionError("backward: loss must be scalar, got " + ln.val.shape_str());

        for (auto& n : nodes_) {
            if (n.grad.size() != n.val.size())
                n.grad = Tensor2::zeros(n.val.rows, n.val.cols);
            else
                n.grad.fill(0.0);
        }
        ln.grad.v[0] = 1.0;

        for (std::size_t k = nodes_.size(); k-- > 0;) backprop_node(nodes_[k]);

        // zero-then-write into parameter buffers
        for (auto& [p, id] : param_ids_) p->grad.v = nodes_[static_cast<std::size_t>(id)].grad.v;
    }

private:
    std::vector<Node> nodes_;
    std::unordered_map<Param*, Id> param_ids_;

    Id push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size()) - 1;
    }

    Node elementwise(Op op, Id a, Id b) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.val = Tensor2::zeros(val(a).rows, val(a).cols);
        return n;
    }

    Tensor2& gbuf(Id id) { return nodes_[static_cast<std::size_t>(id)].grad; }

    // C += A @ B, blocked over k for contiguous inner loops
    static void matmul_into(const Tensor2& A, const Tensor2& B, Tensor2& C) {
        const std::size_t n = A.rows, m = A.cols, p = B.cols;
        for (std::size_t i = 0; i < n; ++i) {
            const double* arow = A.row(i);
            double* crow = C.row(i);
            for (std::size_t k = 0; k < m; ++k) {
                const double a = arow[k];
                if (a == 0.0) continue;
                const double* brow = B.row(k);
                for (std::size_t j = 0; j < p; ++j) crow[j] += a * brow[j];
            }
        }
    }

    void backprop_node(Node& n) {
        switch (n.op) {
            case Op::leaf: return;
            case Op::matmul: {
                const Tensor2& A = val(n.a);
                const Tensor2& B = val(n.b);
                Tensor2& dA = gbuf(n.a);
                Tensor2& dB = gbuf(n.b);
                const Tensor2& dC = n.grad;
                // dA += dC @ B^T
                for (std::size_t i = 0; i < A.rows; ++i) {
                    const double* dcrow = dC.row(i);
                    double* darow = dA.row(i);
                    for (std::size_t k = 0; k < A.cols; ++k) {
                        const double* brow = B.row(k);
                        double acc = 0.0;
                        for (std::size_t j = 0; j < B.cols; ++j) acc += dcrow[j] * brow[j];
                        darow[k] += acc;
                    }
                }
                // dB += A^T @ dC
                for (std::size_t i = 0; i < A.rows; ++i) {
                    const double* arow = A.row(i);
                    const double* dcrow = dC.row(i);
                    for (std::size_t k = 0; k < A.cols; ++k) {
                        const double a = arow[k];
                        if (a == 0.0) continue;
                        double* dbrow = dB.row(k);
                        for (std::size_t j = 0; j < B.cols; ++j) dbrow[j] += a * dcrow[j];
                    }
                }
                return;
            }
            case Op::add: {
                accumulate(n.a, n.grad, 1.0);
                accumulate(n.b, n.grad, 1.0);
                return;
            }
            case Op::sub: {
                accumulate(n.a, n.grad, 1.0);
                accumulate(n.b, n.grad, -1.0);
                return;
            }
            case Op::mul: {
                Tensor2& dA = gbuf(n.a);
                Tensor2& dB = gbuf(n.b);
                const Tensor2& A = val(n.a);
                const Tensor2& B = val(n.b);
                for (std::size_t i = 0; i < n.grad.size(); ++i) {
                    dA.v[i] += n.grad.v[i] * B.v[i];
                    dB.v[i] += n.grad.v[i] * A.v[i];
                }
                return;
            }
            case Op::add_bias: {
                accumulate(n.a, n.grad, 1.0);
                Tensor2& dB = gbuf(n.b);
                for (std::size_t i = 0; i < n.grad.rows; ++i)
                    for (std::size_t j = 0; j < n.grad.cols; ++j) dB(0, j) += n.grad(i, j);
                return;
            }
            case Op::scale: {
                accumulate(n.a, n.grad, n.s);
                return;
            }
            case Op::exp: {
                Tensor2& dA = gbuf(n.a);
                for (std::size_t i = 0; i < n.grad.size(); ++i)
                    dA.v[i] += n.grad.v[i] * n.val.v[i];
                return;
            }
            case Op::activation: {
                Tensor2& dA = gbuf(n.a);
                const Tensor2& X = val(n.a);
                const Act act = static_cast<Act>(n.i0);
                for (std::size_t i = 0; i < n.grad.size(); ++i) {
                    double d;
                    switch (act) {
                        case Act::tanh: d = 1.0 - n.val.v[i] * n.val.v[i]; break;
                        case Act::relu: d = X.v[i] > 0.0 ? 1.0 : 0.0; break;
                        case Act::sigmoid: d = n.val.v[i] * (1.0 - n.val.v[i]); break;
                        case Act::softplus: d = 1.0 / (1.0 + std::exp(-X.v[i])); break;
                        default: d = 1.0; break;
                    }
                    dA.v[i] += n.grad.v[i] * d;
                }
                return;
            }
            case Op::slice_cols: {
                Tensor2& dA = gbuf(n.a);
                for (std::size_t i = 0; i < n.grad.rows; ++i)
                    for (std::size_t j = 0; j < n.grad.cols; ++j)
                        dA(i, static_cast<std::size_t>(n.i0) + j) += n.grad(i, j);
                return;
            }
            case Op::mse: {
                const double g = n.grad.v[0];
                const Tensor2& P = val(n.a);
                const Tensor2& T = val(n.b);
                Tensor2& dP = gbuf(n.a);
                Tensor2& dT = gbuf(n.b);
                const double c = 2.0 / static_cast<double>(P.size());
                for (std::size_t i = 0; i < P.size(); ++i) {
                    const double d = c * (P.v[i] - T.v[i]) * g;
                    dP.v[i] += d;
                    dT.v[i] -= d;
                }
                return;
            }
            case Op::kl_std: {
                const double g = n.grad.v[0];
                const Tensor2& M = val(n.a);
                const Tensor2& L = val(n.b);
                Tensor2& dM = gbuf(n.a);
                Tensor2& dL = gbuf(n.b);
                const double c = g / static_cast<double>(M.rows);
                for (std::size_t i = 0; i < M.size(); ++i) {
                    dM.v[i] += c * M.v[i];
                    dL.v[i] += c * 0.5 * (std::exp(L.v[i]) - 1.0);
                }
                return;
            }
            case Op::add_scalar: {
                gbuf(n.a).v[0] += n.grad.v[0];
                gbuf(n.b).v[0] += n.grad.v[0];
                return;
            }
        }
    }

    void accumulate(Id target, const Tensor2& g, double s) {
        Tensor2& dst = gbuf(target);
        for (std::size_t i = 0; i < g.size(); ++i) dst.v[i] += s * g.v[i];
    }
};

// ----------------------------------------------------------------------------
// Layer building blocks
// ----------------------------------------------------------------------------

// activation(x @ W + b); W is (in x out), b is (1 x out).
inline Tape::Id dense_forward(Tape& tape, Param& w, Param& b, Tape::Id x, Act act) {
    const Tensor2& X = tape.val(x);
    if (X.cols != w.value.rows)
        throw DimensionError("dense_forward: input " + X.shape_str() + " vs weight " +
                             w.value.shape_str());
    Tape::Id y = tape.add_bias(tape.matmul(x, tape.param(w)), tape.param(b));
    return tape.activation(y, act);
}

// Gate matrices are packed [input, forget, candidate, output] along columns:
// wx is (in x 4H), wh is (H x 4H), b is (1 x 4H).
struct LstmCell {
    int wx = -1, wh = -1, b = -1;  // indices into the owning ParamSet
    std::size_t input = 0, hidden = 0;
};

inline std::pair<Tape::Id, Tape::Id> lstm_step(Tape& tape, ParamSet& params, const LstmCell& cell,
                                               Tape::Id x_t, Tape::Id h_prev, Tape::Id c_prev) {
    const std::size_t H = cell.hidden;
    const Tensor2& X = tape.val(x_t);
    const Tensor2& Hp = tape.val(h_prev);
    const Tensor2& Cp = tape.val(c_prev);
    if (X.cols != cell.input || Hp.cols != H || Cp.cols != H || Hp.rows != X.rows ||
        Cp.rows != X.rows)
        throw DimensionError("lstm_step: inconsistent shapes x" + X.shape_str() + " h" +
                             Hp.shape_str() + " c" + Cp.shape_str());

    Tape::Id z = tape.add_bias(
        tape.add(tape.matmul(x_t, tape.param(params[cell.wx])),
                 tape.matmul(h_prev, tape.param(params[cell.wh]))),
        tape.param(params[cell.b]));
    const int h = static_cast<int>(H);
    Tape::Id ig = tape.activation(tape.slice_cols(z, 0, h), Act::sigmoid);
    Tape::Id fg = tape.activation(tape.slice_cols(z, h, 2 * h), Act::sigmoid);
    Tape::Id gg = tape.activation(tape.slice_cols(z, 2 * h, 3 * h), Act::tanh);
    Tape::Id og = tape.activation(tape.slice_cols(z, 3 * h, 4 * h), Act::sigmoid);

    Tape::Id c_t = tape.add(tape.mul(fg, c_prev), tape.mul(ig, gg));
    Tape::Id h_t = tape.mul(og, tape.activation(c_t, Act::tanh));
    return {h_t, c_t};
}

// z = mu + exp(logvar / 2) * noise; noise is caller-supplied (seeded outside).
inline Tape::Id reparameterize(Tape& tape, Tape::Id mu, Tape::Id logvar, Tape::Id noise) {
    require_same_shape(tape.val(mu), tape.val(logvar), "reparameterize");
    require_same_shape(tape.val(mu), tape.val(noise), "reparameterize(noise)");
    return tape.add(mu, tape.mul(tape.exp(tape.scale(logvar, 0.5)), noise));
}

// ----------------------------------------------------------------------------
// Tape-free inference paths (hot loops: action selection, penalties, eval).
// Must agree with the taped forward bit-for-bit; tests enforce this.
// ----------------------------------------------------------------------------

// A @ B with the same loop order as the taped matmul, so both paths round
// identically.
inline Tensor2 matmul_eval(const Tensor2& A, const Tensor2& B) {
    if (A.cols != B.rows)
        throw DimensionError("matmul: inner dimensions " + A.shape_str() + " vs " +
                             B.shape_str());
    Tensor2 C(A.rows, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* arow = A.row(i);
        double* crow = C.row(i);
        for (std::size_t k = 0; k < A.cols; ++k) {
            const double a = arow[k];
            if (a == 0.0) continue;
            const double* brow = B.row(k);
            for (std::size_t j = 0; j < B.cols; ++j) crow[j] += a * brow[j];
        }
    }
    return C;
}

inline Tensor2 dense_eval(const Param& w, const Param& b, const Tensor2& x, Act act) {
    Tensor2 y = matmul_eval(x, w.value);
    for (std::size_t i = 0; i < y.rows; ++i) {
        double* yrow = y.row(i);
        for (std::size_t j = 0; j < y.cols; ++j) yrow[j] = act_eval(act, yrow[j] + b.value(0, j));
    }
    return y;
}

inline void lstm_eval_step(const ParamSet& params, const LstmCell& cell, const Tensor2& x_t,
                           Tensor2& h, Tensor2& c) {
    const std::size_t H = cell.hidden;
    const Tensor2& b = params[cell.b].value;
    const std::size_t rows = x_t.rows;
    Tensor2 zx = matmul_eval(x_t, params[cell.wx].value);
    Tensor2 zh = matmul_eval(h, params[cell.wh].value);
    Tensor2 z(rows, 4 * H);
    for (std::size_t i = 0; i < rows; ++i) {
        double* zrow = z.row(i);
        const double* zxr = zx.row(i);
        const double* zhr = zh.row(i);
        for (std::size_t j = 0; j < 4 * H; ++j) zrow[j] = (zxr[j] + zhr[j]) + b(0, j);
    }
    for (std::size_t i = 0; i < rows; ++i) {
        const double* zrow = z.row(i);
        double* hrow = h.row(i);
        double* crow = c.row(i);
        for (std::size_t j = 0; j < H; ++j) {
            const double ig = act_eval(Act::sigmoid, zrow[j]);
            const double fg = act_eval(Act::sigmoid, zrow[H + j]);
            const double gg = std::tanh(zrow[2 * H + j]);
            const double og = act_eval(Act::sigmoid, zrow[3 * H + j]);
            crow[j] = fg * crow[j] + ig * gg;
            hrow[j] = og * std::tanh(crow[j]);
        }
    }
}

// Plain scalar loss helpers mirroring the taped versions.
inline double mse_loss(const Tensor2& pred, const Tensor2& target) {
    require_same_shape(pred, target, "mse_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.v[i] - target.v[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

inline double kl_standard_normal(const Tensor2& mu, const Tensor2& logvar) {
    require_same_shape(mu, logvar, "kl_standard_normal");
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i)
        acc += 1.0 + logvar.v[i] - mu.v[i] * mu.v[i] - std::exp(logvar.v[i]);
    return -0.5 * acc / static_cast<double>(mu.rows);
}

}  // namespace drsmt
