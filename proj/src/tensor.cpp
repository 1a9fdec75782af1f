#include "savage/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <utility>

namespace savage::ad {

namespace {

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const EigenRowMajor>;
using Map = Eigen::Map<EigenRowMajor>;

MapConst as_eigen(const Matrix& m) { return MapConst(m.data.data(), m.rows, m.cols); }
Map as_eigen(Matrix& m) { return Map(m.data.data(), m.rows, m.cols); }

// C = A * B
Matrix matmul_values(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows, b.cols);
    as_eigen(c).noalias() = as_eigen(a) * as_eigen(b);
    return c;
}

// C += A * B^T
void add_matmul_bt(Matrix& c, const Matrix& a, const Matrix& b) {
    as_eigen(c).noalias() += as_eigen(a) * as_eigen(b).transpose();
}

// C += A^T * B
void add_matmul_at(Matrix& c, const Matrix& a, const Matrix& b) {
    as_eigen(c).noalias() += as_eigen(a).transpose() * as_eigen(b);
}

double stable_sigmoid(double x) {
    double y;
    if (x >= 0.0) {
        y = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        y = e / (1.0 + e);
    }
    // keep the output strictly inside (0,1) even under saturation
    constexpr double tiny = 1e-15;
    return y < tiny ? tiny : (y > 1.0 - tiny ? 1.0 - tiny : y);
}

}  // namespace

// -- Tensor ----------------------------------------------------------------

int Tensor::rows() const { return value().rows; }
int Tensor::cols() const { return value().cols; }

const Matrix& Tensor::value() const {
    if (!tape_) throw ContractError("Tensor: empty handle");
    return tape_->nodes_[node_].value;
}

bool Tensor::requires_grad() const {
    if (!tape_) throw ContractError("Tensor: empty handle");
    return tape_->nodes_[node_].requires_grad;
}

const Matrix& Tensor::grad() const {
    if (!tape_) throw ContractError("Tensor: empty handle");
    const auto& node = tape_->nodes_[node_];
    if (!node.requires_grad)
        throw ContractError("Tensor::grad: tensor does not require grad");
    if (!node.grad_ready)
        throw ContractError("Tensor::grad: backward has not run");
    return node.grad;
}

// -- Tape ------------------------------------------------------------------

void Tape::check_open() const {
    if (consumed_) throw ContractError("Tape: already consumed by backward");
}

void Tape::check_same_tape(Tensor t) const {
    if (t.tape_ != this) throw ContractError("Tape: tensor belongs to another tape");
}

int Tape::push_node(Matrix value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::record(int out, std::vector<int> inputs, std::function<void()> rule) {
    ops_.push_back(OpRecord{out, std::move(inputs), std::move(rule)});
}

Matrix& Tape::grad_buf(int node) {
    Node& n = nodes_[node];
    if (!n.grad_ready) {
        n.grad = Matrix::zeros(n.value.rows, n.value.cols);
        n.grad_ready = true;
    }
    return n.grad;
}

Tensor Tape::leaf(Matrix value, bool requires_grad) {
    check_open();
    return Tensor(this, push_node(std::move(value), requires_grad));
}

Tensor Tape::matmul(Tensor a, Tensor b) {
    check_open();
    check_same_tape(a);
    check_same_tape(b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.cols != bv.rows)
        throw DimensionError("matmul: inner dimensions disagree");
    const bool track = a.requires_grad() || b.requires_grad();
    const int out = push_node(matmul_values(av, bv), track);
    if (track) {
        record(out, {a.node_, b.node_}, [this, out, ai = a.node_, bi = b.node_] {
            const Matrix& g = nodes_[out].grad;
            if (nodes_[ai].requires_grad) add_matmul_bt(grad_buf(ai), g, nodes_[bi].value);
            if (nodes_[bi].requires_grad) add_matmul_at(grad_buf(bi), nodes_[ai].value, g);
        });
    }
    return Tensor(this, out);
}

namespace {
void check_binary_shapes(const Matrix& a, const Matrix& b, const char* name) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(name) + ": operand shapes disagree");
}
}  // namespace

Tensor Tape::add(Tensor a, Tensor b) {
    check_open();
    check_same_tape(a);
    check_same_tape(b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    check_binary_shapes(av, bv, "add");
    Matrix v = av;
    for (size_t i = 0; i < v.size(); ++i) v.data[i] += bv.data[i];
    const bool track = a.requires_grad() || b.requires_grad();
    const int out = push_node(std::move(v), track);
    if (track) {
        record(out, {a.node_, b.node_}, [this, out, ai = a.node_, bi = b.node_] {
            const Matrix& g = nodes_[out].grad;
            if (nodes_[ai].requires_grad) {
                Matrix& ga = grad_buf(ai);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
            }
            if (nodes_[bi].requires_grad) {
                Matrix& gb = grad_buf(bi);
                for (size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
            }
        });
    }
    return Tensor(this, out);
}

Tensor Tape::sub(Tensor a, Tensor b) {
    check_open();
    check_same_tape(a);
    check_same_tape(b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    check_binary_shapes(av, bv, "sub");
    Matrix v = av;
    for (size_t i = 0; i < v.size(); ++i) v.data[i] -= bv.data[i];
    const bool track = a.requires_grad() || b.requires_grad();
    const int out = push_node(std::move(v), track);
    if (track) {
        record(out, {a.node_, b.node_}, [this, out, ai = a.node_, bi = b.node_] {
            const Matrix& g = nodes_[out].grad;
            if (nodes_[ai].requires_grad) {
                Matrix& ga = grad_buf(ai);
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
            }
            if (nodes_[bi].requires_grad) {
                Matrix& gb = grad_buf(bi);
                for (size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
            }
        });
    }
    return Tensor(this, out);
}

Tensor Tape::hadamard(Tensor a, Tensor b) {
    check_open();
    check_same_tape(a);
    check_same_tape(b);
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    check_binary_shapes(av, bv, "hadamard");
    Matrix v = av;
    for (size_t i = 0; i < v.size(); ++i) v.data[i] *= bv.data[i];
    const bool track = a.requires_grad() || b.requires_grad();
    const int out = push_node(std::move(v), track);
    if (track) {
        record(out, {a.node_, b.node_}, [this, out, ai = a.node_, bi = b.node_] {
            const Matrix& g = nodes_[out].grad;
            if (nodes_[ai].requires_grad) {
                Matrix& ga = grad_buf(ai);
                const Matrix& bvv = nodes_[bi].value;
                for (size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * bvv.data[i];
            }
            if (nodes_[bi].requires_grad) {
                Matrix& gb = grad_buf(bi);
                const Matrix& avv = nodes_[ai].value;
                for (size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * avv.data[i];
            }
        });
    }
    return Tensor(this, out);
}

Tensor Tape::add_row_vector(Tensor m, Tensor row) {
    check_open();
    check_same_tape(m);
    check_same_tape(row);
    const Matrix& mv = m.value();
    const Matrix& rv = row.value();
    if (rv.rows != 1 || rv.cols != mv.cols)
        throw DimensionError("add_row_vector: row must be 1 x cols(m)");
    Matrix v = mv;
    for (int i = 0; i < v.rows; ++i)
        for (int j = 0; j < v.cols; ++j) v.at(i, j) += rv.at(0, j);
    const bool track = m.requires_grad() || row.requires_grad();
    const int out = push_node(std::move(v), track);
    if (track) {
        record(out, {m.node_, row.node_}, [this, out, mi = m.node_, ri = row.node_] {
            const Matrix& g = nodes_[out].grad;
            if (nodes_[mi].requires_grad) {
                Matrix& gm = grad_buf(mi);
                for (size_t i = 0; i < g.size(); ++i) gm.data[i] += g.data[i];
            }
            if (nodes_[ri].requires_grad) {
                Matrix& gr = grad_buf(ri);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < g.cols; ++j) gr.at(0, j) += g.at(i, j);
            }
        });
    }
    return Tensor(this, out);
}

Tensor Tape::unary_elementwise(Tensor a, const char* /*name*/,
                               const std::function<double(double)>& fwd,
                               const std::function<double(double, double)>& dfdx) {
    check_open();
    check_same_tape(a);
    const Matrix& av = a.value();
    Matrix v(av.rows, av.cols);
    for (size_t i = 0; i < v.size(); ++i) v.data[i] = fwd(av.data[i]);
    const bool track = a.requires_grad();
    const int out = push_node(std::move(v), track);
    if (track) {
        record(out, {a.node_}, [this, out, ai = a.node_, dfdx] {
            const Matrix& g = nodes_[out].grad;
            const Matrix& x = nodes_[ai].value;
            const Matrix& y = nodes_[out].value;
            Matrix& ga = grad_buf(ai);
            for (size_t i = 0; i < g.size(); ++i)
                ga.data[i] += g.data[i] * dfdx(x.data[i], y.data[i]);
        });
    }
    return Tensor(this, out);
}

Tensor Tape::sigmoid(Tensor a) {
    return unary_elementwise(
        a, "sigmoid", [](double x) { return stable_sigmoid(x); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor Tape::tanh(Tensor a) {
    return unary_elementwise(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor Tape::relu(Tensor a) {
    return unary_elementwise(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor Tape::log(Tensor a) {
    for (double x : a.value().data)
        if (!(x > 0.0)) throw DomainError("log: non-positive entry");
    return unary_elementwise(
        a, "log", [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

Tensor Tape::clamp01(Tensor a) {
    return unary_elementwise(
        a, "clamp01", [](double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); },
        [](double x, double) { return (x > 0.0 && x < 1.0) ? 1.0 : 0.0; });
}

Tensor Tape::clamp_min(Tensor a, double floor) {
    return unary_elementwise(
        a, "clamp_min", [floor](double x) { return x < floor ? floor : x; },
        [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor Tape::scale(Tensor a, double c) {
    return unary_elementwise(
        a, "scale", [c](double x) { return c * x; },
        [c](double, double) { return c; });
}

Tensor Tape::sum(Tensor a) {
    check_open();
    check_same_tape(a);
    double s = 0.0;
    for (double x : a.value().data) s += x;
    const bool track = a.requires_grad();
    const int out = push_node(Matrix::filled(1, 1, s), track);
    if (track) {
        record(out, {a.node_}, [this, out, ai = a.node_] {
            const double g = nodes_[out].grad.data[0];
            Matrix& ga = grad_buf(ai);
            for (double& v : ga.data) v += g;
        });
    }
    return Tensor(this, out);
}

Tensor Tape::l1_norm(Tensor a) {
    check_open();
    check_same_tape(a);
    double s = 0.0;
    for (double x : a.value().data) s += std::abs(x);
    const bool track = a.requires_grad();
    const int out = push_node(Matrix::filled(1, 1, s), track);
    if (track) {
        record(out, {a.node_}, [this, out, ai = a.node_] {
            const double g = nodes_[out].grad.data[0];
            const Matrix& x = nodes_[ai].value;
            Matrix& ga = grad_buf(ai);
            for (size_t i = 0; i < x.size(); ++i) {
                const double v = x.data[i];
                if (v > 0.0)
                    ga.data[i] += g;
                else if (v < 0.0)
                    ga.data[i] -= g;
            }
        });
    }
    return Tensor(this, out);
}

Tensor Tape::row_normalize(Tensor a) {
    check_open();
    check_same_tape(a);
    const Matrix& av = a.value();
    std::vector<double> row_sums(av.rows, 0.0);
    for (int i = 0; i < av.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < av.cols; ++j) s += av.at(i, j);
        if (!(s > 0.0)) throw DomainError("row_normalize: non-positive row sum");
        row_sums[i] = s;
    }
    Matrix v(av.rows, av.cols);
    for (int i = 0; i < av.rows; ++i)
        for (int j = 0; j < av.cols; ++j) v.at(i, j) = av.at(i, j) / row_sums[i];
    const bool track = a.requires_grad();
    const int out = push_node(std::move(v), track);
    if (track) {
        record(out, {a.node_}, [this, out, ai = a.node_, row_sums] {
            // y_ij = x_ij / s_i with s_i the row sum:
            // dL/dx_ik = (g_ik - sum_j g_ij y_ij) / s_i
            const Matrix& g = nodes_[out].grad;
            const Matrix& y = nodes_[out].value;
            Matrix& ga = grad_buf(ai);
            for (int i = 0; i < g.rows; ++i) {
                double dot = 0.0;
                for (int j = 0; j < g.cols; ++j) dot += g.at(i, j) * y.at(i, j);
                const double inv = 1.0 / row_sums[i];
                for (int j = 0; j < g.cols; ++j)
                    ga.at(i, j) += (g.at(i, j) - dot) * inv;
            }
        });
    }
    return Tensor(this, out);
}

Tensor Tape::gather_rows(Tensor a, std::vector<int> index) {
    check_open();
    check_same_tape(a);
    const Matrix& av = a.value();
    for (int r : index)
        if (r < 0 || r >= av.rows) throw ContractError("gather_rows: index out of range");
    Matrix v(static_cast<int>(index.size()), av.cols);
    for (size_t k = 0; k < index.size(); ++k)
        for (int j = 0; j < av.cols; ++j) v.at(static_cast<int>(k), j) = av.at(index[k], j);
    const bool track = a.requires_grad();
    const int out = push_node(std::move(v), track);
    if (track) {
        record(out, {a.node_}, [this, out, ai = a.node_, index = std::move(index)] {
            const Matrix& g = nodes_[out].grad;
            Matrix& ga = grad_buf(ai);
            for (size_t k = 0; k < index.size(); ++k)
                for (int j = 0; j < g.cols; ++j)
                    ga.at(index[k], j) += g.at(static_cast<int>(k), j);
        });
    }
    return Tensor(this, out);
}

Tensor Tape::incident_max(Tensor a, int n_tail) {
    check_open();
    check_same_tape(a);
    const Matrix& av = a.value();
    if (av.rows != av.cols) throw DimensionError("incident_max: matrix must be square");
    if (n_tail < 1 || n_tail > av.rows)
        throw ContractError("incident_max: n_tail out of range");
    const int n = av.rows;
    const int start = n - n_tail;

    Matrix v(1, n_tail);
    // argmax per tail node, encoded as a flat cell index; -1 when the max is 0
    std::vector<long> argmax(n_tail, -1);
    for (int k = 0; k < n_tail; ++k) {
        const int u = start + k;
        double best = 0.0;
        long best_cell = -1;
        for (int j = 0; j < n; ++j) {
            const double x = av.at(u, j);
            if (x > best) {
                best = x;
                best_cell = static_cast<long>(u) * n + j;
            }
        }
        for (int i = 0; i < n; ++i) {
            const double x = av.at(i, u);
            if (x > best) {
                best = x;
                best_cell = static_cast<long>(i) * n + u;
            }
        }
        v.at(0, k) = best;
        argmax[k] = best_cell;
    }
    const bool track = a.requires_grad();
    const int out = push_node(std::move(v), track);
    if (track) {
        record(out, {a.node_}, [this, out, ai = a.node_, argmax = std::move(argmax)] {
            const Matrix& g = nodes_[out].grad;
            Matrix& ga = grad_buf(ai);
            for (size_t k = 0; k < argmax.size(); ++k)
                if (argmax[k] >= 0) ga.data[argmax[k]] += g.at(0, static_cast<int>(k));
        });
    }
    return Tensor(this, out);
}

void Tape::backward(Tensor loss) {
    check_open();
    check_same_tape(loss);
    const Matrix& lv = loss.value();
    if (lv.rows != 1 || lv.cols != 1)
        throw ContractError("backward: loss must be a 1x1 tensor");
    if (!loss.requires_grad())
        throw ContractError("backward: loss does not depend on any grad tensor");
    consumed_ = true;
    grad_buf(loss.node_).data[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        if (!nodes_[it->out].grad_ready) continue;  // not on the path to loss
        it->backward();
    }
    // mark untouched grad-tracking leaves as zero-gradient rather than unset
    for (Node& n : nodes_)
        if (n.requires_grad && !n.grad_ready) {
            n.grad = Matrix::zeros(n.value.rows, n.value.cols);
            n.grad_ready = true;
        }
}

// -- optimizers --------------------------------------------------------------

void optimizer_step(OptimizerState& state, std::span<Matrix* const> params,
                    std::span<const Matrix* const> grads) {
    if (params.size() != grads.size())
        throw ContractError("optimizer_step: params/grads size mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        if (!params[i] || !grads[i])
            throw ContractError("optimizer_step: missing parameter or gradient");
        if (!params[i]->same_shape(*grads[i]))
            throw ContractError("optimizer_step: gradient shape mismatch");
    }
    state.step_count += 1;

    if (state.kind == OptimizerState::Kind::sgd) {
        for (size_t i = 0; i < params.size(); ++i) {
            Matrix& p = *params[i];
            const Matrix& g = *grads[i];
            for (size_t k = 0; k < p.size(); ++k)
                p.data[k] -= state.learning_rate * g.data[k];
        }
        return;
    }

    if (state.m1.empty()) {
        for (size_t i = 0; i < params.size(); ++i) {
            state.m1.push_back(Matrix::zeros(params[i]->rows, params[i]->cols));
            state.m2.push_back(Matrix::zeros(params[i]->rows, params[i]->cols));
        }
    }
    if (state.m1.size() != params.size())
        throw ContractError("optimizer_step: parameter list changed between steps");

    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i];
        const Matrix& g = *grads[i];
        Matrix& m = state.m1[i];
        Matrix& v = state.m2[i];
        if (!m.same_shape(p)) throw ContractError("optimizer_step: moment shape mismatch");
        for (size_t k = 0; k < p.size(); ++k) {
            m.data[k] = state.beta1 * m.data[k] + (1.0 - state.beta1) * g.data[k];
            v.data[k] = state.beta2 * v.data[k] + (1.0 - state.beta2) * g.data[k] * g.data[k];
            const double m_hat = m.data[k] / bc1;
            const double v_hat = v.data[k] / bc2;
            p.data[k] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

}  // namespace savage::ad
