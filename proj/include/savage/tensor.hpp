#pragma once

#include <functional>
#include <span>
#include <vector>

#include "savage/common.hpp"

namespace savage::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; the tape owns the storage.
class Tensor {
public:
    Tensor() = default;

    int rows() const;
    int cols() const;
    bool requires_grad() const;
    const Matrix& value() const;

    /// Gradient of the last backward() pass with respect to this tensor.
    /// ContractError if the tensor does not require grad or backward has
    /// not run yet.
    const Matrix& grad() const;

    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Tensor(Tape* tape, int node) : tape_(tape), node_(node) {}

    Tape* tape_ = nullptr;
    int node_ = -1;
};

/// Records primitive operations in execution order (inputs always precede
/// outputs) and replays their backward rules in reverse to populate
/// gradients. One tape per training/attack run; tapes are single-owner
/// and must not be shared across threads.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Introduces an input tensor. Gradients are tracked only when
    /// requires_grad is set.
    Tensor leaf(Matrix value, bool requires_grad);
    Tensor constant(Matrix value) { return leaf(std::move(value), false); }

    // -- primitives ------------------------------------------------------

    Tensor matmul(Tensor a, Tensor b);

    Tensor add(Tensor a, Tensor b);
    Tensor sub(Tensor a, Tensor b);
    Tensor hadamard(Tensor a, Tensor b);
    /// Adds a 1xC row vector to every row of an RxC matrix (bias add).
    Tensor add_row_vector(Tensor m, Tensor row);

    Tensor sigmoid(Tensor a);
    Tensor tanh(Tensor a);
    Tensor relu(Tensor a);
    /// Natural log; every entry must be strictly positive.
    Tensor log(Tensor a);
    /// max(0, min(x, 1)). Gradient is 1 strictly inside (0,1), 0 at the
    /// boundaries and outside.
    Tensor clamp01(Tensor a);
    /// max(x, floor). Gradient is 1 where x > floor, else 0.
    Tensor clamp_min(Tensor a, double floor);
    Tensor scale(Tensor a, double c);

    Tensor sum(Tensor a);
    /// Sum of absolute values. Subgradient at exactly-zero entries is 0.
    Tensor l1_norm(Tensor a);

    /// Divides every row by its sum. Row sums must be strictly positive.
    Tensor row_normalize(Tensor a);

    /// Selects rows by index into a new len(index) x C tensor.
    Tensor gather_rows(Tensor a, std::vector<int> index);

    /// For each of the trailing n_tail nodes u of a square non-negative
    /// matrix, the maximum entry over row u and column u. The subgradient
    /// goes to the argmax cell; if the maximum is 0 no gradient flows.
    Tensor incident_max(Tensor a, int n_tail);

    /// Populates grad for every requires_grad tensor reachable from loss.
    /// loss must be 1x1. The tape is consumed: no further recording and
    /// no second backward.
    void backward(Tensor loss);

    size_t num_ops() const { return ops_.size(); }

private:
    friend class Tensor;

    struct Node {
        Matrix value;
        Matrix grad;  // empty until backward touches it
        bool requires_grad = false;
        bool grad_ready = false;
    };
    struct OpRecord {
        int out = -1;
        std::vector<int> inputs;
        std::function<void()> backward;
    };

    int push_node(Matrix value, bool requires_grad);
    void record(int out, std::vector<int> inputs, std::function<void()> rule);
    void check_open() const;
    void check_same_tape(Tensor t) const;
    Matrix& grad_buf(int node);

    Tensor unary_elementwise(Tensor a, const char* name,
                             const std::function<double(double)>& fwd,
                             const std::function<double(double, double)>& dfdx);

    std::vector<Node> nodes_;
    std::vector<OpRecord> ops_;
    bool consumed_ = false;
};

/// First-order optimizer state shared across steps. Adam moments are
/// lazily shaped to the parameter list on the first step.
struct OptimizerState {
    enum class Kind { sgd, adam };

    Kind kind = Kind::sgd;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
    std::vector<Matrix> m1;  // adam first moments, per parameter
    std::vector<Matrix> m2;  // adam second moments

    static OptimizerState sgd(double lr) {
        OptimizerState s;
        s.kind = Kind::sgd;
        s.learning_rate = lr;
        return s;
    }
    static OptimizerState adam(double lr, double b1 = 0.9, double b2 = 0.999,
                               double eps = 1e-8) {
        OptimizerState s;
        s.kind = Kind::adam;
        s.learning_rate = lr;
        s.beta1 = b1;
        s.beta2 = b2;
        s.epsilon = eps;
        return s;
    }
};

/// Applies one update in place. params[i] is updated with grads[i]; the
/// lists must stay in the same order across steps. Missing gradients
/// (null or misshapen) are a contract error.
void optimizer_step(OptimizerState& state, std::span<Matrix* const> params,
                    std::span<const Matrix* const> grads);

}  // namespace savage::ad
