#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hsnet/tensor.hpp"

namespace hsnet {

/// Ordered record of differentiable operations.
///
/// Nodes are appended as operations execute, so every node's inputs were
/// produced earlier (or are leaves): recording order is a topological order.
/// The tape has a single owner; `backward` consumes it.
template <typename Scalar>
class Tape {
public:
    using Array = typename Tensor<Scalar>::Array;
    using BackwardFn = std::function<void(const Array& output_grad)>;

    struct Node {
        std::string op;
        std::vector<Tensor<Scalar>> inputs;
        Tensor<Scalar> output;
        BackwardFn backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) noexcept = default;
    Tape& operator=(Tape&&) noexcept = default;

    [[nodiscard]] bool recording() const noexcept { return recording_; }
    void set_recording(bool on) noexcept { recording_ = on; }

    /// True when an op over `inputs` must be recorded.
    [[nodiscard]] bool wants(std::initializer_list<const Tensor<Scalar>*> inputs) const noexcept;
    [[nodiscard]] bool wants(const std::vector<Tensor<Scalar>>& inputs) const noexcept;

    /// Appends a node and marks `output` as requiring grad.
    void record(std::string op, std::vector<Tensor<Scalar>> inputs, Tensor<Scalar>& output, BackwardFn fn);

    [[nodiscard]] const std::vector<Node>& nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] bool empty() const noexcept { return nodes_.empty(); }
    void clear() noexcept { nodes_.clear(); }

private:
    std::vector<Node> nodes_;
    bool recording_ = true;
};

/// Reverse pass: fills `grad` of every requires_grad tensor reachable from
/// `loss`. Leaf gradients accumulate across calls; the tape is emptied.
template <typename Scalar>
void backward(Tape<Scalar>& tape, const Tensor<Scalar>& loss);

/// Adds `delta` into t's gradient slot if t participates in differentiation.
template <typename Scalar, typename Expr>
void accumulate_grad(const Tensor<Scalar>& t, const Expr& delta) {
    if (t.requires_grad()) t.mutable_grad() += delta;
}

template <typename Scalar>
Tensor<Scalar> add(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> sub(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b);
/// Hadamard product.
template <typename Scalar>
Tensor<Scalar> mul(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> scale(Tape<Scalar>& tape, const Tensor<Scalar>& a, Scalar factor);
/// Sum of all entries as a (1,1,1,1) tensor.
template <typename Scalar>
Tensor<Scalar> sum(Tape<Scalar>& tape, const Tensor<Scalar>& a);

}  // namespace hsnet
