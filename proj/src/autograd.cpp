#include "hsnet/autograd.hpp"

namespace hsnet {

template <typename Scalar>
bool Tape<Scalar>::wants(std::initializer_list<const Tensor<Scalar>*> inputs) const noexcept {
    if (!recording_) return false;
    for (const auto* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

template <typename Scalar>
bool Tape<Scalar>::wants(const std::vector<Tensor<Scalar>>& inputs) const noexcept {
    if (!recording_) return false;
    for (const auto& t : inputs) {
        if (t.requires_grad()) return true;
    }
    return false;
}

template <typename Scalar>
void Tape<Scalar>::record(std::string op, std::vector<Tensor<Scalar>> inputs, Tensor<Scalar>& output,
                          BackwardFn fn) {
    output.set_requires_grad(true);
    nodes_.push_back(Node{std::move(op), std::move(inputs), output, std::move(fn)});
}

template <typename Scalar>
void backward(Tape<Scalar>& tape, const Tensor<Scalar>& loss) {
    if (loss.dims() != Dims{1, 1, 1, 1}) throw ShapeError("backward: loss must be (1, 1, 1, 1), got " + loss.dims().str());
    if (tape.empty() || !loss.requires_grad() || !tape.nodes().back().output.same(loss)) {
        throw GraphError("backward: loss is not the final output recorded on this tape");
    }
    Tensor<Scalar> seed = loss;
    seed.mutable_grad().setOnes();

    const auto& nodes = tape.nodes();
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        if (!it->output.has_grad()) continue;  // not on a path to the loss
        it->backward(it->output.grad());
        for (const auto& input : it->inputs) {
            if (input.has_grad() && !input.grad().allFinite()) {
                throw NumericError("backward of " + it->op + " produced a non-finite gradient");
            }
        }
    }
    tape.clear();
}

template <typename Scalar>
Tensor<Scalar> add(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    require_same_dims(a.dims(), b.dims(), "add");
    Tensor<Scalar> out(a.dims(), a.data() + b.data());
    require_finite(out, "add");
    if (tape.wants({&a, &b})) {
        tape.record("add", {a, b}, out, [a, b](const auto& g) {
            accumulate_grad(a, g);
            accumulate_grad(b, g);
        });
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> sub(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    require_same_dims(a.dims(), b.dims(), "sub");
    Tensor<Scalar> out(a.dims(), a.data() - b.data());
    require_finite(out, "sub");
    if (tape.wants({&a, &b})) {
        tape.record("sub", {a, b}, out, [a, b](const auto& g) {
            accumulate_grad(a, g);
            accumulate_grad(b, -g);
        });
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> mul(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    require_same_dims(a.dims(), b.dims(), "mul");
    Tensor<Scalar> out(a.dims(), a.data() * b.data());
    require_finite(out, "mul");
    if (tape.wants({&a, &b})) {
        tape.record("mul", {a, b}, out, [a, b](const auto& g) {
            accumulate_grad(a, g * b.data());
            accumulate_grad(b, g * a.data());
        });
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> scale(Tape<Scalar>& tape, const Tensor<Scalar>& a, Scalar factor) {
    Tensor<Scalar> out(a.dims(), a.data() * factor);
    require_finite(out, "scale");
    if (tape.wants({&a})) {
        tape.record("scale", {a}, out, [a, factor](const auto& g) { accumulate_grad(a, g * factor); });
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> sum(Tape<Scalar>& tape, const Tensor<Scalar>& a) {
    Tensor<Scalar> out(Dims{1, 1, 1, 1});
    out.mutable_data()[0] = a.data().sum();
    require_finite(out, "sum");
    if (tape.wants({&a})) {
        tape.record("sum", {a}, out, [a](const auto& g) {
            accumulate_grad(a, Tensor<Scalar>::Array::Constant(a.size(), g[0]));
        });
    }
    return out;
}

#define HSNET_INSTANTIATE(S)                                                          \
    template class Tape<S>;                                                           \
    template void backward<S>(Tape<S>&, const Tensor<S>&);                            \
    template Tensor<S> add<S>(Tape<S>&, const Tensor<S>&, const Tensor<S>&);          \
    template Tensor<S> sub<S>(Tape<S>&, const Tensor<S>&, const Tensor<S>&);          \
    template Tensor<S> mul<S>(Tape<S>&, const Tensor<S>&, const Tensor<S>&);          \
    template Tensor<S> scale<S>(Tape<S>&, const Tensor<S>&, S);                       \
    template Tensor<S> sum<S>(Tape<S>&, const Tensor<S>&);

HSNET_INSTANTIATE(float)
HSNET_INSTANTIATE(double)

}  // namespace hsnet
