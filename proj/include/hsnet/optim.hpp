#pragma once

#include <map>
#include <string>

#include "hsnet/network.hpp"

namespace hsnet {

/// 0.5 * base_lr * (1 + cos(pi * step / total)); ArgumentError unless
/// 0 <= step <= total and total >= 1.
double cosine_lr(Index step, Index total, double base_lr);

/// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
template <typename Scalar>
void sgd_step(Eigen::Ref<typename Tensor<Scalar>::Array> param, const typename Tensor<Scalar>::Array& grad,
              typename Tensor<Scalar>::Array& velocity, double lr, double momentum, double weight_decay);

/// Momentum SGD over a network's trainable tensors. Weight decay reaches
/// conv/linear weights only unless `decay_all` is set.
template <typename Scalar>
class Sgd {
public:
    Sgd(double momentum, double weight_decay, bool decay_all = false);

    /// Applies one step using each parameter's accumulated gradient, then
    /// clears the gradients.
    void step(Network<Scalar>& net, double lr);

private:
    double momentum_;
    double weight_decay_;
    bool decay_all_;
    std::map<std::string, typename Tensor<Scalar>::Array> velocity_;
};

}  // namespace hsnet
