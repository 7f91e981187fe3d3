#include "hsnet/optim.hpp"

#include <cmath>
#include <numbers>

namespace hsnet {

double cosine_lr(Index step, Index total, double base_lr) {
    if (total < 1) throw ArgumentError("cosine_lr: total steps must be >= 1");
    if (step < 0 || step > total) {
        throw ArgumentError("cosine_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
    }
    return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

template <typename Scalar>
void sgd_step(Eigen::Ref<typename Tensor<Scalar>::Array> param, const typename Tensor<Scalar>::Array& grad,
              typename Tensor<Scalar>::Array& velocity, double lr, double momentum, double weight_decay) {
    if (grad.size() != param.size() || velocity.size() != param.size()) {
        throw ShapeError("sgd_step: parameter, gradient and velocity sizes differ");
    }
    velocity = static_cast<Scalar>(momentum) * velocity + grad + static_cast<Scalar>(weight_decay) * param;
    param -= static_cast<Scalar>(lr) * velocity;
}

template <typename Scalar>
Sgd<Scalar>::Sgd(double momentum, double weight_decay, bool decay_all)
    : momentum_(momentum), weight_decay_(weight_decay), decay_all_(decay_all) {
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

template <typename Scalar>
void Sgd<Scalar>::step(Network<Scalar>& net, double lr) {
    for (auto& p : net.parameters()) {
        if (!p.tensor.has_grad()) continue;
        auto [it, fresh] = velocity_.try_emplace(p.name);
        if (fresh) it->second = Tensor<Scalar>::Array::Zero(p.tensor.size());
        const double decay = (decay_all_ || is_weight(p.kind)) ? weight_decay_ : 0.0;
        sgd_step<Scalar>(p.tensor.mutable_data(), p.tensor.grad(), it->second, lr, momentum_, decay);
        p.tensor.zero_grad();
    }
}

template void sgd_step<float>(Eigen::Ref<Tensor<float>::Array>, const Tensor<float>::Array&, Tensor<float>::Array&,
                              double, double, double);
template void sgd_step<double>(Eigen::Ref<Tensor<double>::Array>, const Tensor<double>::Array&,
                               Tensor<double>::Array&, double, double, double);
template class Sgd<float>;
template class Sgd<double>;

}  // namespace hsnet
