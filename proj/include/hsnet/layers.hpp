#pragma once

#include <optional>
#include <string>

#include "hsnet/autograd.hpp"
#include "hsnet/rng.hpp"
#include "hsnet/tensor.hpp"

namespace hsnet {

enum class Mode { train, eval };

/// floor((in + 2*padding - kernel) / stride) + 1, or GeometryError if < 1.
Index window_output_size(Index in, Index kernel, Index stride, Index padding);

/// Square-kernel 2-D convolution parameters. Weight dims are (outC, inC, k, k).
template <typename Scalar>
struct Conv2d {
    Tensor<Scalar> weight;
    std::optional<Tensor<Scalar>> bias;  // (1, outC, 1, 1)
    Index stride = 1;
    Index padding = 0;

    [[nodiscard]] Index out_channels() const noexcept { return weight.dims().n; }
    [[nodiscard]] Index in_channels() const noexcept { return weight.dims().c; }
    [[nodiscard]] Index kernel() const noexcept { return weight.dims().h; }

    /// He fan-in Gaussian weights, no bias.
    static Conv2d make(Index in_channels, Index out_channels, Index kernel, Index stride, Index padding, Rng& rng);
};

/// Cross-correlation with zero padding (no kernel flip).
///
/// The forward pass lowers each image with im2col and accumulates every
/// output in (input channel, kernel row, kernel column) order, the same order
/// as a direct seven-loop sum, so at 64-bit the two agree bit for bit.
template <typename Scalar>
Tensor<Scalar> conv2d(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Conv2d<Scalar>& p);

/// Per-channel affine batch normalization. Running variance stores the biased
/// estimate, the same convention as the batch statistics.
template <typename Scalar>
struct BatchNorm {
    Tensor<Scalar> gamma;  // (1, C, 1, 1)
    Tensor<Scalar> beta;
    Tensor<Scalar> running_mean;
    Tensor<Scalar> running_var;
    double momentum = 0.1;
    double epsilon = 1e-5;

    [[nodiscard]] Index channels() const noexcept { return gamma.dims().c; }

    /// gamma = gamma_init, beta = 0, running stats (0, 1).
    static BatchNorm make(Index channels, double gamma_init = 1.0);
};

template <typename Scalar>
Tensor<Scalar> batch_norm(Tape<Scalar>& tape, const Tensor<Scalar>& x, BatchNorm<Scalar>& state, Mode mode);

template <typename Scalar>
Tensor<Scalar> relu(Tape<Scalar>& tape, const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> avg_pool(Tape<Scalar>& tape, const Tensor<Scalar>& x, Index kernel, Index stride);

/// Padded positions never win the max.
template <typename Scalar>
Tensor<Scalar> max_pool(Tape<Scalar>& tape, const Tensor<Scalar>& x, Index kernel, Index stride, Index padding = 0);

template <typename Scalar>
Tensor<Scalar> global_avg_pool(Tape<Scalar>& tape, const Tensor<Scalar>& x);

/// Fully connected layer over the flattened C*H*W features.
/// Weight dims are (1, 1, D, K), bias (1, 1, 1, K); output is (N, K, 1, 1).
template <typename Scalar>
struct Linear {
    Tensor<Scalar> weight;
    Tensor<Scalar> bias;

    [[nodiscard]] Index in_features() const noexcept { return weight.dims().h; }
    [[nodiscard]] Index out_features() const noexcept { return weight.dims().w; }

    static Linear make(Index in_features, Index out_features, Rng& rng);
};

template <typename Scalar>
Tensor<Scalar> linear(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Linear<Scalar>& p);

template <typename Scalar>
struct LossOutput {
    Tensor<Scalar> loss;  // (1, 1, 1, 1), recorded on the tape
    Scalar value{};
    Tensor<Scalar> logits_grad;  // (softmax - target) / N
};

/// Mean over the batch of -sum(target * log_softmax(logits)). Logits are
/// (N, K, 1, 1); each target row must be a probability vector.
template <typename Scalar>
LossOutput<Scalar> softmax_cross_entropy(Tape<Scalar>& tape, const Tensor<Scalar>& logits,
                                         const RowMatrix<Scalar>& target);

/// Role of a named tensor inside a model; drives weight decay, checkpoint
/// layout and the conv-only parameter column of the analyzer.
enum class ParamKind { conv_weight, conv_bias, linear_weight, linear_bias, bn_gamma, bn_beta, bn_running_mean, bn_running_var };

[[nodiscard]] constexpr bool is_trainable(ParamKind kind) noexcept {
    return kind != ParamKind::bn_running_mean && kind != ParamKind::bn_running_var;
}
[[nodiscard]] constexpr bool is_weight(ParamKind kind) noexcept {
    return kind == ParamKind::conv_weight || kind == ParamKind::linear_weight;
}

/// conv -> batch norm -> optional ReLU, the "Conv" unit of every block.
template <typename Scalar>
struct ConvBn {
    Conv2d<Scalar> conv;
    BatchNorm<Scalar> bn;
    bool relu = true;

    static ConvBn make(Index in_channels, Index out_channels, Index kernel, Index stride, Rng& rng, bool relu = true,
                       double gamma_init = 1.0);

    Tensor<Scalar> forward(Tape<Scalar>& tape, const Tensor<Scalar>& x, Mode mode);

    template <typename Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        fn(prefix + ".conv.weight", conv.weight, ParamKind::conv_weight);
        if (conv.bias) fn(prefix + ".conv.bias", *conv.bias, ParamKind::conv_bias);
        fn(prefix + ".bn.gamma", bn.gamma, ParamKind::bn_gamma);
        fn(prefix + ".bn.beta", bn.beta, ParamKind::bn_beta);
        fn(prefix + ".bn.running_mean", bn.running_mean, ParamKind::bn_running_mean);
        fn(prefix + ".bn.running_var", bn.running_var, ParamKind::bn_running_var);
    }
};

}  // namespace hsnet
