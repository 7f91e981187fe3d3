#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hsnet/hs_block.hpp"

namespace hsnet {

enum class BlockType { plain_bottleneck, hs_bottleneck };
enum class Stem { classic_7x7, resnet_d_3x3x3 };

[[nodiscard]] std::string_view to_string(BlockType t) noexcept;
[[nodiscard]] std::string_view to_string(Stem s) noexcept;
[[nodiscard]] BlockType parse_block_type(std::string_view name);
[[nodiscard]] Stem parse_stem(std::string_view name);

/// Declarative description of a four-stage bottleneck network.
///
/// Stage j (1-based) uses group width w_j = base_w * 2^(j-1) under the
/// default rule, or `custom_widths[j-1]`. An HS stage is s * w_j channels
/// wide; a plain bottleneck's middle conv is w_j wide and `s` is unused.
/// Stage j emits stage_out_base * 2^(j-1) channels.
struct NetworkConfig {
    BlockType block_type = BlockType::hs_bottleneck;
    std::array<Index, 4> stage_blocks{3, 4, 6, 3};
    Index base_w = 28;
    Index s = 6;
    std::optional<std::array<Index, 4>> custom_widths;
    Stem stem = Stem::resnet_d_3x3x3;
    Index stem_channels = 64;
    Index stage_out_base = 256;
    HsVariant variant = HsVariant::preserve;
    Index kernel = 3;
    bool zero_init_residual = true;
    Index num_classes = 1000;
    Index image_size = 224;

    [[nodiscard]] Index stage_width(int stage) const;  // w_j, stage in [0, 4)
    [[nodiscard]] Index stage_mid(int stage) const;    // s*w_j or w_j
    [[nodiscard]] Index stage_out(int stage) const;
    [[nodiscard]] Index stage_stride(int stage) const noexcept { return stage == 0 ? 1 : 2; }
    [[nodiscard]] HsBlockConfig hs_config(int stage, Index stride) const;
    [[nodiscard]] std::string width_rule() const;  // "double-per-stage" or "custom"
    /// Throws ConfigError on any inconsistency.
    void validate() const;

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Named presets: resnet50, resnet50-d, hs-18w-8s, hs-22w-7s, hs-28w-6s,
/// hs-40w-5s, tiny-hs, tiny-plain.
[[nodiscard]] NetworkConfig preset(std::string_view name);
[[nodiscard]] std::vector<std::string> preset_names();
/// The four HS-ResNet50 group/width sweep presets, most groups first.
[[nodiscard]] std::vector<std::string> sweep_preset_names();

/// Standard ResNet bottleneck: 1x1 reduce, k x k (strided) conv, 1x1 expand.
template <typename Scalar>
struct PlainBottleneck {
    Index in_channels = 0;
    Index out_channels = 0;
    ConvBn<Scalar> reduce;
    ConvBn<Scalar> mid;
    ConvBn<Scalar> expand;
    std::optional<Projection<Scalar>> shortcut;

    static PlainBottleneck make(Index in_channels, Index out_channels, Index mid_channels, Index kernel, Index stride,
                                bool pool_downsample, Rng& rng, bool zero_init_expand);

    template <typename Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        reduce.visit(prefix + ".reduce", fn);
        mid.visit(prefix + ".mid", fn);
        expand.visit(prefix + ".expand", fn);
        if (shortcut) shortcut->proj.visit(prefix + ".shortcut", fn);
    }
};

template <typename Scalar>
Tensor<Scalar> plain_bottleneck_forward(Tape<Scalar>& tape, const Tensor<Scalar>& x, PlainBottleneck<Scalar>& block,
                                        Mode mode);

template <typename Scalar>
using Block = std::variant<PlainBottleneck<Scalar>, HsBottleneck<Scalar>>;

template <typename Scalar>
struct NamedTensor {
    std::string name;
    Tensor<Scalar> tensor;
    ParamKind kind;
};

template <typename Scalar>
class Network {
public:
    NetworkConfig config;
    std::vector<ConvBn<Scalar>> stem;  // followed by 3x3/2 max pool
    std::array<std::vector<Block<Scalar>>, 4> stages;
    Linear<Scalar> head;

    /// Logits (N, num_classes, 1, 1). Non-finite values raise NumericError
    /// naming the first offending layer.
    Tensor<Scalar> forward(Tape<Scalar>& tape, const Tensor<Scalar>& x, Mode mode);
    /// Forward without recording.
    Tensor<Scalar> forward(const Tensor<Scalar>& x, Mode mode);

    template <typename Fn>
    void visit(Fn&& fn) {
        for (std::size_t i = 0; i < stem.size(); ++i) stem[i].visit("stem." + std::to_string(i), fn);
        for (std::size_t j = 0; j < stages.size(); ++j) {
            for (std::size_t b = 0; b < stages[j].size(); ++b) {
                const std::string prefix = "stage" + std::to_string(j + 1) + ".block" + std::to_string(b);
                std::visit([&](auto& block) { block.visit(prefix, fn); }, stages[j][b]);
            }
        }
        fn(std::string("head.weight"), head.weight, ParamKind::linear_weight);
        fn(std::string("head.bias"), head.bias, ParamKind::linear_bias);
    }

    /// Every parameter and buffer in construction order.
    [[nodiscard]] std::vector<NamedTensor<Scalar>> named_tensors();
    /// Trainable tensors only.
    [[nodiscard]] std::vector<NamedTensor<Scalar>> parameters();
    [[nodiscard]] Index parameter_count();
    void zero_grad();
};

/// Builds and initializes a network; identical (config, rng state) gives
/// bit-identical parameters.
template <typename Scalar>
Network<Scalar> build(const NetworkConfig& cfg, Rng& rng);

}  // namespace hsnet
