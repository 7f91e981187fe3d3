#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hsnet/layers.hpp"

namespace hsnet {

/// How group outputs are divided and forwarded.
///
///  - preserve:    F_i maps c_i -> c_i channels; the first group passes whole.
///  - split_first: like preserve, but x_1 is also split and half of it feeds F_2.
///  - project_w:   F_i maps c_i -> w channels.
enum class HsVariant { preserve, split_first, project_w };

[[nodiscard]] std::string_view to_string(HsVariant v) noexcept;
/// Accepts "B-preserve", "A-split-first", "P-project-w".
[[nodiscard]] HsVariant parse_variant(std::string_view name);

struct HsBlockConfig {
    Index s = 4;  // groups
    Index w = 4;  // channels per group
    Index k = 3;
    Index stride = 1;
    HsVariant variant = HsVariant::preserve;

    [[nodiscard]] Index width() const noexcept { return s * w; }
    /// Throws ConfigError unless s >= 2, w >= 1, k odd and >= 1, stride in {1, 2}.
    void validate() const;
};

/// Exact channel widths of one Hierarchical-Split stage.
///
/// Group i (1-based) reads c_i channels (c_2 = w, c_i = w + f_{i-1}), its
/// conv emits conv_out_i channels, of which the lower o_i stay in the output
/// and the upper f_i are forwarded to group i + 1. The kept part takes the
/// ceiling half of an odd width.
struct ChannelPlan {
    HsVariant variant = HsVariant::preserve;
    Index group_width = 0;
    Index first_forward = 0;       // f_1; non-zero only for split_first
    std::vector<Index> conv_in;    // c_2 .. c_s
    std::vector<Index> conv_out;   // output widths of F_2 .. F_s
    std::vector<Index> forward;    // f_2 .. f_{s-1}
    std::vector<Index> out;        // o_1 .. o_s

    [[nodiscard]] Index groups() const noexcept { return static_cast<Index>(out.size()); }
    [[nodiscard]] Index input_width() const noexcept { return groups() * group_width; }
    [[nodiscard]] Index output_width() const noexcept;
};

[[nodiscard]] ChannelPlan channel_plan(const HsBlockConfig& cfg);

/// Contiguous channel ranges, lowest indices first. Widths must sum to C.
template <typename Scalar>
std::vector<Tensor<Scalar>> split_channels(Tape<Scalar>& tape, const Tensor<Scalar>& x, const std::vector<Index>& widths);

/// Appends channels in argument order; N, H and W must agree.
template <typename Scalar>
Tensor<Scalar> concat_channels(Tape<Scalar>& tape, const std::vector<Tensor<Scalar>>& parts);

/// The split/convolve/concat stage that replaces a bottleneck's 3x3 conv.
template <typename Scalar>
struct HsStage {
    HsBlockConfig config;
    ChannelPlan plan;
    std::vector<ConvBn<Scalar>> convs;  // F_2 .. F_s

    static HsStage make(const HsBlockConfig& cfg, Rng& rng);

    template <typename Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        for (std::size_t i = 0; i < convs.size(); ++i) convs[i].visit(prefix + ".f" + std::to_string(i + 2), fn);
    }
};

/// y_1 = x_1; y_i = F_i(x_i (+) y_{i-1,2}); output = concat(y_{1,1}, ..., y_{s-1,1}, y_s).
/// With stride 2 the input is 2x2 average pooled first and every F_i runs at stride 1.
template <typename Scalar>
Tensor<Scalar> hs_forward(Tape<Scalar>& tape, const Tensor<Scalar>& x, HsStage<Scalar>& stage, Mode mode);

/// Residual shortcut: optional 2x2 average pool, then 1x1 conv + BN.
template <typename Scalar>
struct Projection {
    bool pool = false;
    ConvBn<Scalar> proj;

    Tensor<Scalar> forward(Tape<Scalar>& tape, const Tensor<Scalar>& x, Mode mode);
};

/// 1x1 reduce -> HS stage -> 1x1 expand, plus shortcut and final ReLU.
template <typename Scalar>
struct HsBottleneck {
    Index in_channels = 0;
    Index out_channels = 0;
    ConvBn<Scalar> reduce;
    HsStage<Scalar> stage;
    ConvBn<Scalar> expand;
    std::optional<Projection<Scalar>> shortcut;  // empty: identity

    /// `zero_init_expand` starts the expand BN with gamma = 0.
    static HsBottleneck make(Index in_channels, Index out_channels, const HsBlockConfig& cfg, Rng& rng,
                             bool zero_init_expand = true);

    template <typename Fn>
    void visit(const std::string& prefix, Fn&& fn) {
        reduce.visit(prefix + ".reduce", fn);
        stage.visit(prefix + ".hs", fn);
        expand.visit(prefix + ".expand", fn);
        if (shortcut) shortcut->proj.visit(prefix + ".shortcut", fn);
    }
};

template <typename Scalar>
Tensor<Scalar> hs_bottleneck_forward(Tape<Scalar>& tape, const Tensor<Scalar>& x, HsBottleneck<Scalar>& block,
                                     Mode mode);

/// Shortcut used by every bottleneck: identity when shapes allow, otherwise
/// (pool when stride 2 and `pool_downsample`) + 1x1 projection.
template <typename Scalar>
std::optional<Projection<Scalar>> make_shortcut(Index in_channels, Index out_channels, Index stride, bool pool_downsample,
                                                Rng& rng);

}  // namespace hsnet
