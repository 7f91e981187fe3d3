#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hsnet/network.hpp"

namespace hsnet {

/// Dense k x k conv over s*w channels: k^2 * s^2 * w^2.
[[nodiscard]] Index param_normal(Index k, Index s, Index w);

/// The published per-group expression k^2 w^2 ((2^(s-1) - 1) / 2^(s-1) + 1),
/// evaluated literally and summed over the s - 1 convolved groups.
[[nodiscard]] double param_hs_published_form(Index k, Index s, Index w);

/// Conv weights of one HS stage: sum over F_i of k^2 * c_in_i * c_out_i.
/// For the preserve variant this is sum k^2 c_i^2. BN parameters excluded.
[[nodiscard]] Index param_hs_exact(const HsBlockConfig& cfg);

/// FLOPs are 2 per multiply-accumulate. Per-element costs of the other
/// layers: batch norm 2, ReLU 1, residual add 1, k x k pooling k^2 per
/// output, global pooling H*W per output. Split and concat are free.
struct LayerRow {
    std::string name;
    std::string kind;  // conv, bn, relu, max_pool, avg_pool, global_pool, add, linear
    Index params = 0;
    Index flops = 0;
    Index macs = 0;  // multiply-accumulates (conv/linear); elementwise cost otherwise
};

struct HsStageSummary {
    std::string name;
    HsBlockConfig config;
    Index conv_params = 0;  // counted from the F_i rows
    Index exact = 0;        // param_hs_exact(config)
    Index normal = 0;       // param_normal(k, s, w)
    double published_form = 0.0;
};

struct ComplexityReport {
    std::vector<LayerRow> rows;
    std::vector<HsStageSummary> hs_stages;
    Index params_total = 0;
    Index params_conv_only = 0;  // conv weights
    Index params_bn_bias = 0;    // BN gamma/beta plus biases
    Index flops_total = 0;
    Index macs_total = 0;
    Index image_size = 0;
    std::string flop_convention = "2*MAC per output element";

    void print(std::ostream& os, bool per_layer = true) const;
};

/// Walks a built network, counting its actual tensors.
template <typename Scalar>
ComplexityReport count(Network<Scalar>& net, Index image_size);

/// Same report assembled from the config with per-layer formulas only; no
/// tensors are allocated. Must agree with count() on the built network.
ComplexityReport count(const NetworkConfig& cfg, Index image_size);

struct WidthRule {
    std::string name = "double-per-stage";
    std::optional<std::array<Index, 4>> widths;  // empty: base_w doubling
};

struct ReconcileRow {
    std::string preset;
    std::string variant;
    std::string width_rule;
    Index params_total = 0;
    Index params_conv_only = 0;
    Index flops_total = 0;
    Index macs_total = 0;
    double dev_params_pct = 0.0;
    std::optional<double> dev_flops_pct;      // 2*MAC convention
    std::optional<double> dev_flops_mac_pct;  // 1*MAC convention
    bool control = false;
};

struct ReconcileTable {
    std::vector<ReconcileRow> rows;
    std::optional<std::size_t> best;  // closest non-control row

    void write_csv(std::ostream& os) const;
    void print(std::ostream& os) const;
};

/// Published reference budgets used by reconcile.
inline constexpr double kResNet50ParamsM = 25.56;
inline constexpr double kHsResNet50ParamsM = 27.00;
[[nodiscard]] std::optional<double> published_gflops(const std::string& preset);

/// Every (preset x variant x width rule) combination at `image_size`, plus a
/// plain ResNet50 control row first.
[[nodiscard]] ReconcileTable reconcile(const std::vector<std::string>& presets, const std::vector<HsVariant>& variants,
                                       const std::vector<WidthRule>& width_rules, Index image_size = 224);
[[nodiscard]] ReconcileTable reconcile_default();

/// Plain-bottleneck twin of an HS config whose base width gives the closest
/// parameter count.
[[nodiscard]] NetworkConfig match_plain_budget(const NetworkConfig& hs_cfg);

}  // namespace hsnet
