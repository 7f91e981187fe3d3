#include "hsnet/analyzer.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>

namespace hsnet {

Index param_normal(Index k, Index s, Index w) {
    return k * k * s * s * w * w;
}

double param_hs_published_form(Index k, Index s, Index w) {
    const double half_power = std::ldexp(1.0, static_cast<int>(s - 1));  // 2^(s-1)
    const double per_group = static_cast<double>(k * k * w * w) * ((half_power - 1.0) / half_power + 1.0);
    return static_cast<double>(s - 1) * per_group;
}

Index param_hs_exact(const HsBlockConfig& cfg) {
    const ChannelPlan plan = channel_plan(cfg);
    Index total = 0;
    for (std::size_t i = 0; i < plan.conv_in.size(); ++i) total += cfg.k * cfg.k * plan.conv_in[i] * plan.conv_out[i];
    return total;
}

namespace {

struct Spatial {
    Index c, h, w;
};

// Accumulates rows with the shared cost conventions.
class Ledger {
public:
    explicit Ledger(ComplexityReport& report) : report_(report) {}

    Spatial conv(const std::string& name, Spatial in, Index out_c, Index k, Index stride, Index weight_params,
                 Index bias_params) {
        const Spatial out{out_c, window_output_size(in.h, k, stride, k / 2), window_output_size(in.w, k, stride, k / 2)};
        const Index macs = out.c * out.h * out.w * k * k * in.c;
        const Index bias_flops = bias_params > 0 ? out.c * out.h * out.w : 0;
        push({name, "conv", weight_params + bias_params, 2 * macs + bias_flops, macs + bias_flops});
        report_.params_conv_only += weight_params;
        report_.params_bn_bias += bias_params;
        return out;
    }
    void bn(const std::string& name, Spatial at, Index params) {
        const Index n = at.c * at.h * at.w;
        push({name, "bn", params, 2 * n, 2 * n});
        report_.params_bn_bias += params;
    }
    void elementwise(const std::string& name, const std::string& kind, Spatial at, Index per_element = 1) {
        const Index n = at.c * at.h * at.w * per_element;
        push({name, kind, 0, n, n});
    }
    Spatial pool(const std::string& name, const std::string& kind, Spatial in, Index k, Index stride, Index pad) {
        const Spatial out{in.c, window_output_size(in.h, k, stride, pad), window_output_size(in.w, k, stride, pad)};
        elementwise(name, kind, out, k * k);
        return out;
    }
    void linear(const std::string& name, Index in_features, Index out_features, Index weight_params, Index bias_params) {
        const Index macs = in_features * out_features;
        push({name, "linear", weight_params + bias_params, 2 * macs + bias_params, macs + bias_params});
        report_.params_bn_bias += bias_params;
    }

private:
    void push(LayerRow row) {
        report_.params_total += row.params;
        report_.flops_total += row.flops;
        report_.macs_total += row.macs;
        report_.rows.push_back(std::move(row));
    }
    ComplexityReport& report_;
};

// --- built-network route -----------------------------------------------------

template <typename Scalar>
Spatial walk_unit(Ledger& ledger, const std::string& name, const ConvBn<Scalar>& unit, Spatial in) {
    const Dims& wd = unit.conv.weight.dims();
    if (wd.c != in.c) throw ShapeError("count: " + name + " expects " + std::to_string(wd.c) + " channels");
    const Spatial out = ledger.conv(name + ".conv", in, wd.n, wd.h, unit.conv.stride, unit.conv.weight.size(),
                                    unit.conv.bias ? unit.conv.bias->size() : 0);
    ledger.bn(name + ".bn", out, unit.bn.gamma.size() + unit.bn.beta.size());
    if (unit.relu) ledger.elementwise(name + ".relu", "relu", out);
    return out;
}

template <typename Scalar>
Spatial walk_shortcut(Ledger& ledger, const std::string& name, const std::optional<Projection<Scalar>>& shortcut,
                      Spatial in) {
    if (!shortcut) return in;
    Spatial at = in;
    if (shortcut->pool) at = ledger.pool(name + ".pool", "avg_pool", at, 2, 2, 0);
    return walk_unit(ledger, name, shortcut->proj, at);
}

template <typename Scalar>
Spatial walk_block(Ledger& ledger, ComplexityReport& report, const std::string& name, const HsBottleneck<Scalar>& block,
                   Spatial in) {
    Spatial at = walk_unit(ledger, name + ".reduce", block.reduce, in);
    if (block.stage.config.stride == 2) at = ledger.pool(name + ".hs.pool", "avg_pool", at, 2, 2, 0);
    HsStageSummary summary{name + ".hs", block.stage.config, 0, 0, 0, 0.0};
    Spatial stage_out{block.stage.plan.output_width(), at.h, at.w};
    for (std::size_t i = 0; i < block.stage.convs.size(); ++i) {
        const auto& unit = block.stage.convs[i];
        summary.conv_params += unit.conv.weight.size();
        walk_unit(ledger, name + ".hs.f" + std::to_string(i + 2), unit,
                  Spatial{unit.conv.weight.dims().c, at.h, at.w});
    }
    const HsBlockConfig& cfg = block.stage.config;
    summary.exact = param_hs_exact(cfg);
    summary.normal = param_normal(cfg.k, cfg.s, cfg.w);
    summary.published_form = param_hs_published_form(cfg.k, cfg.s, cfg.w);
    report.hs_stages.push_back(summary);

    const Spatial out = walk_unit(ledger, name + ".expand", block.expand, stage_out);
    walk_shortcut(ledger, name + ".shortcut", block.shortcut, in);
    ledger.elementwise(name + ".add", "add", out);
    ledger.elementwise(name + ".relu", "relu", out);
    return out;
}

template <typename Scalar>
Spatial walk_block(Ledger& ledger, ComplexityReport&, const std::string& name, const PlainBottleneck<Scalar>& block,
                   Spatial in) {
    Spatial at = walk_unit(ledger, name + ".reduce", block.reduce, in);
    at = walk_unit(ledger, name + ".mid", block.mid, at);
    const Spatial out = walk_unit(ledger, name + ".expand", block.expand, at);
    walk_shortcut(ledger, name + ".shortcut", block.shortcut, in);
    ledger.elementwise(name + ".add", "add", out);
    ledger.elementwise(name + ".relu", "relu", out);
    return out;
}

void finish_head(Ledger& ledger, Spatial at, Index classes, Index weight_params, Index bias_params) {
    ledger.elementwise("head.pool", "global_pool", Spatial{at.c, 1, 1}, at.h * at.w);
    ledger.linear("head.fc", at.c, classes, weight_params, bias_params);
}

// --- config route --------------------------------------------------------------

Spatial formula_unit(Ledger& ledger, const std::string& name, Spatial in, Index out_c, Index k, Index stride,
                     bool relu = true) {
    const Spatial out = ledger.conv(name + ".conv", in, out_c, k, stride, k * k * in.c * out_c, 0);
    ledger.bn(name + ".bn", out, 2 * out_c);
    if (relu) ledger.elementwise(name + ".relu", "relu", out);
    return out;
}

Spatial formula_shortcut(Ledger& ledger, const std::string& name, Spatial in, Index out_c, Index stride, bool pool) {
    if (stride == 1 && in.c == out_c) return in;
    Spatial at = in;
    Index conv_stride = stride;
    if (stride == 2 && pool) {
        at = ledger.pool(name + ".pool", "avg_pool", at, 2, 2, 0);
        conv_stride = 1;
    }
    return formula_unit(ledger, name, at, out_c, 1, conv_stride, false);
}

}  // namespace

template <typename Scalar>
ComplexityReport count(Network<Scalar>& net, Index image_size) {
    ComplexityReport report;
    report.image_size = image_size;
    Ledger ledger(report);
    Spatial at{3, image_size, image_size};
    for (std::size_t i = 0; i < net.stem.size(); ++i) at = walk_unit(ledger, "stem." + std::to_string(i), net.stem[i], at);
    at = ledger.pool("stem.pool", "max_pool", at, 3, 2, 1);
    for (std::size_t j = 0; j < net.stages.size(); ++j) {
        for (std::size_t b = 0; b < net.stages[j].size(); ++b) {
            const std::string name = "stage" + std::to_string(j + 1) + ".block" + std::to_string(b);
            at = std::visit([&](const auto& block) { return walk_block(ledger, report, name, block, at); },
                            net.stages[j][b]);
        }
    }
    finish_head(ledger, at, net.head.out_features(), net.head.weight.size(), net.head.bias.size());
    return report;
}

ComplexityReport count(const NetworkConfig& cfg, Index image_size) {
    cfg.validate();
    ComplexityReport report;
    report.image_size = image_size;
    Ledger ledger(report);
    Spatial at{3, image_size, image_size};
    if (cfg.stem == Stem::classic_7x7) {
        at = formula_unit(ledger, "stem.0", at, cfg.stem_channels, 7, 2);
    } else {
        at = formula_unit(ledger, "stem.0", at, cfg.stem_channels / 2, 3, 2);
        at = formula_unit(ledger, "stem.1", at, cfg.stem_channels / 2, 3, 1);
        at = formula_unit(ledger, "stem.2", at, cfg.stem_channels, 3, 1);
    }
    at = ledger.pool("stem.pool", "max_pool", at, 3, 2, 1);
    const bool pool_downsample = cfg.stem == Stem::resnet_d_3x3x3;

    for (int j = 0; j < 4; ++j) {
        const Index out_c = cfg.stage_out(j);
        for (Index b = 0; b < cfg.stage_blocks[static_cast<std::size_t>(j)]; ++b) {
            const std::string name = "stage" + std::to_string(j + 1) + ".block" + std::to_string(b);
            const Index stride = b == 0 ? cfg.stage_stride(j) : 1;
            const Spatial in = at;
            Spatial out{};
            if (cfg.block_type == BlockType::hs_bottleneck) {
                const HsBlockConfig hs = cfg.hs_config(j, stride);
                const ChannelPlan plan = channel_plan(hs);
                Spatial mid = formula_unit(ledger, name + ".reduce", in, hs.width(), 1, 1);
                if (stride == 2) mid = ledger.pool(name + ".hs.pool", "avg_pool", mid, 2, 2, 0);
                HsStageSummary summary{name + ".hs", hs, 0, param_hs_exact(hs), param_normal(hs.k, hs.s, hs.w),
                                       param_hs_published_form(hs.k, hs.s, hs.w)};
                for (std::size_t i = 0; i < plan.conv_in.size(); ++i) {
                    summary.conv_params += hs.k * hs.k * plan.conv_in[i] * plan.conv_out[i];
                    formula_unit(ledger, name + ".hs.f" + std::to_string(i + 2), Spatial{plan.conv_in[i], mid.h, mid.w},
                                 plan.conv_out[i], hs.k, 1);
                }
                report.hs_stages.push_back(summary);
                out = formula_unit(ledger, name + ".expand", Spatial{plan.output_width(), mid.h, mid.w}, out_c, 1, 1,
                                   false);
                formula_shortcut(ledger, name + ".shortcut", in, out_c, stride, true);
            } else {
                Spatial mid = formula_unit(ledger, name + ".reduce", in, cfg.stage_mid(j), 1, 1);
                mid = formula_unit(ledger, name + ".mid", mid, cfg.stage_mid(j), cfg.kernel, stride);
                out = formula_unit(ledger, name + ".expand", mid, out_c, 1, 1, false);
                formula_shortcut(ledger, name + ".shortcut", in, out_c, stride, pool_downsample);
            }
            ledger.elementwise(name + ".add", "add", out);
            ledger.elementwise(name + ".relu", "relu", out);
            at = out;
        }
    }
    finish_head(ledger, at, cfg.num_classes, at.c * cfg.num_classes, cfg.num_classes);
    return report;
}

void ComplexityReport::print(std::ostream& os, bool per_layer) const {
    char line[256];
    if (per_layer) {
        std::snprintf(line, sizeof line, "%-40s %-12s %14s %16s\n", "layer", "kind", "params", "flops");
        os << line;
        for (const auto& row : rows) {
            std::snprintf(line, sizeof line, "%-40s %-12s %14lld %16lld\n", row.name.c_str(), row.kind.c_str(),
                          static_cast<long long>(row.params), static_cast<long long>(row.flops));
            os << line;
        }
        os << '\n';
    }
    if (!hs_stages.empty()) {
        std::snprintf(line, sizeof line, "%-24s %4s %4s %2s %12s %12s %14s %12s\n", "hs stage", "s", "w", "k",
                      "conv params", "exact", "published", "normal");
        os << line;
        for (const auto& st : hs_stages) {
            std::snprintf(line, sizeof line, "%-24s %4lld %4lld %2lld %12lld %12lld %14.2f %12lld\n", st.name.c_str(),
                          static_cast<long long>(st.config.s), static_cast<long long>(st.config.w),
                          static_cast<long long>(st.config.k), static_cast<long long>(st.conv_params),
                          static_cast<long long>(st.exact), st.published_form, static_cast<long long>(st.normal));
            os << line;
        }
        os << '\n';
    }
    std::snprintf(line, sizeof line,
                  "image size        %lld\n"
                  "params total      %lld (%.2fM)\n"
                  "params conv only  %lld\n"
                  "params bn + bias  %lld\n"
                  "flops total       %lld (%.3fG, %s)\n"
                  "macs total        %lld (%.3fG)\n",
                  static_cast<long long>(image_size), static_cast<long long>(params_total), params_total / 1e6,
                  static_cast<long long>(params_conv_only), static_cast<long long>(params_bn_bias),
                  static_cast<long long>(flops_total), flops_total / 1e9, flop_convention.c_str(),
                  static_cast<long long>(macs_total), macs_total / 1e9);
    os << line;
}

// ---------------------------------------------------------------------------
// Reconciliation sweep

std::optional<double> published_gflops(const std::string& preset) {
    static const std::map<std::string, double> table{
        {"hs-18w-8s", 11.6}, {"hs-22w-7s", 12.3}, {"hs-28w-6s", 13.1}, {"hs-40w-5s", 15.1}};
    const auto it = table.find(preset);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

namespace {

double pct(double value, double reference) {
    return (value - reference) / reference * 100.0;
}

ReconcileRow make_row(const std::string& preset_name, const NetworkConfig& cfg, const std::string& variant,
                      const std::string& rule, double reference_params_m, Index image_size) {
    const ComplexityReport report = count(cfg, image_size);
    ReconcileRow row;
    row.preset = preset_name;
    row.variant = variant;
    row.width_rule = rule;
    row.params_total = report.params_total;
    row.params_conv_only = report.params_conv_only;
    row.flops_total = report.flops_total;
    row.macs_total = report.macs_total;
    row.dev_params_pct = pct(report.params_total / 1e6, reference_params_m);
    if (const auto g = published_gflops(preset_name)) {
        row.dev_flops_pct = pct(report.flops_total / 1e9, *g);
        row.dev_flops_mac_pct = pct(report.macs_total / 1e9, *g);
    }
    return row;
}

}  // namespace

ReconcileTable reconcile(const std::vector<std::string>& presets, const std::vector<HsVariant>& variants,
                         const std::vector<WidthRule>& width_rules, Index image_size) {
    ReconcileTable table;
    ReconcileRow control = make_row("resnet50", preset("resnet50"), "-", "double-per-stage", kResNet50ParamsM, image_size);
    control.control = true;
    table.rows.push_back(control);

    double best_score = 0.0;
    for (const auto& name : presets) {
        for (const HsVariant variant : variants) {
            for (const auto& rule : width_rules) {
                NetworkConfig cfg = preset(name);
                cfg.variant = variant;
                cfg.custom_widths = rule.widths;
                ReconcileRow row = make_row(name, cfg, std::string(to_string(variant)), rule.name, kHsResNet50ParamsM,
                                            image_size);
                double score = std::abs(row.dev_params_pct);
                if (row.dev_flops_pct) score += std::min(std::abs(*row.dev_flops_pct), std::abs(*row.dev_flops_mac_pct));
                if (!table.best || score < best_score) {
                    best_score = score;
                    table.best = table.rows.size();
                }
                table.rows.push_back(std::move(row));
            }
        }
    }
    return table;
}

ReconcileTable reconcile_default() {
    return reconcile(sweep_preset_names(), {HsVariant::preserve, HsVariant::split_first, HsVariant::project_w},
                     {WidthRule{}});
}

namespace {

std::string signed_pct(const std::optional<double>& v) {
    if (!v) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.3f", *v);
    return buf;
}

}  // namespace

void ReconcileTable::write_csv(std::ostream& os) const {
    os << "preset,variant,width_rule,params_total,params_conv_only,flops_total,dev_params_pct,dev_flops_pct,"
          "dev_flops_mac_pct\n";
    for (const auto& r : rows) {
        os << r.preset << ',' << r.variant << ',' << r.width_rule << ',' << r.params_total << ',' << r.params_conv_only
           << ',' << r.flops_total << ',' << signed_pct(r.dev_params_pct) << ',' << signed_pct(r.dev_flops_pct) << ','
           << signed_pct(r.dev_flops_mac_pct) << '\n';
    }
}

void ReconcileTable::print(std::ostream& os) const {
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %-14s %-17s %10s %10s %9s %10s %10s %10s\n", "preset", "variant",
                  "width_rule", "params(M)", "conv(M)", "GFLOPs", "dev_par%", "dev_flop%", "dev_mac%");
    os << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-10s %-14s %-17s %10.3f %10.3f %9.3f %10s %10s %10s\n", r.preset.c_str(),
                      r.variant.c_str(), r.width_rule.c_str(), r.params_total / 1e6, r.params_conv_only / 1e6,
                      r.flops_total / 1e9, signed_pct(r.dev_params_pct).c_str(), signed_pct(r.dev_flops_pct).c_str(),
                      signed_pct(r.dev_flops_mac_pct).c_str());
        os << line;
    }
    if (best) {
        const auto& b = rows[*best];
        os << "\nclosest to published budgets: " << b.preset << " / " << b.variant << " / " << b.width_rule
           << " (params " << signed_pct(b.dev_params_pct) << "%, flops " << signed_pct(b.dev_flops_pct) << "% at 2*MAC, "
           << signed_pct(b.dev_flops_mac_pct) << "% at 1*MAC)\n";
    }
}

NetworkConfig match_plain_budget(const NetworkConfig& hs_cfg) {
    const Index target = count(hs_cfg, hs_cfg.image_size).params_total;
    NetworkConfig best = hs_cfg;
    best.block_type = BlockType::plain_bottleneck;
    best.s = 1;
    best.custom_widths.reset();
    Index best_gap = -1;
    for (Index w = 1; w <= 512; ++w) {
        NetworkConfig candidate = best;
        candidate.base_w = w;
        const Index gap = std::abs(count(candidate, hs_cfg.image_size).params_total - target);
        if (best_gap < 0 || gap < best_gap) {
            best_gap = gap;
            best.base_w = w;
        }
    }
    return best;
}

template ComplexityReport count<float>(Network<float>&, Index);
template ComplexityReport count<double>(Network<double>&, Index);

}  // namespace hsnet
