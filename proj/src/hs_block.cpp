#include "hsnet/hs_block.hpp"

#include <numeric>

namespace hsnet {

std::string_view to_string(HsVariant v) noexcept {
    switch (v) {
        case HsVariant::preserve: return "B-preserve";
        case HsVariant::split_first: return "A-split-first";
        case HsVariant::project_w: return "P-project-w";
    }
    return "?";
}

HsVariant parse_variant(std::string_view name) {
    if (name == "B-preserve") return HsVariant::preserve;
    if (name == "A-split-first") return HsVariant::split_first;
    if (name == "P-project-w") return HsVariant::project_w;
    throw ConfigError("unknown HS variant '" + std::string(name) + "'");
}

void HsBlockConfig::validate() const {
    if (s < 2) throw ConfigError("HS block needs s >= 2 groups, got " + std::to_string(s));
    if (w < 1) throw ConfigError("HS block needs w >= 1, got " + std::to_string(w));
    if (k < 1 || k % 2 == 0) throw ConfigError("HS block kernel must be odd, got " + std::to_string(k));
    if (stride != 1 && stride != 2) throw ConfigError("HS block stride must be 1 or 2, got " + std::to_string(stride));
}

Index ChannelPlan::output_width() const noexcept {
    return std::accumulate(out.begin(), out.end(), Index{0});
}

ChannelPlan channel_plan(const HsBlockConfig& cfg) {
    cfg.validate();
    ChannelPlan plan;
    plan.variant = cfg.variant;
    plan.group_width = cfg.w;

    Index carried = 0;
    if (cfg.variant == HsVariant::split_first) {
        plan.first_forward = cfg.w / 2;
        carried = plan.first_forward;
        plan.out.push_back(cfg.w - carried);
    } else {
        plan.out.push_back(cfg.w);
    }

    for (Index i = 2; i <= cfg.s; ++i) {
        const Index c = cfg.w + carried;
        const Index produced = cfg.variant == HsVariant::project_w ? cfg.w : c;
        plan.conv_in.push_back(c);
        plan.conv_out.push_back(produced);
        if (i < cfg.s) {
            carried = produced / 2;
            plan.forward.push_back(carried);
            plan.out.push_back(produced - carried);
        } else {
            plan.out.push_back(produced);
        }
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Channel split / concat

namespace {

template <typename Scalar>
Tensor<Scalar> slice_channels(Tape<Scalar>& tape, const Tensor<Scalar>& x, Index begin, Index count) {
    const Dims& d = x.dims();
    Tensor<Scalar> out(Dims{d.n, count, d.h, d.w});
    const Index chunk = count * d.plane();
    for (Index n = 0; n < d.n; ++n) {
        out.mutable_data().segment(n * chunk, chunk) = x.data().segment((n * d.c + begin) * d.plane(), chunk);
    }
    if (tape.wants({&x})) {
        tape.record("split_channels", {x}, out, [x, begin, chunk](const auto& g) {
            const Dims& d = x.dims();
            auto& dx = x.mutable_grad();
            for (Index n = 0; n < d.n; ++n) dx.segment((n * d.c + begin) * d.plane(), chunk) += g.segment(n * chunk, chunk);
        });
    }
    return out;
}

}  // namespace

template <typename Scalar>
std::vector<Tensor<Scalar>> split_channels(Tape<Scalar>& tape, const Tensor<Scalar>& x, const std::vector<Index>& widths) {
    Index total = 0;
    for (Index width : widths) {
        if (width < 0) throw ShapeError("split_channels: negative width");
        total += width;
    }
    if (total != x.dims().c) {
        throw ShapeError("split_channels: widths sum to " + std::to_string(total) + " but input has " +
                         std::to_string(x.dims().c) + " channels");
    }
    std::vector<Tensor<Scalar>> parts;
    parts.reserve(widths.size());
    Index begin = 0;
    for (Index width : widths) {
        parts.push_back(slice_channels(tape, x, begin, width));
        begin += width;
    }
    return parts;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(Tape<Scalar>& tape, const std::vector<Tensor<Scalar>>& parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no parts");
    const Dims& first = parts.front().dims();
    Index channels = 0;
    for (const auto& part : parts) {
        const Dims& d = part.dims();
        if (d.n != first.n || d.h != first.h || d.w != first.w) {
            throw ShapeError("concat_channels: part " + d.str() + " does not match " + first.str());
        }
        channels += d.c;
    }
    const Dims od{first.n, channels, first.h, first.w};
    Tensor<Scalar> out(od);
    std::vector<Index> offsets;
    Index begin = 0;
    for (const auto& part : parts) {
        const Index chunk = part.dims().c * od.plane();
        for (Index n = 0; n < od.n; ++n) {
            out.mutable_data().segment((n * od.c + begin) * od.plane(), chunk) = part.data().segment(n * chunk, chunk);
        }
        offsets.push_back(begin);
        begin += part.dims().c;
    }
    if (tape.wants(parts)) {
        tape.record("concat_channels", parts, out, [parts, offsets, od](const auto& g) {
            for (std::size_t i = 0; i < parts.size(); ++i) {
                if (!parts[i].requires_grad()) continue;
                const Index chunk = parts[i].dims().c * od.plane();
                auto& dp = parts[i].mutable_grad();
                for (Index n = 0; n < od.n; ++n) {
                    dp.segment(n * chunk, chunk) += g.segment((n * od.c + offsets[i]) * od.plane(), chunk);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage and bottleneck

template <typename Scalar>
HsStage<Scalar> HsStage<Scalar>::make(const HsBlockConfig& cfg, Rng& rng) {
    HsStage stage;
    stage.config = cfg;
    stage.plan = channel_plan(cfg);
    for (std::size_t i = 0; i < stage.plan.conv_in.size(); ++i) {
        stage.convs.push_back(ConvBn<Scalar>::make(stage.plan.conv_in[i], stage.plan.conv_out[i], cfg.k, 1, rng));
    }
    return stage;
}

template <typename Scalar>
Tensor<Scalar> hs_forward(Tape<Scalar>& tape, const Tensor<Scalar>& x, HsStage<Scalar>& stage, Mode mode) {
    const HsBlockConfig& cfg = stage.config;
    const ChannelPlan& plan = stage.plan;
    if (x.dims().c != cfg.width()) {
        throw ShapeError("hs_forward: input has " + std::to_string(x.dims().c) + " channels, stage expects s*w = " +
                         std::to_string(cfg.width()));
    }
    const Tensor<Scalar> input = cfg.stride == 2 ? avg_pool(tape, x, 2, 2) : x;
    const auto groups = split_channels(tape, input, std::vector<Index>(static_cast<std::size_t>(cfg.s), cfg.w));

    std::vector<Tensor<Scalar>> kept;
    std::optional<Tensor<Scalar>> carry;
    if (plan.first_forward > 0) {
        auto halves = split_channels(tape, groups[0], {plan.out[0], plan.first_forward});
        kept.push_back(halves[0]);
        carry = halves[1];
    } else {
        kept.push_back(groups[0]);
    }

    for (Index i = 2; i <= cfg.s; ++i) {
        const auto slot = static_cast<std::size_t>(i - 2);
        const Tensor<Scalar>& xi = groups[static_cast<std::size_t>(i - 1)];
        const Tensor<Scalar> merged = carry ? concat_channels(tape, std::vector<Tensor<Scalar>>{xi, *carry}) : xi;
        Tensor<Scalar> yi = stage.convs[slot].forward(tape, merged, mode);
        if (i < cfg.s) {
            auto halves = split_channels(tape, yi, {plan.out[slot + 1], plan.forward[slot]});
            kept.push_back(halves[0]);
            carry = halves[1];
        } else {
            kept.push_back(yi);
        }
    }
    return concat_channels(tape, kept);
}

template <typename Scalar>
Tensor<Scalar> Projection<Scalar>::forward(Tape<Scalar>& tape, const Tensor<Scalar>& x, Mode mode) {
    return proj.forward(tape, pool ? avg_pool(tape, x, 2, 2) : x, mode);
}

template <typename Scalar>
std::optional<Projection<Scalar>> make_shortcut(Index in_channels, Index out_channels, Index stride, bool pool_downsample,
                                                Rng& rng) {
    if (stride == 1 && in_channels == out_channels) return std::nullopt;
    Projection<Scalar> p;
    p.pool = stride == 2 && pool_downsample;
    p.proj = ConvBn<Scalar>::make(in_channels, out_channels, 1, p.pool ? 1 : stride, rng, false);
    return p;
}

template <typename Scalar>
HsBottleneck<Scalar> HsBottleneck<Scalar>::make(Index in_channels, Index out_channels, const HsBlockConfig& cfg, Rng& rng,
                                                bool zero_init_expand) {
    cfg.validate();
    HsBottleneck block;
    block.in_channels = in_channels;
    block.out_channels = out_channels;
    block.reduce = ConvBn<Scalar>::make(in_channels, cfg.width(), 1, 1, rng);
    block.stage = HsStage<Scalar>::make(cfg, rng);
    block.expand = ConvBn<Scalar>::make(block.stage.plan.output_width(), out_channels, 1, 1, rng, false,
                                        zero_init_expand ? 0.0 : 1.0);
    block.shortcut = make_shortcut<Scalar>(in_channels, out_channels, cfg.stride, true, rng);
    return block;
}

template <typename Scalar>
Tensor<Scalar> hs_bottleneck_forward(Tape<Scalar>& tape, const Tensor<Scalar>& x, HsBottleneck<Scalar>& block,
                                     Mode mode) {
    if (x.dims().c != block.in_channels) {
        throw ShapeError("hs_bottleneck: input has " + std::to_string(x.dims().c) + " channels, block expects " +
                         std::to_string(block.in_channels));
    }
    const Tensor<Scalar> reduced = block.reduce.forward(tape, x, mode);
    const Tensor<Scalar> main = block.expand.forward(tape, hs_forward(tape, reduced, block.stage, mode), mode);
    const Tensor<Scalar> skip = block.shortcut ? block.shortcut->forward(tape, x, mode) : x;
    if (skip.dims() != main.dims()) {
        throw ShapeError("hs_bottleneck: residual " + skip.dims().str() + " vs main path " + main.dims().str());
    }
    return relu(tape, add(tape, skip, main));
}

#define HSNET_INSTANTIATE(S)                                                                                     \
    template std::vector<Tensor<S>> split_channels<S>(Tape<S>&, const Tensor<S>&, const std::vector<Index>&);    \
    template Tensor<S> concat_channels<S>(Tape<S>&, const std::vector<Tensor<S>>&);                              \
    template struct HsStage<S>;                                                                                  \
    template struct Projection<S>;                                                                               \
    template struct HsBottleneck<S>;                                                                             \
    template Tensor<S> hs_forward<S>(Tape<S>&, const Tensor<S>&, HsStage<S>&, Mode);                             \
    template std::optional<Projection<S>> make_shortcut<S>(Index, Index, Index, bool, Rng&);                     \
    template Tensor<S> hs_bottleneck_forward<S>(Tape<S>&, const Tensor<S>&, HsBottleneck<S>&, Mode);

HSNET_INSTANTIATE(float)
HSNET_INSTANTIATE(double)

}  // namespace hsnet
