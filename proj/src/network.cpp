#include "hsnet/network.hpp"

#include <charconv>

namespace hsnet {

std::string_view to_string(BlockType t) noexcept {
    return t == BlockType::plain_bottleneck ? "plain-bottleneck" : "hs-bottleneck";
}

std::string_view to_string(Stem s) noexcept {
    return s == Stem::classic_7x7 ? "classic-7x7" : "resnet-d-3x3x3";
}

BlockType parse_block_type(std::string_view name) {
    if (name == "plain-bottleneck") return BlockType::plain_bottleneck;
    if (name == "hs-bottleneck") return BlockType::hs_bottleneck;
    throw ConfigError("unknown block type '" + std::string(name) + "'");
}

Stem parse_stem(std::string_view name) {
    if (name == "classic-7x7") return Stem::classic_7x7;
    if (name == "resnet-d-3x3x3") return Stem::resnet_d_3x3x3;
    throw ConfigError("unknown stem '" + std::string(name) + "'");
}

Index NetworkConfig::stage_width(int stage) const {
    if (stage < 0 || stage >= 4) throw ConfigError("stage index out of range");
    if (custom_widths) return (*custom_widths)[static_cast<std::size_t>(stage)];
    return base_w << stage;
}

Index NetworkConfig::stage_mid(int stage) const {
    return block_type == BlockType::hs_bottleneck ? s * stage_width(stage) : stage_width(stage);
}

Index NetworkConfig::stage_out(int stage) const {
    if (stage < 0 || stage >= 4) throw ConfigError("stage index out of range");
    return stage_out_base << stage;
}

HsBlockConfig NetworkConfig::hs_config(int stage, Index stride) const {
    return HsBlockConfig{s, stage_width(stage), kernel, stride, variant};
}

std::string NetworkConfig::width_rule() const {
    return custom_widths ? "custom" : "double-per-stage";
}

void NetworkConfig::validate() const {
    for (Index blocks : stage_blocks) {
        if (blocks < 1) throw ConfigError("every stage needs at least one block");
    }
    if (custom_widths) {
        for (Index w : *custom_widths) {
            if (w < 1) throw ConfigError("custom stage widths must be >= 1");
        }
    } else if (base_w < 1) {
        throw ConfigError("base_w must be >= 1");
    }
    if (block_type == BlockType::hs_bottleneck) {
        for (int j = 0; j < 4; ++j) hs_config(j, 1).validate();
    }
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel must be odd");
    if (stem_channels < 2 || stem_channels % 2 != 0) throw ConfigError("stem_channels must be even and >= 2");
    if (stage_out_base < 1) throw ConfigError("stage_out_base must be >= 1");
    if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
    if (image_size < 1) throw ConfigError("image_size must be >= 1");
}

namespace {

NetworkConfig resnet50_family(BlockType type, Stem stem) {
    NetworkConfig cfg;
    cfg.block_type = type;
    cfg.stem = stem;
    if (type == BlockType::plain_bottleneck) {
        cfg.base_w = 64;
        cfg.s = 1;
        cfg.zero_init_residual = false;
    }
    return cfg;
}

NetworkConfig tiny(BlockType type) {
    NetworkConfig cfg;
    cfg.block_type = type;
    cfg.stage_blocks = {1, 1, 1, 1};
    cfg.stem = Stem::resnet_d_3x3x3;
    cfg.stem_channels = 16;
    cfg.stage_out_base = 64;
    cfg.num_classes = 10;
    cfg.image_size = 32;
    if (type == BlockType::hs_bottleneck) {
        cfg.base_w = 4;
        cfg.s = 4;
    } else {
        // Middle width chosen so the parameter count matches tiny-hs as
        // closely as a doubling rule allows (see match_plain_budget).
        cfg.base_w = 12;
        cfg.s = 1;
    }
    return cfg;
}

}  // namespace

NetworkConfig preset(std::string_view name) {
    if (name == "resnet50") return resnet50_family(BlockType::plain_bottleneck, Stem::classic_7x7);
    if (name == "resnet50-d") return resnet50_family(BlockType::plain_bottleneck, Stem::resnet_d_3x3x3);
    if (name == "tiny-hs") return tiny(BlockType::hs_bottleneck);
    if (name == "tiny-plain") return tiny(BlockType::plain_bottleneck);
    // hs-<w>w-<s>s
    if (name.starts_with("hs-") && name.ends_with("s")) {
        const auto body = name.substr(3, name.size() - 4);
        const auto sep = body.find("w-");
        if (sep != std::string_view::npos) {
            Index w = 0, s = 0;
            const auto wr = std::from_chars(body.data(), body.data() + sep, w);
            const auto sr = std::from_chars(body.data() + sep + 2, body.data() + body.size(), s);
            if (wr.ec == std::errc{} && wr.ptr == body.data() + sep && sr.ec == std::errc{} &&
                sr.ptr == body.data() + body.size()) {
                NetworkConfig cfg = resnet50_family(BlockType::hs_bottleneck, Stem::resnet_d_3x3x3);
                cfg.base_w = w;
                cfg.s = s;
                cfg.validate();
                return cfg;
            }
        }
    }
    throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> sweep_preset_names() {
    return {"hs-18w-8s", "hs-22w-7s", "hs-28w-6s", "hs-40w-5s"};
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names{"resnet50", "resnet50-d"};
    for (auto& n : sweep_preset_names()) names.push_back(n);
    names.emplace_back("tiny-hs");
    names.emplace_back("tiny-plain");
    return names;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
PlainBottleneck<Scalar> PlainBottleneck<Scalar>::make(Index in_channels, Index out_channels, Index mid_channels,
                                                      Index kernel, Index stride, bool pool_downsample, Rng& rng,
                                                      bool zero_init_expand) {
    PlainBottleneck block;
    block.in_channels = in_channels;
    block.out_channels = out_channels;
    block.reduce = ConvBn<Scalar>::make(in_channels, mid_channels, 1, 1, rng);
    block.mid = ConvBn<Scalar>::make(mid_channels, mid_channels, kernel, stride, rng);
    block.expand = ConvBn<Scalar>::make(mid_channels, out_channels, 1, 1, rng, false, zero_init_expand ? 0.0 : 1.0);
    block.shortcut = make_shortcut<Scalar>(in_channels, out_channels, stride, pool_downsample, rng);
    return block;
}

template <typename Scalar>
Tensor<Scalar> plain_bottleneck_forward(Tape<Scalar>& tape, const Tensor<Scalar>& x, PlainBottleneck<Scalar>& block,
                                        Mode mode) {
    if (x.dims().c != block.in_channels) {
        throw ShapeError("plain_bottleneck: input has " + std::to_string(x.dims().c) + " channels, block expects " +
                         std::to_string(block.in_channels));
    }
    Tensor<Scalar> main = block.reduce.forward(tape, x, mode);
    main = block.mid.forward(tape, main, mode);
    main = block.expand.forward(tape, main, mode);
    const Tensor<Scalar> skip = block.shortcut ? block.shortcut->forward(tape, x, mode) : x;
    if (skip.dims() != main.dims()) {
        throw ShapeError("plain_bottleneck: residual " + skip.dims().str() + " vs main path " + main.dims().str());
    }
    return relu(tape, add(tape, skip, main));
}

namespace {

template <typename Fn>
auto named(const std::string& where, Fn&& fn) {
    try {
        return fn();
    } catch (const NumericError& e) {
        throw NumericError(where + ": " + e.what());
    }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> Network<Scalar>::forward(Tape<Scalar>& tape, const Tensor<Scalar>& x, Mode mode) {
    const Dims& d = x.dims();
    if (d.c != 3 || d.h != config.image_size || d.w != config.image_size) {
        throw ShapeError("network expects (N, 3, " + std::to_string(config.image_size) + ", " +
                         std::to_string(config.image_size) + "), got " + d.str());
    }
    if (!x.all_finite()) throw NumericError("input: batch contains a non-finite value");
    Tensor<Scalar> h = x;
    for (std::size_t i = 0; i < stem.size(); ++i) {
        h = named("stem." + std::to_string(i), [&] { return stem[i].forward(tape, h, mode); });
    }
    h = named("stem.pool", [&] { return max_pool(tape, h, 3, 2, 1); });
    for (std::size_t j = 0; j < stages.size(); ++j) {
        for (std::size_t b = 0; b < stages[j].size(); ++b) {
            const std::string where = "stage" + std::to_string(j + 1) + ".block" + std::to_string(b);
            h = named(where, [&] {
                return std::visit(
                    [&](auto& block) -> Tensor<Scalar> {
                        using B = std::decay_t<decltype(block)>;
                        if constexpr (std::is_same_v<B, HsBottleneck<Scalar>>) {
                            return hs_bottleneck_forward(tape, h, block, mode);
                        } else {
                            return plain_bottleneck_forward(tape, h, block, mode);
                        }
                    },
                    stages[j][b]);
            });
        }
    }
    return named("head", [&] { return linear(tape, global_avg_pool(tape, h), head); });
}

template <typename Scalar>
Tensor<Scalar> Network<Scalar>::forward(const Tensor<Scalar>& x, Mode mode) {
    Tape<Scalar> tape;
    tape.set_recording(false);
    return forward(tape, x, mode);
}

template <typename Scalar>
std::vector<NamedTensor<Scalar>> Network<Scalar>::named_tensors() {
    std::vector<NamedTensor<Scalar>> out;
    visit([&](const std::string& name, Tensor<Scalar>& t, ParamKind kind) { out.push_back({name, t, kind}); });
    return out;
}

template <typename Scalar>
std::vector<NamedTensor<Scalar>> Network<Scalar>::parameters() {
    std::vector<NamedTensor<Scalar>> out;
    visit([&](const std::string& name, Tensor<Scalar>& t, ParamKind kind) {
        if (is_trainable(kind)) out.push_back({name, t, kind});
    });
    return out;
}

template <typename Scalar>
Index Network<Scalar>::parameter_count() {
    Index total = 0;
    for (const auto& p : parameters()) total += p.tensor.size();
    return total;
}

template <typename Scalar>
void Network<Scalar>::zero_grad() {
    for (auto& p : parameters()) p.tensor.zero_grad();
}

template <typename Scalar>
Network<Scalar> build(const NetworkConfig& cfg, Rng& rng) {
    cfg.validate();
    Network<Scalar> net;
    net.config = cfg;
    if (cfg.stem == Stem::classic_7x7) {
        net.stem.push_back(ConvBn<Scalar>::make(3, cfg.stem_channels, 7, 2, rng));
    } else {
        const Index half = cfg.stem_channels / 2;
        net.stem.push_back(ConvBn<Scalar>::make(3, half, 3, 2, rng));
        net.stem.push_back(ConvBn<Scalar>::make(half, half, 3, 1, rng));
        net.stem.push_back(ConvBn<Scalar>::make(half, cfg.stem_channels, 3, 1, rng));
    }

    Index channels = cfg.stem_channels;
    const bool pool_downsample = cfg.stem == Stem::resnet_d_3x3x3;
    for (int j = 0; j < 4; ++j) {
        const Index out = cfg.stage_out(j);
        for (Index b = 0; b < cfg.stage_blocks[static_cast<std::size_t>(j)]; ++b) {
            const Index stride = b == 0 ? cfg.stage_stride(j) : 1;
            if (cfg.block_type == BlockType::hs_bottleneck) {
                net.stages[static_cast<std::size_t>(j)].push_back(
                    HsBottleneck<Scalar>::make(channels, out, cfg.hs_config(j, stride), rng, cfg.zero_init_residual));
            } else {
                net.stages[static_cast<std::size_t>(j)].push_back(PlainBottleneck<Scalar>::make(
                    channels, out, cfg.stage_mid(j), cfg.kernel, stride, pool_downsample, rng, cfg.zero_init_residual));
            }
            channels = out;
        }
    }
    net.head = Linear<Scalar>::make(channels, cfg.num_classes, rng);
    return net;
}

#define HSNET_INSTANTIATE(S)                                                                                      \
    template struct PlainBottleneck<S>;                                                                           \
    template Tensor<S> plain_bottleneck_forward<S>(Tape<S>&, const Tensor<S>&, PlainBottleneck<S>&, Mode);        \
    template class Network<S>;                                                                                    \
    template Network<S> build<S>(const NetworkConfig&, Rng&);

HSNET_INSTANTIATE(float)
HSNET_INSTANTIATE(double)

}  // namespace hsnet
