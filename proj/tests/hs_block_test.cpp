#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "hsnet/errors.hpp"
#include "hsnet/hs_block.hpp"
#include "oracles.hpp"

using namespace hsnet;

namespace {

using V = std::vector<Index>;

HsBlockConfig cfg(Index s, Index w, HsVariant v = HsVariant::preserve, Index stride = 1) {
    HsBlockConfig c;
    c.s = s;
    c.w = w;
    c.stride = stride;
    c.variant = v;
    return c;
}

// Every conv weight made non-negative and BN reduced to the identity in eval
// mode, so on non-negative inputs each F_i is linear with all ReLUs active.
void linearize(HsStage<double>& stage) {
    for (auto& f : stage.convs) {
        f.conv.weight.mutable_data() = f.conv.weight.data().abs() + 0.01;
        f.bn.epsilon = 0.0;
    }
}

Tensor<double> slice(const Tensor<double>& x, Index begin, Index count) {
    Tape<double> t;
    const Index c = x.dims().c;
    return split_channels(t, x, V{begin, count, c - begin - count})[1];
}

// Which output groups differ between two stage outputs.
std::vector<bool> changed_groups(const Tensor<double>& a, const Tensor<double>& b, const ChannelPlan& plan) {
    std::vector<bool> out;
    Index begin = 0;
    for (Index o : plan.out) {
        out.push_back(!bit_equal(slice(a, begin, o), slice(b, begin, o)));
        begin += o;
    }
    return out;
}

}  // namespace

TEST(ChannelPlan, FiveGroupsOfFour) {
    const auto p = channel_plan(cfg(5, 4));
    EXPECT_EQ(p.conv_in, (V{4, 6, 7, 7}));
    EXPECT_EQ(p.forward, (V{2, 3, 3}));
    EXPECT_EQ(p.out, (V{4, 2, 3, 4, 7}));
    EXPECT_EQ(p.output_width(), 20);
}

TEST(ChannelPlan, TwoGroupsHasNoMiddle) {
    const auto p = channel_plan(cfg(2, 8));
    EXPECT_EQ(p.conv_in, (V{8}));
    EXPECT_TRUE(p.forward.empty());
    EXPECT_EQ(p.out, (V{8, 8}));
    EXPECT_EQ(p.output_width(), 16);
}

TEST(ChannelPlan, SixGroupsOfTwentyEight) {
    const auto p = channel_plan(cfg(6, 28));
    EXPECT_EQ(p.conv_in, (V{28, 42, 49, 52, 54}));
    EXPECT_EQ(p.forward, (V{14, 21, 24, 26}));
    EXPECT_EQ(p.out, (V{28, 14, 21, 25, 26, 54}));
    EXPECT_EQ(p.output_width(), 168);
}

TEST(ChannelPlan, RejectsDegenerateConfigs) {
    EXPECT_THROW(channel_plan(cfg(1, 4)), ConfigError);
    EXPECT_THROW(channel_plan(cfg(4, 0)), ConfigError);
    EXPECT_THROW(channel_plan(cfg(4, 4, HsVariant::preserve, 3)), ConfigError);
}

TEST(ChannelPlan, MatchesRecurrenceAndConservesChannelsOnGrid) {
    for (Index s = 2; s <= 10; ++s)
        for (Index w = 1; w <= 64; ++w) {
            const auto p = channel_plan(cfg(s, w));
            const auto ref = oracle::plan(s, w);
            ASSERT_EQ(p.conv_in, ref.conv_in) << s << "," << w;
            ASSERT_EQ(p.conv_out, ref.conv_in) << s << "," << w;
            ASSERT_EQ(p.forward, ref.fwd) << s << "," << w;
            ASSERT_EQ(p.out, ref.out) << s << "," << w;
            ASSERT_EQ(p.output_width(), s * w);
        }
}

TEST(ChannelPlan, KeptHalfTakesTheCeiling) {
    for (Index w = 1; w <= 9; ++w) {
        const auto p = channel_plan(cfg(4, w));
        for (std::size_t i = 0; i < p.forward.size(); ++i) {
            EXPECT_EQ(p.out[i + 1], (p.conv_out[i] + 1) / 2);
            EXPECT_EQ(p.forward[i], p.conv_out[i] / 2);
        }
    }
}

TEST(ChannelPlan, SplitFirstVariantConservesChannels) {
    const auto p = channel_plan(cfg(5, 4, HsVariant::split_first));
    EXPECT_EQ(p.first_forward, 2);
    EXPECT_EQ(p.conv_in, (V{6, 7, 7, 7}));
    EXPECT_EQ(p.out, (V{2, 3, 4, 4, 7}));
    for (Index s = 2; s <= 10; ++s)
        for (Index w = 1; w <= 64; ++w) ASSERT_EQ(channel_plan(cfg(s, w, HsVariant::split_first)).output_width(), s * w);
}

TEST(ChannelPlan, ProjectVariantEmitsGroupWidth) {
    const auto p = channel_plan(cfg(5, 4, HsVariant::project_w));
    EXPECT_EQ(p.conv_in, (V{4, 6, 6, 6}));
    EXPECT_EQ(p.conv_out, (V{4, 4, 4, 4}));
    EXPECT_EQ(p.out, (V{4, 2, 2, 2, 4}));
}

TEST(Variant, NamesRoundTrip) {
    for (auto v : {HsVariant::preserve, HsVariant::split_first, HsVariant::project_w}) {
        EXPECT_EQ(parse_variant(to_string(v)), v);
    }
    EXPECT_THROW((void)parse_variant("C-other"), ConfigError);
}

TEST(SplitChannels, EvenUnevenAndIdentity) {
    Rng rng(1);
    const auto x = randn<double>({2, 20, 3, 3}, rng, 1.0);
    Tape<double> t;
    const auto parts = split_channels(t, x, V{4, 4, 4, 4, 4});
    ASSERT_EQ(parts.size(), 5u);
    for (Index g = 0; g < 5; ++g)
        for (Index n = 0; n < 2; ++n)
            for (Index c = 0; c < 4; ++c)
                for (Index i = 0; i < 9; ++i)
                    ASSERT_EQ(parts[g].at(n, c, i / 3, i % 3), x.at(n, 4 * g + c, i / 3, i % 3));

    const auto y = randn<double>({1, 7, 2, 2}, rng, 1.0);
    const auto uneven = split_channels(t, y, V{4, 3});
    EXPECT_EQ(uneven[0].dims().c, 4);
    EXPECT_EQ(uneven[1].dims().c, 3);
    EXPECT_EQ(uneven[1].at(0, 0, 1, 1), y.at(0, 4, 1, 1));
    EXPECT_EQ(uneven[0].at(0, 3, 0, 1), y.at(0, 3, 0, 1));

    EXPECT_TRUE(bit_equal(split_channels(t, y, V{7})[0], y));
}

TEST(SplitChannels, WidthErrors) {
    Tape<double> t;
    EXPECT_THROW(split_channels(t, zeros<double>({1, 7, 1, 1}), V{4, 4}), ShapeError);
    EXPECT_THROW(split_channels(t, zeros<double>({1, 7, 1, 1}), V{8, -1}), ShapeError);
}

TEST(ConcatChannels, IdentityRoundTripAndErrors) {
    Rng rng(2);
    const auto a = randn<double>({2, 3, 4, 4}, rng, 1.0);
    const auto b = randn<double>({2, 5, 4, 4}, rng, 1.0);
    Tape<double> t;
    EXPECT_TRUE(bit_equal(concat_channels(t, std::vector{a}), a));
    const auto parts = split_channels(t, concat_channels(t, std::vector{a, b}), V{3, 5});
    EXPECT_TRUE(bit_equal(parts[0], a));
    EXPECT_TRUE(bit_equal(parts[1], b));
    EXPECT_THROW(concat_channels(t, std::vector{a, zeros<double>({2, 1, 4, 3})}), ShapeError);
    EXPECT_THROW(concat_channels(t, std::vector{a, zeros<double>({1, 1, 4, 4})}), ShapeError);
}

TEST(ConcatChannels, GradientRoutesSlices) {
    Rng rng(3);
    auto a = randn<double>({2, 2, 2, 2}, rng, 1.0);
    auto b = randn<double>({2, 3, 2, 2}, rng, 1.0);
    const auto r = randn<double>({2, 5, 2, 2}, rng, 1.0);
    const double err = oracle::max_grad_error(
        [&](Tape<double>& t) {
            const auto y = concat_channels(t, std::vector{a, b});
            const auto back = split_channels(t, mul(t, y, r), V{1, 4});
            return add(t, sum(t, back[0]), scale(t, sum(t, mul(t, back[1], back[1])), 0.5));
        },
        {a, b});
    EXPECT_LT(err, 1e-4);
}

TEST(HsForward, PreservesShape) {
    Rng rng(4);
    auto stage = HsStage<double>::make(cfg(5, 4), rng);
    Tape<double> t;
    EXPECT_EQ(hs_forward(t, randn<double>({2, 20, 8, 8}, rng, 1.0), stage, Mode::train).dims(), (Dims{2, 20, 8, 8}));
    auto strided = HsStage<double>::make(cfg(5, 4, HsVariant::preserve, 2), rng);
    EXPECT_EQ(hs_forward(t, randn<double>({1, 20, 8, 8}, rng, 1.0), strided, Mode::train).dims(), (Dims{1, 20, 4, 4}));
    EXPECT_THROW(hs_forward(t, zeros<double>({1, 19, 8, 8}), stage, Mode::eval), ShapeError);
}

TEST(HsForward, RandomConfigsKeepChannelCount) {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const Index s = 2 + static_cast<Index>(rng.uniform_index(9));
        const Index w = 1 + static_cast<Index>(rng.uniform_index(6));
        auto stage = HsStage<double>::make(cfg(s, w), rng);
        Tape<double> t;
        const auto y = hs_forward(t, randn<double>({2, s * w, 4, 4}, rng, 1.0), stage, Mode::train);
        ASSERT_EQ(y.dims(), (Dims{2, s * w, 4, 4}));
    }
}

TEST(HsForward, TwoGroupsIsHalfIdentityHalfConv) {
    Rng rng(6);
    auto stage = HsStage<double>::make(cfg(2, 3), rng);
    const auto x = randn<double>({2, 6, 5, 5}, rng, 1.0);
    Tape<double> t;
    const auto got = hs_forward(t, x, stage, Mode::train);

    Tape<double> h;
    const auto halves = split_channels(h, x, V{3, 3});
    auto& f = stage.convs[0];
    const auto conv = relu(h, batch_norm(h, conv2d(h, halves[1], f.conv), f.bn, Mode::train));
    EXPECT_TRUE(bit_equal(got, concat_channels(h, std::vector{halves[0], conv})));
}

TEST(HsForward, DependencyReachFollowsThePlan) {
    Rng rng(7);
    for (auto variant : {HsVariant::preserve, HsVariant::split_first}) {
        const Index s = 5, w = 4;
        auto stage = HsStage<double>::make(cfg(s, w, variant), rng);
        linearize(stage);
        const auto x = uniform<double>({1, s * w, 6, 6}, rng, 0.5, 1.5);
        Tape<double> t;
        const auto base = hs_forward(t, x, stage, Mode::eval);
        for (Index g = 0; g < s; ++g) {
            auto probe = x.clone();
            for (Index c = g * w; c < (g + 1) * w; ++c)
                for (Index i = 0; i < 36; ++i) probe.at(0, c, i / 6, i % 6) = 0.0;
            const auto changed = changed_groups(base, hs_forward(t, probe, stage, Mode::eval), stage.plan);
            for (Index j = 0; j < s; ++j) {
                // Group g reaches every later group; the unsplit first group
                // of the preserve variant reaches only itself.
                bool expect = j >= g;
                if (g == 0 && variant == HsVariant::preserve) expect = j == 0;
                EXPECT_EQ(changed[static_cast<std::size_t>(j)], expect)
                    << to_string(variant) << ": zeroing x" << g + 1 << ", output group " << j + 1;
            }
        }
    }
}

TEST(HsForward, GroupOutputsStackOneConvPerGroup) {
    // An impulse in x_2 spreads one pixel per 3x3 conv on its way to y_i, so
    // group i's output support (1-based) has radius i - 1.
    Rng rng(8);
    const Index s = 5, w = 2, side = 15, mid = 7;
    auto stage = HsStage<double>::make(cfg(s, w), rng);
    linearize(stage);
    auto x = zeros<double>({1, s * w, side, side});
    x.at(0, w, mid, mid) = 1.0;
    Tape<double> t;
    const auto y = hs_forward(t, x, stage, Mode::eval);
    Index begin = 0;
    for (Index j = 0; j < s; ++j) {
        Index radius = -1;
        for (Index c = begin; c < begin + stage.plan.out[static_cast<std::size_t>(j)]; ++c)
            for (Index r = 0; r < side; ++r)
                for (Index q = 0; q < side; ++q)
                    if (y.at(0, c, r, q) != 0.0) radius = std::max({radius, std::abs(r - mid), std::abs(q - mid)});
        EXPECT_EQ(radius, j == 0 ? -1 : j) << "output group " << j + 1;
        begin += stage.plan.out[static_cast<std::size_t>(j)];
    }
}

TEST(HsBottleneck, ZeroExpandGivesReluOfInput) {
    Rng rng(9);
    auto block = HsBottleneck<double>::make(12, 12, cfg(3, 4), rng, false);
    block.expand.conv.weight.mutable_data().setZero();
    ASSERT_FALSE(block.shortcut.has_value());
    const auto x = randn<double>({2, 12, 5, 5}, rng, 1.0);
    Tape<double> t;
    EXPECT_TRUE(bit_equal(hs_bottleneck_forward(t, x, block, Mode::eval), relu(t, x)));
}

TEST(HsBottleneck, StrideTwoHalvesBothPaths) {
    Rng rng(10);
    auto block = HsBottleneck<double>::make(64, 128, cfg(4, 8, HsVariant::preserve, 2), rng);
    Tape<double> t;
    EXPECT_EQ(hs_bottleneck_forward(t, randn<double>({1, 64, 8, 8}, rng, 1.0), block, Mode::train).dims(),
              (Dims{1, 128, 4, 4}));
    EXPECT_THROW(hs_bottleneck_forward(t, zeros<double>({1, 32, 8, 8}), block, Mode::train), ShapeError);
}

TEST(HsBottleneck, GradientsMatchFiniteDifferences) {
    for (auto variant : {HsVariant::preserve, HsVariant::split_first, HsVariant::project_w}) {
        Rng rng(11);
        auto block = HsBottleneck<double>::make(6, 8, cfg(3, 3, variant, 2), rng, false);
        std::vector<Tensor<double>> inputs;
        block.visit("b", [&](const std::string&, Tensor<double>& p, ParamKind kind) {
            if (kind == ParamKind::bn_gamma) p.mutable_data() = uniform<double>(p.dims(), rng, 0.5, 1.5).data();
            if (kind == ParamKind::bn_beta) p.mutable_data() = uniform<double>(p.dims(), rng, -0.3, 0.3).data();
            if (is_trainable(kind)) inputs.push_back(p);
        });
        auto x = randn<double>({3, 6, 6, 6}, rng, 1.0);
        inputs.push_back(x);
        const auto r = randn<double>({3, 8, 3, 3}, rng, 1.0);
        const double err = oracle::max_grad_error(
            [&](Tape<double>& t) { return sum(t, mul(t, hs_bottleneck_forward(t, x, block, Mode::train), r)); },
            inputs);
        EXPECT_LT(err, 1e-4) << to_string(variant);
    }
}
