#include <gtest/gtest.h>

#include <sys/wait.h>
#include <zlib.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "hsnet/checkpoint.hpp"
#include "hsnet/config.hpp"
#include "hsnet/optim.hpp"
#include "hsnet/train.hpp"
#include "oracles.hpp"

using namespace hsnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "hsnet_cli_test";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int status;
    std::string out;
};

Run cli(const std::string& args) {
    const auto log = scratch("cli_output.txt");
    const std::string cmd = std::string(HSNET_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(log)};
}

RunConfig small_run(std::uint64_t seed = 42) {
    return parse_run_config(R"({"version": 1, "seed": )" + std::to_string(seed) + R"(,
        "network": {"preset": "tiny-hs"},
        "data": {"kind": "synth_blobs", "classes": 10, "per_class": 4, "eval_per_class": 2},
        "train": {"epochs": 3, "batch_size": 8, "eval_batch_size": 16}})");
}

}  // namespace

TEST(CosineLr, Endpoints) {
    EXPECT_EQ(cosine_lr(0, 100, 0.1), 0.1);
    EXPECT_NEAR(cosine_lr(50, 100, 0.1), 0.05, 1e-17);
    EXPECT_NEAR(cosine_lr(100, 100, 0.1), 0.0, 1e-17);
    EXPECT_THROW(cosine_lr(101, 100, 0.1), ArgumentError);
    EXPECT_THROW(cosine_lr(0, 0, 0.1), ArgumentError);
}

TEST(SgdStep, ReductionsAndFixedPoint) {
    using A = Tensor<double>::Array;
    A p(3), g(3), v = A::Zero(3);
    p << 1.0, -2.0, 0.5;
    g << 0.5, 0.25, -1.0;
    A expect = p - 0.1 * g;
    sgd_step<double>(p, g, v, 0.1, 0.0, 0.0);
    EXPECT_TRUE((p == expect).all());

    A q = p, zero = A::Zero(3), w = A::Zero(3);
    sgd_step<double>(q, zero, w, 0.1, 0.9, 0.0);
    EXPECT_TRUE((q == p).all());

    A bad = A::Zero(2);
    EXPECT_THROW(sgd_step<double>(q, bad, w, 0.1, 0.9, 0.0), ShapeError);
}

TEST(SgdStep, TwoStepsMatchScalarSimulator) {
    for (double wd : {0.0, 0.01}) {
        using A = Tensor<double>::Array;
        A x = A::Constant(1, 1.0), v = A::Zero(1);
        oracle::ScalarSgd ref{1.0};
        for (int step = 0; step < 2; ++step) {
            const A g = x;  // f(x) = x^2 / 2
            sgd_step<double>(x, g, v, 0.1, 0.9, wd);
            ref.step(0.1, 0.9, wd);
            EXPECT_EQ(x[0], ref.x);
            EXPECT_EQ(v[0], ref.v);
        }
    }
    oracle::ScalarSgd ref{1.0};
    ref.step(0.1, 0.9, 0.0);
    EXPECT_DOUBLE_EQ(ref.x, 0.9);
    ref.step(0.1, 0.9, 0.0);
    EXPECT_DOUBLE_EQ(ref.v, 1.8);
    EXPECT_DOUBLE_EQ(ref.x, 0.72);
}

TEST(Sgd, WeightDecayReachesOnlyWeightsByDefault) {
    for (bool decay_all : {false, true}) {
        Rng rng(1);
        auto net = build<double>(preset("tiny-hs"), rng);
        net.zero_grad();
        for (auto& p : net.parameters()) p.tensor.mutable_grad().setZero();
        auto gamma = net.stem[0].bn.gamma.clone();
        auto weight = net.stem[0].conv.weight.clone();
        Sgd<double> sgd(0.9, 0.1, decay_all);
        sgd.step(net, 0.5);
        EXPECT_EQ(bit_equal(net.stem[0].bn.gamma, gamma), !decay_all);
        EXPECT_FALSE(bit_equal(net.stem[0].conv.weight, weight));
    }
}

TEST(Config, DefaultsAndRoundTrip) {
    const auto c = parse_run_config(R"({"version": 1})");
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.precision, Precision::float32);
    EXPECT_EQ(c.network, preset("tiny-hs"));
    EXPECT_EQ(c.train.batch_size, 128);
    EXPECT_EQ(c.train.epochs, 30);
    EXPECT_EQ(c.train.base_lr, 0.1);
    EXPECT_EQ(c.train.momentum, 0.9);
    EXPECT_EQ(c.train.weight_decay, 1e-4);

    auto custom = parse_run_config(R"({"version": 1, "seed": 7, "precision": "float64",
        "network": {"preset": "tiny-hs", "variant": "A-split-first", "width_rule": [3, 5, 7, 9], "s": 3},
        "train": {"mixup_alpha": 0.2, "normalize_mean": [0.5, 0.5, 0.5]}})");
    EXPECT_EQ(custom.network.variant, HsVariant::split_first);
    EXPECT_EQ(custom.network.s, 3);
    EXPECT_EQ(parse_run_config(to_json_text(custom)), custom);
    EXPECT_EQ(parse_run_config(to_json_text(c)), c);
}

TEST(Config, RejectsBadDocuments) {
    const char* bad[] = {
        R"({"version": 1, "sed": 3})",
        R"({"version": 1, "network": {"preset": "tiny-hs", "widht": 3}})",
        R"({"version": 1, "train": {"momentum": 1.0}})",
        R"({"version": 1, "train": {"epochs": "ten"}})",
        R"({"version": 2})",
        R"({"seed": 1})",
        R"({"version": 1, "data": {"classes": 5}})",
        R"({"version": 1, "network": {"preset": "tiny-hs", "s": 1}})",
        R"({"version": 1,)",
        R"([1, 2])",
    };
    for (const char* doc : bad) EXPECT_THROW(parse_run_config(doc), ConfigError) << doc;
}

TEST(Checkpoint, LayoutAndChecksum) {
    const std::vector<CheckpointTensor> tensors{{"a", {1, 2, 1, 1}, {1.5f, -2.0f}}, {"bb", {1}, {3.0f}}};
    const auto bytes = encode_checkpoint(tensors);
    ASSERT_GE(bytes.size(), 8u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "HSNT");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[8], 2);
    // 12 header + (4 + 1 + 4 + 32 + 8) + (4 + 2 + 4 + 8 + 4) + 4 CRC
    EXPECT_EQ(bytes.size(), 12u + 49u + 22u + 4u);
    const auto body = static_cast<uInt>(bytes.size() - 4);
    const auto crc = static_cast<std::uint32_t>(crc32(0L, bytes.data(), body));
    const std::uint32_t stored = bytes[body] | (bytes[body + 1] << 8) | (bytes[body + 2] << 16) |
                                 (static_cast<std::uint32_t>(bytes[body + 3]) << 24);
    EXPECT_EQ(stored, crc);
    const auto back = decode_checkpoint(bytes);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].name, "a");
    EXPECT_EQ(back[0].values, tensors[0].values);
    EXPECT_EQ(back[1].dims, tensors[1].dims);
}

TEST(Checkpoint, RoundTripIsBitExactIncludingRunningStats) {
    Rng rng(2);
    auto net = build<float>(preset("tiny-hs"), rng);
    {
        Tape<float> tape;
        net.forward(tape, randn<float>({4, 3, 32, 32}, rng, 1.0), Mode::train);
    }
    const auto file = scratch("roundtrip.ckpt");
    save_checkpoint(net, file);
    Rng other(99);
    auto fresh = build<float>(preset("tiny-hs"), other);
    load_checkpoint(fresh, file);
    const auto a = net.named_tensors();
    const auto b = fresh.named_tensors();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_equal(a[i].tensor, b[i].tensor)) << a[i].name;
}

TEST(Checkpoint, CorruptionIsDetectedWithoutPartialLoad) {
    Rng rng(3);
    auto net = build<float>(preset("tiny-hs"), rng);
    const auto file = scratch("corrupt.ckpt");
    save_checkpoint(net, file);
    auto bytes = slurp(file);
    Rng target(4);
    auto victim = build<float>(preset("tiny-hs"), target);
    const auto before = victim.named_tensors().front().tensor.clone();
    for (std::size_t pos : {std::size_t{0}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
        auto broken = bytes;
        broken[pos] = static_cast<char>(broken[pos] ^ 0x10);
        std::ofstream(file, std::ios::binary | std::ios::trunc) << broken;
        EXPECT_THROW(load_checkpoint(victim, file), CorruptionError) << "flipped byte " << pos;
        EXPECT_TRUE(bit_equal(victim.named_tensors().front().tensor, before));
    }
    std::ofstream(file, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() / 3);
    EXPECT_THROW(load_checkpoint(victim, file), Error);
}

TEST(Checkpoint, MismatchedNetworkIsIncompatible) {
    Rng rng(5);
    auto net = build<float>(preset("tiny-hs"), rng);
    const auto file = scratch("mismatch.ckpt");
    save_checkpoint(net, file);
    auto other_cfg = preset("tiny-hs");
    other_cfg.s = 3;
    auto other = build<float>(other_cfg, rng);
    EXPECT_THROW(load_checkpoint(other, file), IncompatibleError);
    auto plain = build<float>(preset("tiny-plain"), rng);
    EXPECT_THROW(load_checkpoint(plain, file), IncompatibleError);
}

TEST(Train, LogScheduleCheckpointsAndReproducibility) {
    const auto cfg = small_run();
    const auto dir1 = scratch("run_a");
    const auto dir2 = scratch("run_b");
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    const auto r1 = train(cfg, dir1);
    const auto r2 = train(cfg, dir2);
    ASSERT_EQ(r1.epochs.size(), 3u);
    const Index steps = 40 / 8;
    for (const auto& e : r1.epochs) {
        EXPECT_EQ(e.lr, cosine_lr((e.epoch - 1) * steps, 3 * steps, 0.1));
        EXPECT_GE(e.eval_top5, e.eval_acc);
    }
    for (const char* f : {"log.jsonl", "config.json", "last.ckpt", "best.ckpt"}) {
        ASSERT_TRUE(fs::exists(dir1 / f)) << f;
        EXPECT_EQ(slurp(dir1 / f), slurp(dir2 / f)) << f;
    }
    std::istringstream log(slurp(dir1 / "log.jsonl"));
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) EXPECT_EQ(line, r1.epochs[static_cast<std::size_t>(lines++)].json());
    EXPECT_EQ(lines, 3);

    const auto data = load_data(cfg);
    const auto best = evaluate_checkpoint(cfg, dir1 / "best.ckpt", data.eval);
    EXPECT_EQ(best.top1, r1.best_eval_acc);
    const auto& row = r1.epochs[static_cast<std::size_t>(r1.best_epoch - 1)];
    EXPECT_EQ(best.loss, row.eval_loss);
    EXPECT_EQ(best.top5, row.eval_top5);

    auto other = cfg;
    other.network.s = 3;
    EXPECT_THROW(evaluate_checkpoint(other, dir1 / "best.ckpt", data.eval), IncompatibleError);
}

TEST(Train, DifferentSeedChangesTheRun) {
    const auto a = train(small_run(1), {});
    const auto b = train(small_run(2), {});
    EXPECT_NE(a.epochs.back().train_loss, b.epochs.back().train_loss);
}

TEST(Train, DivergenceNamesEpochStepAndLayer) {
    auto cfg = small_run();
    cfg.train.base_lr = 1e30;
    try {
        train(cfg, {});
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("epoch "), std::string::npos) << msg;
        EXPECT_NE(msg.find("step "), std::string::npos) << msg;
        const bool names_layer = msg.find("stem") != std::string::npos || msg.find("stage") != std::string::npos ||
                                 msg.find("head") != std::string::npos;
        EXPECT_TRUE(names_layer) << msg;
    }
}

TEST(Evaluate, RandomNetworkIsNearChance) {
    // Blobs carry class structure a random net can pick up, so shuffle the
    // labels: then every predictor scores 1/K in expectation.
    auto data = synth_blobs(10, 100, 32, Rng(6));
    Rng shuffle(11);
    const auto perm = shuffle.permutation(data.size());
    const auto labels = data.labels;
    for (Index i = 0; i < data.size(); ++i) data.labels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    double total = 0.0;
    const int nets = 5;
    for (int seed = 0; seed < nets; ++seed) {
        Rng rng(static_cast<std::uint64_t>(100 + seed));
        auto net = build<float>(preset("tiny-hs"), rng);
        const auto r = evaluate(net, data, Normalization{}, 100);
        EXPECT_GE(r.top5, r.top1);
        EXPECT_EQ(r.count, 1000);
        total += r.top1;
    }
    EXPECT_NEAR(total / nets, 0.10, 0.03);
    Rng rng(7);
    auto wrong = build<float>(preset("tiny-hs"), rng);
    EXPECT_THROW(evaluate(wrong, synth_blobs(5, 2, 32, Rng(1)), Normalization{}, 4), IncompatibleError);
}

TEST(Gradcheck, TinyPresetPasses) {
    const auto r = gradcheck(preset("tiny-hs"), 20, 3);
    EXPECT_EQ(r.samples.size(), 20u);
    EXPECT_TRUE(r.passed()) << r.max_rel_error;
}

TEST(Cli, PlanPrintsTheOutputWidths) {
    const auto r = cli("plan --s 5 --w 4");
    EXPECT_EQ(r.status, 0) << r.out;
    std::istringstream in(r.out);
    std::string line;
    std::vector<std::string> outs;
    std::getline(in, line);
    std::getline(in, line);
    for (int g = 0; g < 5 && std::getline(in, line); ++g) {
        std::istringstream cols(line);
        std::string tok, last;
        while (cols >> tok) last = tok;
        outs.push_back(last);
    }
    EXPECT_EQ(outs, (std::vector<std::string>{"4", "2", "3", "4", "7"}));
    EXPECT_NE(r.out.find("output 20 channels"), std::string::npos) << r.out;
}

TEST(Cli, AnalyzeResNet50) {
    const auto r = cli("analyze --preset resnet50 --summary");
    EXPECT_EQ(r.status, 0);
    EXPECT_NE(r.out.find("(25.56M)"), std::string::npos) << r.out;
}

TEST(Cli, AnalyzeFromConfigFile) {
    const auto file = scratch("analyze.json");
    std::ofstream(file) << R"({"version": 1, "network": {"preset": "resnet50"}, "data": {"classes": 1000}})";
    const auto r = cli("analyze --config " + file.string() + " --image-size 224 --summary");
    EXPECT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("(25.56M)"), std::string::npos) << r.out;
}

TEST(Cli, GradcheckTinyExitsZero) {
    const auto file = scratch("grad.json");
    std::ofstream(file) << R"({"version": 1, "network": {"preset": "tiny-hs"}})";
    EXPECT_EQ(cli("gradcheck --config " + file.string() + " --samples 20").status, 0);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(cli("plan --s 5 --w 4 --bogus").status, 2);
    EXPECT_EQ(cli("frobnicate").status, 2);
    const auto bad = scratch("bad.json");
    std::ofstream(bad) << "{\"version\": 1,";
    EXPECT_EQ(cli("analyze --config " + bad.string()).status, 2);
    const auto typo = scratch("typo.json");
    std::ofstream(typo) << R"({"version": 1, "netwrok": {}})";
    EXPECT_EQ(cli("train --config " + typo.string() + " --out " + scratch("never").string()).status, 2);
    EXPECT_EQ(cli("eval --checkpoint " + scratch("missing/none.ckpt").string()).status, 1);
    EXPECT_EQ(cli("plan --s 1 --w 4").status, 2);
}

TEST(Cli, TrainThenEvalReproducesBestAccuracy) {
    const auto cfg_file = scratch("train.json");
    std::ofstream(cfg_file) << to_json_text(small_run());
    const auto out = scratch("cli_run");
    fs::remove_all(out);
    ASSERT_EQ(cli("train --config " + cfg_file.string() + " --out " + out.string()).status, 0);
    const auto r = cli("eval --checkpoint " + (out / "best.ckpt").string());
    ASSERT_EQ(r.status, 0) << r.out;
    const auto result = train(small_run(), {});
    std::ostringstream want;
    want.precision(17);
    want << "top1 " << result.best_eval_acc << "\n";
    EXPECT_NE(r.out.find(want.str()), std::string::npos) << r.out;
}

TEST(Cli, ReconcileWritesCsv) {
    const auto csv = scratch("reconcile.csv");
    const auto r = cli("reconcile --out " + csv.string());
    EXPECT_EQ(r.status, 0);
    std::istringstream in(slurp(csv));
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 14);  // header, control, 4 presets x 3 variants
}
