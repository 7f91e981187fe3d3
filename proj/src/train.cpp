#include "hsnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "hsnet/checkpoint.hpp"
#include "hsnet/optim.hpp"

namespace hsnet {
namespace {

// Stream tags, so adding a consumer never shifts another one's draws.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kTrainStream = 3;

struct BatchStats {
    double loss_sum = 0.0;  // sum of per-sample cross-entropy
    Index top1 = 0;
    Index topk = 0;
};

// Per-sample statistics of a (N, K, 1, 1) logits tensor against hard labels.
template <typename Scalar>
BatchStats score(const Tensor<Scalar>& logits, std::span<const int> labels) {
    const Index n = logits.dims().n;
    const Index k = logits.dims().c;
    const Index topk = std::min<Index>(5, k);
    BatchStats out;
    for (Index i = 0; i < n; ++i) {
        const Scalar* row = logits.ptr() + i * k;
        const int y = labels[static_cast<std::size_t>(i)];
        const double m = static_cast<double>(*std::max_element(row, row + k));
        double z = 0.0;
        for (Index j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j]) - m);
        out.loss_sum += m + std::log(z) - static_cast<double>(row[y]);
        // Rank of the true class, ties broken towards the lower index.
        Index rank = 0;
        for (Index j = 0; j < k; ++j) {
            if (row[j] > row[y] || (row[j] == row[y] && j < y)) ++rank;
        }
        out.top1 += rank == 0;
        out.topk += rank < topk;
    }
    return out;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw IoError("cannot open " + file.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + file.string());
}

template <typename Scalar>
TrainResult train_impl(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream* progress) {
    const auto data = load_data(cfg);
    const Rng root(cfg.seed);
    Rng init = root.split(kInitStream);
    auto net = build<Scalar>(cfg.network, init);
    const auto& tc = cfg.train;
    Sgd<Scalar> sgd(tc.momentum, tc.weight_decay, tc.decay_all);

    const Index n = data.train.size();
    const Index steps = n / tc.batch_size;
    if (steps == 0) {
        throw ConfigError("train.batch_size (" + std::to_string(tc.batch_size) + ") exceeds the training set (" +
                          std::to_string(n) + ")");
    }
    const Index total = steps * tc.epochs;

    std::ofstream log;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_text(out_dir / "config.json", to_json_text(cfg));
        log.open(out_dir / "log.jsonl", std::ios::trunc);
        if (!log) throw IoError("cannot open " + (out_dir / "log.jsonl").string());
    }

    TrainResult result;
    const Rng train_rng = root.split(kTrainStream);
    for (Index epoch = 0; epoch < tc.epochs; ++epoch) {
        Rng rng = train_rng.split(static_cast<std::uint64_t>(epoch));
        const auto order = rng.permutation(n);
        EpochLog row;
        row.epoch = epoch + 1;
        row.lr = cosine_lr(epoch * steps, total, tc.base_lr);
        double loss_sum = 0.0;
        Index correct = 0;
        for (Index step = 0; step < steps; ++step) {
            const std::span<const Index> idx(order.data() + step * tc.batch_size, static_cast<std::size_t>(tc.batch_size));
            Batch<Scalar> batch;
            batch.labels.reserve(idx.size());
            for (Index i : idx) batch.labels.push_back(data.train.labels[static_cast<std::size_t>(i)]);
            batch.images = normalize(augment(gather<Scalar>(data.train, idx), rng, tc.augment_pad, tc.flip_prob),
                                     tc.normalization);
            batch.targets = smooth_labels<Scalar>(batch.labels, cfg.network.num_classes, tc.label_smoothing);
            if (tc.mixup_alpha > 0.0) batch = mixup(batch, tc.mixup_alpha, rng);

            const double lr = cosine_lr(epoch * steps + step, total, tc.base_lr);
            try {
                Tape<Scalar> tape;
                const auto logits = net.forward(tape, batch.images, Mode::train);
                const auto ce = softmax_cross_entropy(tape, logits, batch.targets);
                backward(tape, ce.loss);
                sgd.step(net, lr);
                loss_sum += static_cast<double>(ce.value) * static_cast<double>(idx.size());
                correct += score(logits, batch.labels).top1;
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch + 1) + " step " + std::to_string(step + 1) + ": " +
                                   e.what());
            }
        }
        const double seen = static_cast<double>(steps * tc.batch_size);
        row.train_loss = loss_sum / seen;
        row.train_acc = static_cast<double>(correct) / seen;
        const auto ev = evaluate(net, data.eval, tc.normalization, tc.eval_batch_size);
        row.eval_acc = ev.top1;
        row.eval_top5 = ev.top5;
        row.eval_loss = ev.loss;
        result.epochs.push_back(row);

        if (!out_dir.empty()) {
            log << row.json() << '\n' << std::flush;
            save_checkpoint(net, out_dir / "last.ckpt");
        }
        if (row.eval_acc > result.best_eval_acc) {
            result.best_eval_acc = row.eval_acc;
            result.best_epoch = row.epoch;
            if (!out_dir.empty()) save_checkpoint(net, out_dir / "best.ckpt");
        }
        if (progress) *progress << row.json() << '\n' << std::flush;
    }
    return result;
}

template <typename Scalar>
EvalResult evaluate_checkpoint_impl(const RunConfig& cfg, const std::filesystem::path& file, const Dataset& data) {
    Rng init = Rng(cfg.seed).split(kInitStream);
    auto net = build<Scalar>(cfg.network, init);
    load_checkpoint(net, file);
    return evaluate(net, data, cfg.train.normalization, cfg.train.eval_batch_size);
}

}  // namespace

DataSplits load_data(const RunConfig& cfg) {
    const auto& d = cfg.data;
    DataSplits out;
    if (d.kind == DataConfig::Kind::synth_blobs) {
        const Rng rng = Rng(cfg.seed).split(kDataStream);
        out.train = synth_blobs(d.classes, d.per_class, cfg.network.image_size, rng, 0);
        out.eval = synth_blobs(d.classes, d.eval_per_class, cfg.network.image_size, rng, 1);
    } else {
        out.train = load_cifar10(d.path, Split::train);
        out.eval = load_cifar10(d.path, Split::test);
        if (d.train_limit) out.train = out.train.head(*d.train_limit);
        if (d.eval_limit) out.eval = out.eval.head(*d.eval_limit);
    }
    return out;
}

template <typename Scalar>
EvalResult evaluate(Network<Scalar>& net, const Dataset& data, const Normalization& norm, Index batch_size) {
    if (batch_size < 1) throw ArgumentError("evaluate: batch size must be >= 1");
    if (data.size() == 0) throw ArgumentError("evaluate: empty dataset");
    if (data.classes != net.config.num_classes) {
        throw IncompatibleError("dataset has " + std::to_string(data.classes) + " classes, network predicts " +
                                std::to_string(net.config.num_classes));
    }
    std::vector<Index> idx;
    BatchStats total;
    for (Index start = 0; start < data.size(); start += batch_size) {
        const Index end = std::min(data.size(), start + batch_size);
        idx.clear();
        for (Index i = start; i < end; ++i) idx.push_back(i);
        const auto logits = net.forward(normalize(gather<Scalar>(data, idx), norm), Mode::eval);
        const auto s = score(logits, std::span<const int>(data.labels).subspan(static_cast<std::size_t>(start),
                                                                                static_cast<std::size_t>(end - start)));
        total.loss_sum += s.loss_sum;
        total.top1 += s.top1;
        total.topk += s.topk;
    }
    const double count = static_cast<double>(data.size());
    return {static_cast<double>(total.top1) / count, static_cast<double>(total.topk) / count, total.loss_sum / count,
            data.size()};
}

std::string EpochLog::json() const {
    const nlohmann::ordered_json j = {{"epoch", epoch},           {"lr", lr},
                                      {"train_loss", train_loss}, {"train_acc", train_acc},
                                      {"eval_acc", eval_acc},     {"eval_top5", eval_top5},
                                      {"eval_loss", eval_loss}};
    return j.dump();
}

TrainResult train(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream* progress) {
    return config.precision == Precision::float32 ? train_impl<float>(config, out_dir, progress)
                                                  : train_impl<double>(config, out_dir, progress);
}

EvalResult evaluate_checkpoint(const RunConfig& config, const std::filesystem::path& checkpoint, const Dataset& data) {
    return config.precision == Precision::float32 ? evaluate_checkpoint_impl<float>(config, checkpoint, data)
                                                  : evaluate_checkpoint_impl<double>(config, checkpoint, data);
}

double relative_error(double analytic, double numeric) noexcept {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
}

GradcheckResult gradcheck(NetworkConfig cfg, Index samples, std::uint64_t seed, double tolerance, Index batch) {
    if (samples < 1) throw ArgumentError("gradcheck: samples must be >= 1");
    if (batch < 2) throw ArgumentError("gradcheck: batch must be >= 2 for train-mode batch norm");
    cfg.zero_init_residual = false;
    cfg.validate();
    const Rng root(seed);
    Rng init = root.split(kInitStream);
    auto net = build<double>(cfg, init);
    Rng rng = root.split(kTrainStream);
    for (auto& nt : net.named_tensors()) {
        if (nt.kind == ParamKind::bn_gamma) nt.tensor.mutable_data() = uniform<double>(nt.tensor.dims(), rng, 0.5, 1.5).data();
        if (nt.kind == ParamKind::bn_beta) nt.tensor.mutable_data() = uniform<double>(nt.tensor.dims(), rng, -0.2, 0.2).data();
    }
    const auto x = randn<double>({batch, 3, cfg.image_size, cfg.image_size}, rng, 1.0);
    std::vector<int> labels;
    for (Index i = 0; i < batch; ++i) labels.push_back(static_cast<int>(rng.uniform_index(cfg.num_classes)));
    const auto targets = smooth_labels<double>(labels, cfg.num_classes, 0.1);

    auto loss_at = [&] {
        Tape<double> tape;
        tape.set_recording(false);
        return softmax_cross_entropy(tape, net.forward(tape, x, Mode::train), targets).value;
    };

    net.zero_grad();
    {
        Tape<double> tape;
        const auto ce = softmax_cross_entropy(tape, net.forward(tape, x, Mode::train), targets);
        backward(tape, ce.loss);
    }
    auto params = net.parameters();
    GradcheckResult out;
    out.tolerance = tolerance;
    for (Index s = 0; s < samples; ++s) {
        auto& p = params[rng.uniform_index(params.size())];
        const Index i = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(p.tensor.size())));
        GradcheckSample g{p.name, i, p.tensor.has_grad() ? p.tensor.grad()[i] : 0.0, 0.0, 0.0};
        double& theta = p.tensor.mutable_data()[i];
        const double saved = theta;
        const double base = loss_at();
        // A ReLU or max-pool switch inside [theta - h, theta + h] shows up as
        // disagreeing one-sided slopes; shrink the step until it is gone.
        double h = 1e-5 * std::max(1.0, std::abs(saved));
        for (;;) {
            theta = saved + h;
            const double up = loss_at();
            theta = saved - h;
            const double down = loss_at();
            theta = saved;
            g.numeric = (up - down) / (2.0 * h);
            g.step = h;
            const double ahead = (up - base) / h;
            const double behind = (base - down) / h;
            if (relative_error(ahead, behind) < tolerance || h < 1e-8) break;
            h /= 10.0;
        }
        g.rel_error = relative_error(g.analytic, g.numeric);
        out.max_rel_error = std::max(out.max_rel_error, g.rel_error);
        out.samples.push_back(std::move(g));
    }
    return out;
}

template EvalResult evaluate<float>(Network<float>&, const Dataset&, const Normalization&, Index);
template EvalResult evaluate<double>(Network<double>&, const Dataset&, const Normalization&, Index);

}  // namespace hsnet
