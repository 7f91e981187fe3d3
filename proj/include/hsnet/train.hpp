#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hsnet/config.hpp"

namespace hsnet {

struct DataSplits {
    Dataset train;
    Dataset eval;
};

/// synth_blobs: train and eval share class patterns and draw independent
/// noise. cifar10: the train batches and test_batch.bin, optionally truncated.
DataSplits load_data(const RunConfig& config);

struct EvalResult {
    double top1 = 0.0;
    double top5 = 0.0;  // top-min(5, K)
    double loss = 0.0;  // mean cross-entropy against one-hot labels
    Index count = 0;
};

/// Eval-mode pass over the whole dataset in fixed-size chunks.
template <typename Scalar>
EvalResult evaluate(Network<Scalar>& net, const Dataset& data, const Normalization& norm, Index batch_size);

struct EpochLog {
    Index epoch = 0;  // 1-based
    double lr = 0.0;  // at the epoch's first step
    double train_loss = 0.0;
    double train_acc = 0.0;  // running top-1 over the epoch's training batches
    double eval_acc = 0.0;
    double eval_top5 = 0.0;
    double eval_loss = 0.0;

    [[nodiscard]] std::string json() const;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    double best_eval_acc = -1.0;
    Index best_epoch = 0;
};

/// Runs the configured schedule. With a non-empty `out_dir`, writes
/// config.json, log.jsonl (one line per epoch), last.ckpt every epoch and
/// best.ckpt whenever eval accuracy improves. The incomplete final batch of
/// each epoch is dropped. A non-finite value aborts with NumericError naming
/// the epoch, step and layer.
TrainResult train(const RunConfig& config, const std::filesystem::path& out_dir, std::ostream* progress = nullptr);

/// Builds the network described by `config` and loads `checkpoint` into it.
EvalResult evaluate_checkpoint(const RunConfig& config, const std::filesystem::path& checkpoint, const Dataset& data);

struct GradcheckSample {
    std::string name;
    Index index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
    double step = 0.0;  // finite-difference step finally used
};

struct GradcheckResult {
    std::vector<GradcheckSample> samples;
    double max_rel_error = 0.0;
    double tolerance = 0.0;

    [[nodiscard]] bool passed() const noexcept { return max_rel_error < tolerance; }
};

/// |a - n| / max(|a|, |n|, 1e-6).
double relative_error(double analytic, double numeric) noexcept;

/// Compares tape gradients with central differences at 64-bit precision on
/// a random batch, for `samples` randomly chosen trainable scalars. Residual
/// zero-init is disabled and BN affine parameters are randomized so every
/// path carries gradient. Step h = 1e-5 * max(1, |theta|), divided by 10
/// (down to 1e-8) while the forward and backward one-sided slopes disagree
/// by more than `tolerance`, which means a kink lies inside the stencil.
GradcheckResult gradcheck(NetworkConfig config, Index samples, std::uint64_t seed, double tolerance = 1e-3,
                          Index batch = 4);

}  // namespace hsnet
