#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "hsnet/data.hpp"
#include "hsnet/network.hpp"

namespace hsnet {

enum class Precision { float32, float64 };

struct DataConfig {
    enum class Kind { synth_blobs, cifar10 };
    Kind kind = Kind::synth_blobs;
    // synth_blobs
    Index classes = 10;
    Index per_class = 50;
    Index eval_per_class = 20;
    // cifar10: directory holding the binary batches
    std::filesystem::path path;
    std::optional<Index> train_limit;
    std::optional<Index> eval_limit;

    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct TrainConfig {
    Index epochs = 30;
    Index batch_size = 128;
    Index eval_batch_size = 256;
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    bool decay_all = false;  // also decay BN affine and biases
    double label_smoothing = 0.1;
    double mixup_alpha = 0.0;  // 0 disables mixup
    Index augment_pad = 4;
    double flip_prob = 0.5;
    Normalization normalization;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Everything a training run depends on. Two runs with equal RunConfig
/// produce byte-identical outputs.
struct RunConfig {
    static constexpr int kVersion = 1;
    std::uint64_t seed = 42;
    Precision precision = Precision::float32;
    NetworkConfig network;
    DataConfig data;
    TrainConfig train;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses and validates a config document. Malformed JSON, a missing or
/// unsupported `version`, unknown keys, wrong types and invalid values all
/// throw ConfigError.
///
/// {"version": 1, "seed": 42, "precision": "float32",
///  "network": {"preset": "tiny-hs", ...NetworkConfig field overrides...},
///  "data": {"kind": "synth_blobs", "classes": 10, "per_class": 50, ...},
///  "train": {"epochs": 30, "batch_size": 32, ...}}
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& file);
/// Fully resolved form; parse_run_config(to_json_text(c)) == c.
std::string to_json_text(const RunConfig& config);

/// Only the network section of a config document (other sections are
/// validated but ignored).
NetworkConfig load_network_config(const std::filesystem::path& file);

}  // namespace hsnet
