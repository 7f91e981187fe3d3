#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hsnet/rng.hpp"
#include "hsnet/tensor.hpp"

namespace hsnet {

/// Images in [0, 1], stored as 32-bit floats regardless of training precision.
struct Dataset {
    std::string name;
    Index classes = 0;
    Tensor<float> images;  // (N, 3, H, W)
    std::vector<int> labels;

    [[nodiscard]] Index size() const noexcept { return static_cast<Index>(labels.size()); }
    /// Throws FormatError if labels are out of range or pixels leave [0, 1].
    void validate() const;
    /// The first `n` records (all if n >= size()).
    [[nodiscard]] Dataset head(Index n) const;
};

template <typename Scalar>
struct Batch {
    Tensor<Scalar> images;
    RowMatrix<Scalar> targets;  // N x K probability rows
    std::vector<int> labels;
};

// --- CIFAR-10 binary format -------------------------------------------------
// Each record is one label byte followed by 3072 pixel bytes: 1024 red, 1024
// green, 1024 blue, each plane row-major 32 x 32.

inline constexpr Index kCifarSide = 32;
inline constexpr Index kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;
inline constexpr Index kCifarRecordsPerFile = 10000;

/// Reads one batch file. With `expected_records`, the file must hold exactly
/// that many records; otherwise any positive whole number of records.
Dataset load_cifar10_file(const std::filesystem::path& file, std::optional<Index> expected_records = std::nullopt);

enum class Split { train, test };

/// Reads data_batch_1..5.bin (train) or test_batch.bin (test) from `dir`;
/// each must hold exactly 10000 records.
Dataset load_cifar10(const std::filesystem::path& dir, Split split);

/// Serializes one record; pixels are quantized as round(255 * v).
std::vector<std::uint8_t> encode_cifar_record(const Dataset& data, Index index);
/// Writes a 32x32 dataset in the same binary layout.
void save_cifar10(const Dataset& data, const std::filesystem::path& file);

// --- synthetic data -----------------------------------------------------------

/// Class k is a fixed smooth pattern (per-channel level plus an oriented
/// grating) with N(0, 0.1^2) pixel noise, clamped to [0, 1]. Labels cycle
/// 0, 1, ..., K-1. Patterns depend only on `rng`; `noise_stream` selects an
/// independent noise draw, so a held-out split shares the class patterns.
Dataset synth_blobs(Index classes, Index per_class, Index image_size, const Rng& rng, std::uint64_t noise_stream = 0);

// --- augmentation and targets -------------------------------------------------

/// Zero-pad by `pad`, crop back at a uniform offset in [0, 2*pad]^2, then
/// mirror horizontally with probability `flip_prob`; per image.
template <typename Scalar>
Tensor<Scalar> augment(const Tensor<Scalar>& images, Rng& rng, Index pad, double flip_prob);

/// Mirrors every image along the width axis.
template <typename Scalar>
Tensor<Scalar> flip_horizontal(const Tensor<Scalar>& images);

/// (1 - epsilon) * one_hot + epsilon / K.
template <typename Scalar>
RowMatrix<Scalar> smooth_labels(std::span<const int> labels, Index classes, double epsilon);

/// lambda ~ Beta(alpha, alpha) by inverse transform, partner order from a
/// seeded permutation; returns the mixed batch.
template <typename Scalar>
Batch<Scalar> mixup(const Batch<Scalar>& batch, double alpha, Rng& rng);

/// Mix with fixed lambda and partner order: lambda * a + (1 - lambda) * b[perm].
template <typename Scalar>
Batch<Scalar> mixup_with(const Batch<Scalar>& batch, double lambda, std::span<const Index> partner);

/// Beta(alpha, alpha) quantile at u.
double beta_quantile(double alpha, double u);

struct Normalization {
    std::array<double, 3> mean{0.4914, 0.4822, 0.4465};
    std::array<double, 3> std{0.2470, 0.2435, 0.2616};

    friend bool operator==(const Normalization&, const Normalization&) = default;
};

template <typename Scalar>
Tensor<Scalar> normalize(const Tensor<Scalar>& images, const Normalization& norm);

/// Gathers `indices` from the dataset into a (|indices|, 3, H, W) tensor.
template <typename Scalar>
Tensor<Scalar> gather(const Dataset& data, std::span<const Index> indices);

}  // namespace hsnet
