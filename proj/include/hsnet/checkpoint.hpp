#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hsnet/network.hpp"

namespace hsnet {

// Layout, all integers little-endian:
//   "HSNT" | u32 version | u32 tensor count |
//   per tensor: u32 name length, UTF-8 name, u32 rank, rank x u64 dims,
//               prod(dims) x f32 values |
//   u32 CRC-32 (ISO-HDLC) of every preceding byte.
// Tensors are written in name order.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<float> values;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointTensor>& tensors);
/// CorruptionError on CRC mismatch, FormatError on any structural problem.
std::vector<CheckpointTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

template <typename Scalar>
void save_checkpoint(Network<Scalar>& net, const std::filesystem::path& file);

/// Restores every parameter and buffer. Nothing is modified unless the whole
/// file verifies and its tensor set matches the network exactly
/// (IncompatibleError otherwise).
template <typename Scalar>
void load_checkpoint(Network<Scalar>& net, const std::filesystem::path& file);

}  // namespace hsnet
