#pragma once

#include <cstdint>
#include <vector>

#include "hsnet/tensor.hpp"

namespace hsnet {

/// Counter-based, splittable generator.
///
/// Draw i of a stream with key K is `mix64(K + (i + 1) * 0x9E3779B97F4A7C15)`
/// where mix64 is the SplitMix64 finalizer (Stafford variant 13). The output
/// depends only on (key, counter), so streams are reproducible on every
/// platform with 64-bit unsigned arithmetic. `split(tag)` derives an
/// independent child key `mix64(K ^ mix64(tag + 0xD1B54A32D192ED03))` without
/// advancing the parent.
///
/// Uniform reals take the top 53 bits; Gaussians use Box-Muller on pairs of
/// uniforms, so bit-exactness across platforms additionally relies on libm's
/// log/cos/sin agreeing.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept : key_(seed) {}

    [[nodiscard]] std::uint64_t seed() const noexcept { return key_; }
    [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1).
    double uniform() noexcept;
    /// Uniform integer on [0, bound); bound must be positive.
    std::uint64_t uniform_index(std::uint64_t bound);
    double normal() noexcept;
    bool bernoulli(double p) noexcept { return uniform() < p; }

    [[nodiscard]] Rng split(std::uint64_t tag) const noexcept;

    std::vector<Index> permutation(Index n);

    static std::uint64_t mix64(std::uint64_t z) noexcept;

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// I.i.d. N(0, std^2) entries; throws ArgumentError for std <= 0.
template <typename Scalar>
Tensor<Scalar> randn(const Dims& dims, Rng& rng, double std);

/// I.i.d. U[lo, hi) entries.
template <typename Scalar>
Tensor<Scalar> uniform(const Dims& dims, Rng& rng, double lo, double hi);

}  // namespace hsnet
