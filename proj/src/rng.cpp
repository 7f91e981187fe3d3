#include "hsnet/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace hsnet {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kSplitSalt = 0xD1B54A32D192ED03ULL;
}  // namespace

std::uint64_t Rng::mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGamma);
}

double Rng::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t bound) {
    if (bound == 0) throw ArgumentError("uniform_index: bound must be positive");
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t limit = std::uint64_t(0) - (std::uint64_t(0) - bound) % bound;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (limit == 0 || r < limit) return r % bound;
    }
}

double Rng::normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::uint64_t tag) const noexcept {
    return Rng(mix64(key_ ^ mix64(tag + kSplitSalt)));
}

std::vector<Index> Rng::permutation(Index n) {
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Index>(uniform_index(static_cast<std::uint64_t>(i + 1)));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    return perm;
}

template <typename Scalar>
Tensor<Scalar> randn(const Dims& dims, Rng& rng, double std) {
    if (!(std > 0.0)) throw ArgumentError("randn: std must be positive");
    Tensor<Scalar> out(dims);
    auto& data = out.mutable_data();
    const Index n = data.size();
    Index i = 0;
    for (; i + 1 < n; i += 2) {
        const double u1 = 1.0 - rng.uniform();
        const double u2 = rng.uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        data[i] = static_cast<Scalar>(std * radius * std::cos(angle));
        data[i + 1] = static_cast<Scalar>(std * radius * std::sin(angle));
    }
    if (i < n) data[i] = static_cast<Scalar>(std * rng.normal());
    return out;
}

template <typename Scalar>
Tensor<Scalar> uniform(const Dims& dims, Rng& rng, double lo, double hi) {
    Tensor<Scalar> out(dims);
    auto& data = out.mutable_data();
    for (Index i = 0; i < data.size(); ++i) data[i] = static_cast<Scalar>(lo + (hi - lo) * rng.uniform());
    return out;
}

template Tensor<float> randn<float>(const Dims&, Rng&, double);
template Tensor<double> randn<double>(const Dims&, Rng&, double);
template Tensor<float> uniform<float>(const Dims&, Rng&, double, double);
template Tensor<double> uniform<double>(const Dims&, Rng&, double, double);

}  // namespace hsnet
