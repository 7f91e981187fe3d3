#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "hsnet/errors.hpp"

namespace hsnet {

using Index = std::int64_t;

/// Extents of a rank-4 NCHW tensor.
struct Dims {
    Index n = 0;
    Index c = 0;
    Index h = 0;
    Index w = 0;

    [[nodiscard]] Index count() const noexcept { return n * c * h * w; }
    [[nodiscard]] Index plane() const noexcept { return h * w; }
    [[nodiscard]] std::array<Index, 4> as_array() const noexcept { return {n, c, h, w}; }
    [[nodiscard]] std::string str() const;

    friend bool operator==(const Dims&, const Dims&) = default;
};

/// Validates extents and returns their product; throws ArgumentError for a
/// negative extent and CapacityError when the product cannot be addressed.
Index checked_count(const Dims& dims);

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <typename Scalar>
struct TensorImpl {
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    Dims dims;
    Array data;
    bool requires_grad = false;
    std::optional<Array> grad;
};

}  // namespace detail

/// Dense rank-4 array in row-major NCHW order with an optional gradient slot.
///
/// A Tensor is a shared handle: copies refer to the same storage, which is
/// how the tape identifies operands. Operations never modify their inputs;
/// only optimizers and loaders write through mutable_data().
template <typename Scalar>
class Tensor {
public:
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    using Impl = detail::TensorImpl<Scalar>;

    Tensor();
    explicit Tensor(const Dims& dims);  // zero-filled
    Tensor(const Dims& dims, Array data);

    [[nodiscard]] const Dims& dims() const noexcept { return impl_->dims; }
    [[nodiscard]] Index size() const noexcept { return impl_->data.size(); }
    [[nodiscard]] const Array& data() const noexcept { return impl_->data; }
    [[nodiscard]] Array& mutable_data() noexcept { return impl_->data; }
    [[nodiscard]] const Scalar* ptr() const noexcept { return impl_->data.data(); }
    [[nodiscard]] Scalar* mutable_ptr() noexcept { return impl_->data.data(); }

    [[nodiscard]] Index offset(Index n, Index c, Index h, Index w) const noexcept {
        const Dims& d = impl_->dims;
        return ((n * d.c + c) * d.h + h) * d.w + w;
    }
    [[nodiscard]] Scalar at(Index n, Index c, Index h, Index w) const noexcept {
        return impl_->data[offset(n, c, h, w)];
    }
    [[nodiscard]] Scalar& at(Index n, Index c, Index h, Index w) noexcept {
        return impl_->data[offset(n, c, h, w)];
    }
    [[nodiscard]] Scalar item() const;

    [[nodiscard]] bool requires_grad() const noexcept { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool on = true) noexcept {
        impl_->requires_grad = on;
        return *this;
    }
    [[nodiscard]] bool has_grad() const noexcept { return impl_->grad.has_value(); }
    [[nodiscard]] const Array& grad() const;
    /// Gradient slot, allocated as zeros on first access. The slot belongs to
    /// the shared storage, so it is writable through any handle.
    [[nodiscard]] Array& mutable_grad() const;
    void zero_grad() const;
    void clear_grad() const noexcept { impl_->grad.reset(); }

    [[nodiscard]] bool same(const Tensor& other) const noexcept { return impl_ == other.impl_; }
    /// Deep copy of the values; the copy carries no gradient and no tape identity.
    [[nodiscard]] Tensor clone() const;
    [[nodiscard]] bool all_finite() const noexcept { return impl_->data.allFinite(); }

    [[nodiscard]] const std::shared_ptr<Impl>& impl() const noexcept { return impl_; }

private:
    std::shared_ptr<Impl> impl_;
};

template <typename Scalar>
Tensor<Scalar> zeros(const Dims& dims);

template <typename Scalar>
Tensor<Scalar> full(const Dims& dims, Scalar value);

template <typename Scalar>
bool bit_equal(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Throws NumericError naming `op` when any entry is NaN or infinite.
template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, const char* op);

void require_same_dims(const Dims& a, const Dims& b, const char* op);

}  // namespace hsnet
