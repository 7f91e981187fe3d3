#include "hsnet/tensor.hpp"

#include <cstring>
#include <limits>

namespace hsnet {

std::string Dims::str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
           std::to_string(w) + ")";
}

Index checked_count(const Dims& dims) {
    Index total = 1;
    for (Index extent : dims.as_array()) {
        if (extent < 0) throw ArgumentError("negative extent in dims " + dims.str());
    }
    for (Index extent : dims.as_array()) {
        if (extent == 0) return 0;
    }
    constexpr Index limit = std::numeric_limits<Eigen::Index>::max() / 8;
    for (Index extent : dims.as_array()) {
        if (total > limit / extent) throw CapacityError("dims " + dims.str() + " overflow addressable size");
        total *= extent;
    }
    return total;
}

template <typename Scalar>
Tensor<Scalar>::Tensor() : impl_(std::make_shared<Impl>()) {}

template <typename Scalar>
Tensor<Scalar>::Tensor(const Dims& dims) : impl_(std::make_shared<Impl>()) {
    impl_->dims = dims;
    impl_->data = Array::Zero(checked_count(dims));
}

template <typename Scalar>
Tensor<Scalar>::Tensor(const Dims& dims, Array data) : impl_(std::make_shared<Impl>()) {
    if (checked_count(dims) != data.size()) {
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match dims " + dims.str());
    }
    impl_->dims = dims;
    impl_->data = std::move(data);
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
    if (size() != 1) throw ShapeError("item() requires a single-element tensor, got " + dims().str());
    return impl_->data[0];
}

template <typename Scalar>
const typename Tensor<Scalar>::Array& Tensor<Scalar>::grad() const {
    if (!impl_->grad) throw GraphError("tensor " + dims().str() + " has no gradient");
    return *impl_->grad;
}

template <typename Scalar>
typename Tensor<Scalar>::Array& Tensor<Scalar>::mutable_grad() const {
    if (!impl_->grad) impl_->grad = Array::Zero(size());
    return *impl_->grad;
}

template <typename Scalar>
void Tensor<Scalar>::zero_grad() const {
    if (impl_->grad) impl_->grad->setZero();
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::clone() const {
    return Tensor(dims(), data());
}

template <typename Scalar>
Tensor<Scalar> zeros(const Dims& dims) {
    return Tensor<Scalar>(dims);
}

template <typename Scalar>
Tensor<Scalar> full(const Dims& dims, Scalar value) {
    return Tensor<Scalar>(dims, Tensor<Scalar>::Array::Constant(checked_count(dims), value));
}

template <typename Scalar>
bool bit_equal(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.dims() != b.dims()) return false;
    return a.size() == 0 || std::memcmp(a.ptr(), b.ptr(), sizeof(Scalar) * a.size()) == 0;
}

template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, const char* op) {
    if (!t.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
}

void require_same_dims(const Dims& a, const Dims& b, const char* op) {
    if (a != b) throw ShapeError(std::string(op) + ": dims " + a.str() + " vs " + b.str());
}

#define HSNET_INSTANTIATE(S)                                          \
    template class Tensor<S>;                                         \
    template Tensor<S> zeros<S>(const Dims&);                         \
    template Tensor<S> full<S>(const Dims&, S);                       \
    template bool bit_equal<S>(const Tensor<S>&, const Tensor<S>&);   \
    template void require_finite<S>(const Tensor<S>&, const char*);

HSNET_INSTANTIATE(float)
HSNET_INSTANTIATE(double)

}  // namespace hsnet
