#include "hsnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace hsnet {

Index window_output_size(Index in, Index kernel, Index stride, Index padding) {
    if (kernel < 1 || stride < 1 || padding < 0) {
        throw GeometryError("window: kernel and stride must be >= 1 and padding >= 0");
    }
    const Index span = in + 2 * padding - kernel;
    if (span < 0) {
        throw GeometryError("window: input extent " + std::to_string(in) + " with padding " + std::to_string(padding) +
                            " is smaller than kernel " + std::to_string(kernel));
    }
    return span / stride + 1;
}

namespace {

template <typename Scalar>
using Matrix = RowMatrix<Scalar>;

struct ConvGeometry {
    Index channels, height, width;
    Index kernel, stride, padding;
    Index out_h, out_w;

    [[nodiscard]] Index rows() const { return channels * kernel * kernel; }
    [[nodiscard]] Index cols() const { return out_h * out_w; }
    [[nodiscard]] bool pointwise() const { return kernel == 1 && stride == 1 && padding == 0; }
};

// Column (oh*out_w + ow) of row ((c*k + kh)*k + kw) holds the input sample
// under that kernel tap, or zero in the padding.
template <typename Scalar>
void im2col(const Scalar* image, const ConvGeometry& g, Scalar* col) {
    for (Index c = 0; c < g.channels; ++c) {
        const Scalar* plane = image + c * g.height * g.width;
        for (Index kh = 0; kh < g.kernel; ++kh) {
            for (Index kw = 0; kw < g.kernel; ++kw) {
                Scalar* row = col + ((c * g.kernel + kh) * g.kernel + kw) * g.cols();
                for (Index oh = 0; oh < g.out_h; ++oh) {
                    const Index ih = oh * g.stride - g.padding + kh;
                    Scalar* dst = row + oh * g.out_w;
                    if (ih < 0 || ih >= g.height) {
                        std::fill(dst, dst + g.out_w, Scalar(0));
                        continue;
                    }
                    const Scalar* src = plane + ih * g.width;
                    for (Index ow = 0; ow < g.out_w; ++ow) {
                        const Index iw = ow * g.stride - g.padding + kw;
                        dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : Scalar(0);
                    }
                }
            }
        }
    }
}

template <typename Scalar>
void col2im_add(const Scalar* col, const ConvGeometry& g, Scalar* image) {
    for (Index c = 0; c < g.channels; ++c) {
        Scalar* plane = image + c * g.height * g.width;
        for (Index kh = 0; kh < g.kernel; ++kh) {
            for (Index kw = 0; kw < g.kernel; ++kw) {
                const Scalar* row = col + ((c * g.kernel + kh) * g.kernel + kw) * g.cols();
                for (Index oh = 0; oh < g.out_h; ++oh) {
                    const Index ih = oh * g.stride - g.padding + kh;
                    if (ih < 0 || ih >= g.height) continue;
                    const Scalar* src = row + oh * g.out_w;
                    Scalar* dst = plane + ih * g.width;
                    for (Index ow = 0; ow < g.out_w; ++ow) {
                        const Index iw = ow * g.stride - g.padding + kw;
                        if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

// out(o, p) = sum_k weight(o, k) * col(k, p), accumulated with k ascending for
// every (o, p). Four output rows share each pass over a column row; inner
// loops only vectorize across p, which leaves the per-element order intact.
template <typename Scalar>
void ordered_gemm(const Scalar* weight, const Scalar* col, Scalar* out, Index out_rows, Index depth, Index cols) {
    constexpr Index kTile = 256;
    for (Index p0 = 0; p0 < cols; p0 += kTile) {
        const Index pn = std::min(kTile, cols - p0);
        Index o = 0;
        for (; o + 4 <= out_rows; o += 4) {
            Scalar* r0 = out + (o + 0) * cols + p0;
            Scalar* r1 = out + (o + 1) * cols + p0;
            Scalar* r2 = out + (o + 2) * cols + p0;
            Scalar* r3 = out + (o + 3) * cols + p0;
            std::fill(r0, r0 + pn, Scalar(0));
            std::fill(r1, r1 + pn, Scalar(0));
            std::fill(r2, r2 + pn, Scalar(0));
            std::fill(r3, r3 + pn, Scalar(0));
            for (Index k = 0; k < depth; ++k) {
                const Scalar w0 = weight[(o + 0) * depth + k];
                const Scalar w1 = weight[(o + 1) * depth + k];
                const Scalar w2 = weight[(o + 2) * depth + k];
                const Scalar w3 = weight[(o + 3) * depth + k];
                const Scalar* src = col + k * cols + p0;
                for (Index p = 0; p < pn; ++p) {
                    const Scalar v = src[p];
                    r0[p] += w0 * v;
                    r1[p] += w1 * v;
                    r2[p] += w2 * v;
                    r3[p] += w3 * v;
                }
            }
        }
        for (; o < out_rows; ++o) {
            Scalar* r = out + o * cols + p0;
            std::fill(r, r + pn, Scalar(0));
            for (Index k = 0; k < depth; ++k) {
                const Scalar w = weight[o * depth + k];
                const Scalar* src = col + k * cols + p0;
                for (Index p = 0; p < pn; ++p) r[p] += w * src[p];
            }
        }
    }
}

template <typename Scalar>
Eigen::Map<const Matrix<Scalar>> as_matrix(const Scalar* data, Index rows, Index cols) {
    return Eigen::Map<const Matrix<Scalar>>(data, rows, cols);
}

template <typename Scalar>
Eigen::Map<Matrix<Scalar>> as_matrix(Scalar* data, Index rows, Index cols) {
    return Eigen::Map<Matrix<Scalar>>(data, rows, cols);
}

}  // namespace

// ---------------------------------------------------------------------------
// Convolution

template <typename Scalar>
Conv2d<Scalar> Conv2d<Scalar>::make(Index in_channels, Index out_channels, Index kernel, Index stride, Index padding,
                                    Rng& rng) {
    Conv2d p;
    const double fan_in = static_cast<double>(in_channels * kernel * kernel);
    p.weight = randn<Scalar>(Dims{out_channels, in_channels, kernel, kernel}, rng, std::sqrt(2.0 / fan_in));
    p.weight.set_requires_grad();
    p.stride = stride;
    p.padding = padding;
    return p;
}

template <typename Scalar>
Tensor<Scalar> conv2d(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Conv2d<Scalar>& p) {
    const Dims& xd = x.dims();
    const Dims& wd = p.weight.dims();
    if (wd.h != wd.w) throw ShapeError("conv2d: kernel must be square, got " + wd.str());
    if (xd.c != wd.c) {
        throw ShapeError("conv2d: input has " + std::to_string(xd.c) + " channels, weight expects " + std::to_string(wd.c));
    }
    if (p.bias && p.bias->dims() != Dims{1, wd.n, 1, 1}) throw ShapeError("conv2d: bias dims " + p.bias->dims().str());

    ConvGeometry g{xd.c, xd.h, xd.w, wd.h, p.stride, p.padding, 0, 0};
    g.out_h = window_output_size(xd.h, g.kernel, g.stride, g.padding);
    g.out_w = window_output_size(xd.w, g.kernel, g.stride, g.padding);

    const Index out_c = wd.n;
    Tensor<Scalar> out(Dims{xd.n, out_c, g.out_h, g.out_w});
    std::vector<Scalar> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.rows() * g.cols()));
    const Index in_stride = xd.c * xd.h * xd.w;
    const Index out_stride = out_c * g.cols();

    for (Index n = 0; n < xd.n; ++n) {
        const Scalar* image = x.ptr() + n * in_stride;
        const Scalar* lowered = image;
        if (!g.pointwise()) {
            im2col(image, g, col.data());
            lowered = col.data();
        }
        Scalar* dst = out.mutable_ptr() + n * out_stride;
        ordered_gemm(p.weight.ptr(), lowered, dst, out_c, g.rows(), g.cols());
        if (p.bias) {
            for (Index o = 0; o < out_c; ++o) {
                const Scalar b = p.bias->data()[o];
                for (Index q = 0; q < g.cols(); ++q) dst[o * g.cols() + q] += b;
            }
        }
    }
    require_finite(out, "conv2d");

    std::vector<Tensor<Scalar>> inputs{x, p.weight};
    if (p.bias) inputs.push_back(*p.bias);
    if (tape.wants(inputs)) {
        tape.record("conv2d", inputs, out,
                    [x, weight = p.weight, bias = p.bias, g, out_c, in_stride, out_stride](const auto& grad) {
                        const bool want_x = x.requires_grad();
                        const bool want_w = weight.requires_grad();
                        Matrix<Scalar> dw = Matrix<Scalar>::Zero(out_c, g.rows());
                        std::vector<Scalar> col(static_cast<std::size_t>(g.rows() * g.cols()));
                        const auto wmat = as_matrix(weight.ptr(), out_c, g.rows());
                        for (Index n = 0; n < x.dims().n; ++n) {
                            const auto dout = as_matrix(grad.data() + n * out_stride, out_c, g.cols());
                            if (want_w) {
                                const Scalar* lowered = x.ptr() + n * in_stride;
                                if (!g.pointwise()) {
                                    im2col(lowered, g, col.data());
                                    lowered = col.data();
                                }
                                dw.noalias() += dout * as_matrix(lowered, g.rows(), g.cols()).transpose();
                            }
                            if (want_x) {
                                Scalar* dx = x.mutable_grad().data() + n * in_stride;
                                if (g.pointwise()) {
                                    as_matrix(dx, g.rows(), g.cols()).noalias() += wmat.transpose() * dout;
                                } else {
                                    auto dcol = as_matrix(col.data(), g.rows(), g.cols());
                                    dcol.noalias() = wmat.transpose() * dout;
                                    col2im_add(col.data(), g, dx);
                                }
                            }
                        }
                        if (want_w) {
                            weight.mutable_grad() += Eigen::Map<const typename Tensor<Scalar>::Array>(dw.data(), dw.size());
                        }
                        if (bias && bias->requires_grad()) {
                            auto& db = bias->mutable_grad();
                            for (Index n = 0; n < x.dims().n; ++n) {
                                db += as_matrix(grad.data() + n * out_stride, out_c, g.cols()).rowwise().sum().array();
                            }
                        }
                    });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batch normalization

template <typename Scalar>
BatchNorm<Scalar> BatchNorm<Scalar>::make(Index channels, double gamma_init) {
    BatchNorm st;
    const Dims d{1, channels, 1, 1};
    st.gamma = full<Scalar>(d, static_cast<Scalar>(gamma_init));
    st.gamma.set_requires_grad();
    st.beta = zeros<Scalar>(d);
    st.beta.set_requires_grad();
    st.running_mean = zeros<Scalar>(d);
    st.running_var = full<Scalar>(d, Scalar(1));
    return st;
}

template <typename Scalar>
Tensor<Scalar> batch_norm(Tape<Scalar>& tape, const Tensor<Scalar>& x, BatchNorm<Scalar>& state, Mode mode) {
    using Array = typename Tensor<Scalar>::Array;
    const Dims& d = x.dims();
    if (d.c != state.channels()) {
        throw ShapeError("batch_norm: input has " + std::to_string(d.c) + " channels, state has " +
                         std::to_string(state.channels()));
    }
    const Index count = d.n * d.plane();
    if (mode == Mode::train && count <= 1) {
        throw DegenerateError("batch_norm: train mode needs more than one value per channel, got N*H*W = " +
                              std::to_string(count));
    }

    Array mean(d.c), inv_std(d.c);
    if (mode == Mode::train) {
        for (Index c = 0; c < d.c; ++c) {
            double acc = 0.0;
            for (Index n = 0; n < d.n; ++n) {
                const Scalar* src = x.ptr() + (n * d.c + c) * d.plane();
                for (Index q = 0; q < d.plane(); ++q) acc += src[q];
            }
            const double mu = acc / static_cast<double>(count);
            double sq = 0.0;
            for (Index n = 0; n < d.n; ++n) {
                const Scalar* src = x.ptr() + (n * d.c + c) * d.plane();
                for (Index q = 0; q < d.plane(); ++q) {
                    const double diff = src[q] - mu;
                    sq += diff * diff;
                }
            }
            const double var = sq / static_cast<double>(count);
            mean[c] = static_cast<Scalar>(mu);
            inv_std[c] = static_cast<Scalar>(1.0 / std::sqrt(var + state.epsilon));
            auto& rm = state.running_mean.mutable_data();
            auto& rv = state.running_var.mutable_data();
            rm[c] = static_cast<Scalar>((1.0 - state.momentum) * rm[c] + state.momentum * mu);
            rv[c] = static_cast<Scalar>((1.0 - state.momentum) * rv[c] + state.momentum * var);
        }
    } else {
        mean = state.running_mean.data();
        inv_std = (state.running_var.data() + static_cast<Scalar>(state.epsilon)).rsqrt();
    }

    Tensor<Scalar> out(d);
    Array xhat(x.size());
    for (Index n = 0; n < d.n; ++n) {
        for (Index c = 0; c < d.c; ++c) {
            const Index base = (n * d.c + c) * d.plane();
            const Scalar gm = state.gamma.data()[c];
            const Scalar bt = state.beta.data()[c];
            for (Index q = 0; q < d.plane(); ++q) {
                const Scalar h = (x.data()[base + q] - mean[c]) * inv_std[c];
                xhat[base + q] = h;
                out.mutable_data()[base + q] = gm * h + bt;
            }
        }
    }
    require_finite(out, "batch_norm");

    if (tape.wants({&x, &state.gamma, &state.beta})) {
        tape.record("batch_norm", {x, state.gamma, state.beta}, out,
                    [x, gamma = state.gamma, beta = state.beta, xhat = std::move(xhat), inv_std, mode, d,
                     count](const auto& g) {
                        Array dgamma = Array::Zero(d.c), dbeta = Array::Zero(d.c);
                        for (Index n = 0; n < d.n; ++n) {
                            for (Index c = 0; c < d.c; ++c) {
                                const Index base = (n * d.c + c) * d.plane();
                                dbeta[c] += g.segment(base, d.plane()).sum();
                                dgamma[c] += (g.segment(base, d.plane()) * xhat.segment(base, d.plane())).sum();
                            }
                        }
                        if (x.requires_grad()) {
                            auto& dx = x.mutable_grad();
                            const Scalar m = static_cast<Scalar>(count);
                            for (Index n = 0; n < d.n; ++n) {
                                for (Index c = 0; c < d.c; ++c) {
                                    const Index base = (n * d.c + c) * d.plane();
                                    const Scalar scale_c = gamma.data()[c] * inv_std[c];
                                    if (mode == Mode::train) {
                                        dx.segment(base, d.plane()) +=
                                            (scale_c / m) * (m * g.segment(base, d.plane()) - dbeta[c] -
                                                             xhat.segment(base, d.plane()) * dgamma[c]);
                                    } else {
                                        dx.segment(base, d.plane()) += scale_c * g.segment(base, d.plane());
                                    }
                                }
                            }
                        }
                        accumulate_grad(gamma, dgamma);
                        accumulate_grad(beta, dbeta);
                    });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Activations and pooling

template <typename Scalar>
Tensor<Scalar> relu(Tape<Scalar>& tape, const Tensor<Scalar>& x) {
    Tensor<Scalar> out(x.dims(), x.data().max(Scalar(0)));
    require_finite(out, "relu");
    if (tape.wants({&x})) {
        tape.record("relu", {x}, out, [x](const auto& g) {
            accumulate_grad(x, (x.data() > Scalar(0)).select(g, Scalar(0)));
        });
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> avg_pool(Tape<Scalar>& tape, const Tensor<Scalar>& x, Index kernel, Index stride) {
    const Dims& d = x.dims();
    const Index oh = window_output_size(d.h, kernel, stride, 0);
    const Index ow = window_output_size(d.w, kernel, stride, 0);
    const Dims od{d.n, d.c, oh, ow};
    Tensor<Scalar> out(od);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(kernel * kernel);
    for (Index nc = 0; nc < d.n * d.c; ++nc) {
        const Scalar* src = x.ptr() + nc * d.plane();
        Scalar* dst = out.mutable_ptr() + nc * od.plane();
        for (Index i = 0; i < oh; ++i) {
            for (Index j = 0; j < ow; ++j) {
                Scalar acc = 0;
                for (Index a = 0; a < kernel; ++a) {
                    for (Index b = 0; b < kernel; ++b) acc += src[(i * stride + a) * d.w + j * stride + b];
                }
                dst[i * ow + j] = acc * inv;
            }
        }
    }
    require_finite(out, "avg_pool");
    if (tape.wants({&x})) {
        tape.record("avg_pool", {x}, out, [x, kernel, stride, od, inv](const auto& g) {
            const Dims& d = x.dims();
            auto& dx = x.mutable_grad();
            for (Index nc = 0; nc < d.n * d.c; ++nc) {
                for (Index i = 0; i < od.h; ++i) {
                    for (Index j = 0; j < od.w; ++j) {
                        const Scalar share = g[nc * od.plane() + i * od.w + j] * inv;
                        for (Index a = 0; a < kernel; ++a) {
                            for (Index b = 0; b < kernel; ++b) {
                                dx[nc * d.plane() + (i * stride + a) * d.w + j * stride + b] += share;
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> max_pool(Tape<Scalar>& tape, const Tensor<Scalar>& x, Index kernel, Index stride, Index padding) {
    const Dims& d = x.dims();
    if (padding >= kernel) throw GeometryError("max_pool: padding must be smaller than kernel");
    const Index oh = window_output_size(d.h, kernel, stride, padding);
    const Index ow = window_output_size(d.w, kernel, stride, padding);
    const Dims od{d.n, d.c, oh, ow};
    Tensor<Scalar> out(od);
    std::vector<Index> argmax(static_cast<std::size_t>(od.count()));
    for (Index nc = 0; nc < d.n * d.c; ++nc) {
        const Scalar* src = x.ptr() + nc * d.plane();
        for (Index i = 0; i < oh; ++i) {
            for (Index j = 0; j < ow; ++j) {
                Scalar best = -std::numeric_limits<Scalar>::infinity();
                Index where = -1;
                for (Index a = 0; a < kernel; ++a) {
                    const Index r = i * stride - padding + a;
                    if (r < 0 || r >= d.h) continue;
                    for (Index b = 0; b < kernel; ++b) {
                        const Index s = j * stride - padding + b;
                        if (s < 0 || s >= d.w) continue;
                        if (where < 0 || src[r * d.w + s] > best) {
                            best = src[r * d.w + s];
                            where = r * d.w + s;
                        }
                    }
                }
                const Index o = nc * od.plane() + i * ow + j;
                out.mutable_data()[o] = best;
                argmax[static_cast<std::size_t>(o)] = nc * d.plane() + where;
            }
        }
    }
    require_finite(out, "max_pool");
    if (tape.wants({&x})) {
        tape.record("max_pool", {x}, out, [x, argmax = std::move(argmax)](const auto& g) {
            auto& dx = x.mutable_grad();
            for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += g[static_cast<Index>(o)];
        });
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> global_avg_pool(Tape<Scalar>& tape, const Tensor<Scalar>& x) {
    const Dims& d = x.dims();
    if (d.plane() < 1) throw GeometryError("global_avg_pool: empty spatial extent");
    Tensor<Scalar> out(Dims{d.n, d.c, 1, 1});
    const auto planes = as_matrix(x.ptr(), d.n * d.c, d.plane());
    out.mutable_data() = planes.rowwise().mean().array();
    require_finite(out, "global_avg_pool");
    if (tape.wants({&x})) {
        tape.record("global_avg_pool", {x}, out, [x](const auto& g) {
            const Dims& d = x.dims();
            auto dx = as_matrix(x.mutable_grad().data(), d.n * d.c, d.plane());
            dx.colwise() += (g / static_cast<Scalar>(d.plane())).matrix();
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear head and loss

template <typename Scalar>
Linear<Scalar> Linear<Scalar>::make(Index in_features, Index out_features, Rng& rng) {
    Linear p;
    p.weight = randn<Scalar>(Dims{1, 1, in_features, out_features}, rng, 1.0 / std::sqrt(static_cast<double>(in_features)));
    p.weight.set_requires_grad();
    p.bias = zeros<Scalar>(Dims{1, 1, 1, out_features});
    p.bias.set_requires_grad();
    return p;
}

template <typename Scalar>
Tensor<Scalar> linear(Tape<Scalar>& tape, const Tensor<Scalar>& x, const Linear<Scalar>& p) {
    const Dims& d = x.dims();
    const Index features = d.c * d.plane();
    if (features != p.in_features()) {
        throw ShapeError("linear: input has " + std::to_string(features) + " features, weight expects " +
                         std::to_string(p.in_features()));
    }
    if (p.bias.dims() != Dims{1, 1, 1, p.out_features()}) throw ShapeError("linear: bias dims " + p.bias.dims().str());
    const Index k = p.out_features();
    Tensor<Scalar> out(Dims{d.n, k, 1, 1});
    // Row by row in feature order rather than one GEMM, so a sample's logits
    // do not depend on how many samples share the batch.
    auto y = as_matrix(out.mutable_ptr(), d.n, k);
    const auto xs = as_matrix(x.ptr(), d.n, features);
    const auto w = as_matrix(p.weight.ptr(), features, k);
    y.setZero();
    for (Index n = 0; n < d.n; ++n) {
        for (Index f = 0; f < features; ++f) y.row(n) += xs(n, f) * w.row(f);
    }
    y.rowwise() += as_matrix(p.bias.ptr(), 1, k).row(0);
    require_finite(out, "linear");
    if (tape.wants({&x, &p.weight, &p.bias})) {
        tape.record("linear", {x, p.weight, p.bias}, out,
                    [x, weight = p.weight, bias = p.bias, features, k](const auto& g) {
                        const Index n = x.dims().n;
                        const auto dy = as_matrix(g.data(), n, k);
                        if (x.requires_grad()) {
                            as_matrix(x.mutable_grad().data(), n, features).noalias() +=
                                dy * as_matrix(weight.ptr(), features, k).transpose();
                        }
                        if (weight.requires_grad()) {
                            as_matrix(weight.mutable_grad().data(), features, k).noalias() +=
                                as_matrix(x.ptr(), n, features).transpose() * dy;
                        }
                        if (bias.requires_grad()) bias.mutable_grad() += dy.colwise().sum().transpose().array();
                    });
    }
    return out;
}

template <typename Scalar>
LossOutput<Scalar> softmax_cross_entropy(Tape<Scalar>& tape, const Tensor<Scalar>& logits,
                                         const RowMatrix<Scalar>& target) {
    const Dims& d = logits.dims();
    if (d.h != 1 || d.w != 1) throw ShapeError("softmax_cross_entropy: logits must be (N, K, 1, 1), got " + d.str());
    if (target.rows() != d.n || target.cols() != d.c) {
        throw ShapeError("softmax_cross_entropy: target is " + std::to_string(target.rows()) + "x" +
                         std::to_string(target.cols()) + ", logits " + d.str());
    }
    if (d.n < 1) throw ShapeError("softmax_cross_entropy: empty batch");
    for (Index r = 0; r < target.rows(); ++r) {
        if ((target.row(r).array() < Scalar(0)).any() || !target.row(r).allFinite() ||
            std::abs(static_cast<double>(target.row(r).sum()) - 1.0) > 1e-6) {
            throw ArgumentError("softmax_cross_entropy: target row " + std::to_string(r) + " is not a probability vector");
        }
    }

    const auto z = as_matrix(logits.ptr(), d.n, d.c);
    RowMatrix<Scalar> probs(d.n, d.c);
    double total = 0.0;
    for (Index r = 0; r < d.n; ++r) {
        const Scalar peak = z.row(r).maxCoeff();
        const auto shifted = (z.row(r).array() - peak).eval();
        const Scalar log_norm = std::log(shifted.exp().sum());
        const auto log_p = (shifted - log_norm).eval();
        probs.row(r) = log_p.exp().matrix();
        total -= static_cast<double>((target.row(r).array() * log_p).sum());
    }

    LossOutput<Scalar> result;
    result.value = static_cast<Scalar>(total / static_cast<double>(d.n));
    result.logits_grad = Tensor<Scalar>(d);
    as_matrix(result.logits_grad.mutable_ptr(), d.n, d.c) = (probs - target) / static_cast<Scalar>(d.n);
    result.loss = full<Scalar>(Dims{1, 1, 1, 1}, result.value);
    require_finite(result.loss, "softmax_cross_entropy");
    if (tape.wants({&logits})) {
        tape.record("softmax_cross_entropy", {logits}, result.loss,
                    [logits, dz = result.logits_grad](const auto& g) { accumulate_grad(logits, g[0] * dz.data()); });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Composite unit

template <typename Scalar>
ConvBn<Scalar> ConvBn<Scalar>::make(Index in_channels, Index out_channels, Index kernel, Index stride, Rng& rng,
                                    bool relu, double gamma_init) {
    ConvBn unit;
    unit.conv = Conv2d<Scalar>::make(in_channels, out_channels, kernel, stride, kernel / 2, rng);
    unit.bn = BatchNorm<Scalar>::make(out_channels, gamma_init);
    unit.relu = relu;
    return unit;
}

template <typename Scalar>
Tensor<Scalar> ConvBn<Scalar>::forward(Tape<Scalar>& tape, const Tensor<Scalar>& x, Mode mode) {
    Tensor<Scalar> y = batch_norm(tape, conv2d(tape, x, conv), bn, mode);
    return relu ? hsnet::relu(tape, y) : y;
}

#define HSNET_INSTANTIATE(S)                                                                                  \
    template struct Conv2d<S>;                                                                                \
    template struct BatchNorm<S>;                                                                             \
    template struct Linear<S>;                                                                                \
    template struct ConvBn<S>;                                                                                \
    template Tensor<S> conv2d<S>(Tape<S>&, const Tensor<S>&, const Conv2d<S>&);                               \
    template Tensor<S> batch_norm<S>(Tape<S>&, const Tensor<S>&, BatchNorm<S>&, Mode);                        \
    template Tensor<S> relu<S>(Tape<S>&, const Tensor<S>&);                                                   \
    template Tensor<S> avg_pool<S>(Tape<S>&, const Tensor<S>&, Index, Index);                                 \
    template Tensor<S> max_pool<S>(Tape<S>&, const Tensor<S>&, Index, Index, Index);                          \
    template Tensor<S> global_avg_pool<S>(Tape<S>&, const Tensor<S>&);                                        \
    template Tensor<S> linear<S>(Tape<S>&, const Tensor<S>&, const Linear<S>&);                               \
    template LossOutput<S> softmax_cross_entropy<S>(Tape<S>&, const Tensor<S>&, const RowMatrix<S>&);

HSNET_INSTANTIATE(float)
HSNET_INSTANTIATE(double)

}  // namespace hsnet
