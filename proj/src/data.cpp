#include "hsnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <boost/math/special_functions/beta.hpp>

namespace hsnet {

void Dataset::validate() const {
    if (images.dims().n != size()) throw FormatError(name + ": image count does not match label count");
    for (int label : labels) {
        if (label < 0 || label >= classes) throw FormatError(name + ": label " + std::to_string(label) + " out of range");
    }
    if (size() > 0 && (!images.all_finite() || images.data().minCoeff() < 0.0f || images.data().maxCoeff() > 1.0f)) {
        throw FormatError(name + ": pixels must lie in [0, 1]");
    }
}

Dataset Dataset::head(Index n) const {
    const Index keep = std::min(n, size());
    const Dims& d = images.dims();
    Dataset out;
    out.name = name;
    out.classes = classes;
    out.images = Tensor<float>(Dims{keep, d.c, d.h, d.w}, images.data().head(keep * d.c * d.plane()));
    out.labels.assign(labels.begin(), labels.begin() + keep);
    return out;
}

// ---------------------------------------------------------------------------
// CIFAR-10

Dataset load_cifar10_file(const std::filesystem::path& file, std::optional<Index> expected_records) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open " + file.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto size = static_cast<Index>(bytes.size());
    if (expected_records) {
        if (size != *expected_records * kCifarRecordBytes) {
            throw FormatError(file.string() + ": expected " + std::to_string(*expected_records * kCifarRecordBytes) +
                              " bytes (" + std::to_string(*expected_records) + " records), found " + std::to_string(size));
        }
    } else if (size == 0 || size % kCifarRecordBytes != 0) {
        throw FormatError(file.string() + ": size " + std::to_string(size) + " is not a positive multiple of the " +
                          std::to_string(kCifarRecordBytes) + "-byte record size");
    }

    const Index records = size / kCifarRecordBytes;
    const Index plane = kCifarSide * kCifarSide;
    Dataset data;
    data.name = file.filename().string();
    data.classes = 10;
    data.images = Tensor<float>(Dims{records, 3, kCifarSide, kCifarSide});
    data.labels.resize(static_cast<std::size_t>(records));
    float* dst = data.images.mutable_ptr();
    for (Index r = 0; r < records; ++r) {
        const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data()) + r * kCifarRecordBytes;
        data.labels[static_cast<std::size_t>(r)] = rec[0];
        for (Index i = 0; i < 3 * plane; ++i) dst[r * 3 * plane + i] = static_cast<float>(rec[1 + i]) / 255.0f;
    }
    data.validate();
    return data;
}

Dataset load_cifar10(const std::filesystem::path& dir, Split split) {
    std::vector<std::filesystem::path> files;
    if (split == Split::train) {
        for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
        files.push_back(dir / "test_batch.bin");
    }
    std::vector<Dataset> parts;
    for (const auto& f : files) parts.push_back(load_cifar10_file(f, kCifarRecordsPerFile));

    Dataset all;
    all.name = split == Split::train ? "cifar10-train" : "cifar10-test";
    all.classes = 10;
    const Index total = static_cast<Index>(parts.size()) * kCifarRecordsPerFile;
    all.images = Tensor<float>(Dims{total, 3, kCifarSide, kCifarSide});
    Index offset = 0;
    for (const auto& p : parts) {
        all.images.mutable_data().segment(offset, p.images.size()) = p.images.data();
        offset += p.images.size();
        all.labels.insert(all.labels.end(), p.labels.begin(), p.labels.end());
    }
    return all;
}

std::vector<std::uint8_t> encode_cifar_record(const Dataset& data, Index index) {
    const Dims& d = data.images.dims();
    if (d.c != 3 || d.h != kCifarSide || d.w != kCifarSide) {
        throw ShapeError("CIFAR-10 records are 3x32x32, dataset is " + d.str());
    }
    std::vector<std::uint8_t> rec(static_cast<std::size_t>(kCifarRecordBytes));
    rec[0] = static_cast<std::uint8_t>(data.labels.at(static_cast<std::size_t>(index)));
    const float* src = data.images.ptr() + index * 3 * d.plane();
    for (Index i = 0; i < 3 * d.plane(); ++i) {
        rec[static_cast<std::size_t>(1 + i)] = static_cast<std::uint8_t>(std::lround(std::clamp(src[i], 0.0f, 1.0f) * 255.0f));
    }
    return rec;
}

void save_cifar10(const Dataset& data, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    for (Index i = 0; i < data.size(); ++i) {
        const auto rec = encode_cifar_record(data, i);
        out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
    }
    if (!out) throw IoError("write failed for " + file.string());
}

// ---------------------------------------------------------------------------
// Synthetic blobs

Dataset synth_blobs(Index classes, Index per_class, Index image_size, const Rng& rng, std::uint64_t noise_stream) {
    if (classes < 2) throw ArgumentError("synth_blobs: need at least two classes");
    if (per_class < 1 || image_size < 1) throw ArgumentError("synth_blobs: per_class and image_size must be >= 1");
    const Index plane = image_size * image_size;

    std::vector<std::vector<double>> patterns(static_cast<std::size_t>(classes), std::vector<double>(3 * plane));
    for (Index k = 0; k < classes; ++k) {
        Rng pr = rng.split(static_cast<std::uint64_t>(k));
        const double angle = std::numbers::pi * (static_cast<double>(k) + 0.5 * pr.uniform()) / static_cast<double>(classes);
        const double cycles = 1.0 + static_cast<double>(k % 3);
        auto& pat = patterns[static_cast<std::size_t>(k)];
        for (Index c = 0; c < 3; ++c) {
            const double level = 0.3 + 0.4 * pr.uniform();
            const double phase = 2.0 * std::numbers::pi * pr.uniform();
            for (Index y = 0; y < image_size; ++y) {
                for (Index x = 0; x < image_size; ++x) {
                    const double t = (static_cast<double>(x) * std::cos(angle) + static_cast<double>(y) * std::sin(angle)) /
                                     static_cast<double>(image_size);
                    pat[static_cast<std::size_t>(c * plane + y * image_size + x)] =
                        level + 0.2 * std::sin(2.0 * std::numbers::pi * cycles * t + phase);
                }
            }
        }
    }

    Dataset data;
    data.name = "synth_blobs";
    data.classes = classes;
    const Index n = classes * per_class;
    data.images = Tensor<float>(Dims{n, 3, image_size, image_size});
    data.labels.resize(static_cast<std::size_t>(n));
    Rng noise = rng.split(0xB10B5ULL + noise_stream);
    float* dst = data.images.mutable_ptr();
    for (Index i = 0; i < n; ++i) {
        const Index k = i % classes;
        data.labels[static_cast<std::size_t>(i)] = static_cast<int>(k);
        const auto& pat = patterns[static_cast<std::size_t>(k)];
        for (Index j = 0; j < 3 * plane; ++j) {
            const double v = pat[static_cast<std::size_t>(j)] + 0.1 * noise.normal();
            dst[i * 3 * plane + j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Augmentation and targets

template <typename Scalar>
Tensor<Scalar> augment(const Tensor<Scalar>& images, Rng& rng, Index pad, double flip_prob) {
    if (pad < 0) throw ArgumentError("augment: pad must be >= 0");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ArgumentError("augment: flip_prob must lie in [0, 1]");
    const Dims& d = images.dims();
    Tensor<Scalar> out(d);
    for (Index n = 0; n < d.n; ++n) {
        const auto oy = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(2 * pad + 1)));
        const auto ox = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(2 * pad + 1)));
        const bool flip = rng.bernoulli(flip_prob);
        for (Index c = 0; c < d.c; ++c) {
            for (Index y = 0; y < d.h; ++y) {
                const Index sy = y + oy - pad;
                for (Index x = 0; x < d.w; ++x) {
                    const Index tx = flip ? d.w - 1 - x : x;
                    const Index sx = tx + ox - pad;
                    const bool inside = sy >= 0 && sy < d.h && sx >= 0 && sx < d.w;
                    out.at(n, c, y, x) = inside ? images.at(n, c, sy, sx) : Scalar(0);
                }
            }
        }
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> flip_horizontal(const Tensor<Scalar>& images) {
    const Dims& d = images.dims();
    Tensor<Scalar> out(d);
    for (Index n = 0; n < d.n; ++n)
        for (Index c = 0; c < d.c; ++c)
            for (Index y = 0; y < d.h; ++y)
                for (Index x = 0; x < d.w; ++x) out.at(n, c, y, x) = images.at(n, c, y, d.w - 1 - x);
    return out;
}

template <typename Scalar>
RowMatrix<Scalar> smooth_labels(std::span<const int> labels, Index classes, double epsilon) {
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ArgumentError("smooth_labels: epsilon must lie in [0, 1)");
    RowMatrix<Scalar> rows = RowMatrix<Scalar>::Constant(static_cast<Index>(labels.size()), classes,
                                                         static_cast<Scalar>(epsilon / static_cast<double>(classes)));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) throw ArgumentError("smooth_labels: label out of range");
        rows(static_cast<Index>(i), labels[i]) =
            static_cast<Scalar>(1.0 - epsilon + epsilon / static_cast<double>(classes));
    }
    return rows;
}

double beta_quantile(double alpha, double u) {
    if (!(alpha > 0.0)) throw ArgumentError("mixup: alpha must be positive");
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return boost::math::ibeta_inv(alpha, alpha, u);
}

template <typename Scalar>
Batch<Scalar> mixup_with(const Batch<Scalar>& batch, double lambda, std::span<const Index> partner) {
    const Dims& d = batch.images.dims();
    if (static_cast<Index>(partner.size()) != d.n) throw ShapeError("mixup: partner order must cover the batch");
    const Index stride = d.c * d.plane();
    const auto lam = static_cast<Scalar>(lambda);
    Batch<Scalar> out;
    out.labels = batch.labels;
    out.images = Tensor<Scalar>(d);
    out.targets.resize(batch.targets.rows(), batch.targets.cols());
    for (Index n = 0; n < d.n; ++n) {
        const Index m = partner[static_cast<std::size_t>(n)];
        out.images.mutable_data().segment(n * stride, stride) =
            lam * batch.images.data().segment(n * stride, stride) + (Scalar(1) - lam) * batch.images.data().segment(m * stride, stride);
        out.targets.row(n) = lam * batch.targets.row(n) + (Scalar(1) - lam) * batch.targets.row(m);
    }
    return out;
}

template <typename Scalar>
Batch<Scalar> mixup(const Batch<Scalar>& batch, double alpha, Rng& rng) {
    const double lambda = beta_quantile(alpha, rng.uniform());
    const auto partner = rng.permutation(batch.images.dims().n);
    return mixup_with(batch, lambda, partner);
}

template <typename Scalar>
Tensor<Scalar> normalize(const Tensor<Scalar>& images, const Normalization& norm) {
    const Dims& d = images.dims();
    if (d.c != 3) throw ShapeError("normalize: expected 3 channels, got " + d.str());
    Tensor<Scalar> out(d);
    for (Index n = 0; n < d.n; ++n) {
        for (Index c = 0; c < 3; ++c) {
            const Index base = (n * 3 + c) * d.plane();
            const auto mean = static_cast<Scalar>(norm.mean[static_cast<std::size_t>(c)]);
            const auto inv = static_cast<Scalar>(1.0 / norm.std[static_cast<std::size_t>(c)]);
            out.mutable_data().segment(base, d.plane()) = (images.data().segment(base, d.plane()) - mean) * inv;
        }
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> gather(const Dataset& data, std::span<const Index> indices) {
    const Dims& d = data.images.dims();
    const Index stride = d.c * d.plane();
    Tensor<Scalar> out(Dims{static_cast<Index>(indices.size()), d.c, d.h, d.w});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.mutable_data().segment(static_cast<Index>(i) * stride, stride) =
            data.images.data().segment(indices[i] * stride, stride).template cast<Scalar>();
    }
    return out;
}

#define HSNET_INSTANTIATE(S)                                                                  \
    template Tensor<S> augment<S>(const Tensor<S>&, Rng&, Index, double);                     \
    template Tensor<S> flip_horizontal<S>(const Tensor<S>&);                                  \
    template RowMatrix<S> smooth_labels<S>(std::span<const int>, Index, double);              \
    template Batch<S> mixup<S>(const Batch<S>&, double, Rng&);                                \
    template Batch<S> mixup_with<S>(const Batch<S>&, double, std::span<const Index>);         \
    template Tensor<S> normalize<S>(const Tensor<S>&, const Normalization&);                  \
    template Tensor<S> gather<S>(const Dataset&, std::span<const Index>);

HSNET_INSTANTIATE(float)
HSNET_INSTANTIATE(double)

}  // namespace hsnet
