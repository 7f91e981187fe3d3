#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "hsnet/data.hpp"
#include "hsnet/errors.hpp"
#include "oracles.hpp"

using namespace hsnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "hsnet_data_test";
    fs::create_directories(dir);
    return dir / name;
}

// Random CIFAR-style bytes written without going through the library.
std::vector<unsigned char> random_records(Index records, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(records * 3073));
    for (Index r = 0; r < records; ++r) {
        bytes[static_cast<std::size_t>(r * 3073)] = static_cast<unsigned char>(rng.uniform_index(10));
        for (Index i = 1; i < 3073; ++i) bytes[static_cast<std::size_t>(r * 3073 + i)] = static_cast<unsigned char>(rng.uniform_index(256));
    }
    return bytes;
}

void write_bytes(const fs::path& file, const std::vector<unsigned char>& bytes) {
    std::ofstream out(file, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Cifar10, FullFileLoadsTenThousandRecords) {
    const auto file = scratch("full.bin");
    const auto bytes = random_records(10000, 1);
    write_bytes(file, bytes);
    const auto data = load_cifar10_file(file, 10000);
    EXPECT_EQ(data.size(), 10000);
    EXPECT_EQ(data.images.dims(), (Dims{10000, 3, 32, 32}));
    EXPECT_EQ(data.labels[9999], bytes[9999 * 3073]);
    // Planar RGB: the green plane of record 0 starts at byte 1 + 1024.
    EXPECT_EQ(data.images.at(0, 1, 0, 0), static_cast<float>(bytes[1 + 1024]) / 255.0f);
    EXPECT_EQ(data.images.at(0, 2, 31, 31), static_cast<float>(bytes[3072]) / 255.0f);
}

TEST(Cifar10, FirstRecordRoundTrips) {
    const auto file = scratch("few.bin");
    const auto bytes = random_records(3, 2);
    write_bytes(file, bytes);
    const auto data = load_cifar10_file(file);
    const auto rec = encode_cifar_record(data, 0);
    ASSERT_EQ(rec.size(), 3073u);
    EXPECT_TRUE(std::equal(rec.begin(), rec.end(), bytes.begin()));

    const auto copy = scratch("copy.bin");
    save_cifar10(data, copy);
    std::ifstream in(copy, std::ios::binary);
    const std::vector<unsigned char> back((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_EQ(back, bytes);
}

TEST(Cifar10, TruncatedFileNamesFileAndSize) {
    const auto file = scratch("truncated.bin");
    auto bytes = random_records(2, 3);
    bytes.resize(bytes.size() - 100);
    write_bytes(file, bytes);
    try {
        (void)load_cifar10_file(file, 2);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("truncated.bin"), std::string::npos) << msg;
        EXPECT_NE(msg.find("6146"), std::string::npos) << msg;
    }
    EXPECT_THROW((void)load_cifar10_file(file), FormatError);
}

TEST(Cifar10, MissingFileIsIoError) {
    EXPECT_THROW((void)load_cifar10_file(scratch("does_not_exist.bin")), IoError);
    EXPECT_THROW((void)load_cifar10(scratch("no_such_dir"), Split::test), IoError);
}

TEST(Cifar10, BadLabelIsFormatError) {
    const auto file = scratch("badlabel.bin");
    auto bytes = random_records(1, 4);
    bytes[0] = 10;
    write_bytes(file, bytes);
    EXPECT_THROW((void)load_cifar10_file(file), FormatError);
}

TEST(SynthBlobs, DeterministicBalancedAndInRange) {
    const Rng rng(5);
    const auto a = synth_blobs(10, 100, 16, rng);
    const auto b = synth_blobs(10, 100, 16, rng);
    EXPECT_EQ(a.size(), 1000);
    EXPECT_TRUE(bit_equal(a.images, b.images));
    EXPECT_EQ(a.labels, b.labels);
    std::vector<int> hist(10, 0);
    for (int y : a.labels) ++hist[static_cast<std::size_t>(y)];
    for (int h : hist) EXPECT_EQ(h, 100);
    EXPECT_NO_THROW(a.validate());
    EXPECT_FALSE(bit_equal(a.images, synth_blobs(10, 100, 16, rng, 1).images));
}

TEST(SynthBlobs, NearestCentroidSeparatesClasses) {
    const Rng rng(6);
    const auto train = synth_blobs(10, 100, 32, rng, 0);
    const auto test = synth_blobs(10, 100, 32, rng, 1);
    const Index dim = 3 * 32 * 32;
    Eigen::MatrixXd centroid = Eigen::MatrixXd::Zero(10, dim);
    for (Index i = 0; i < train.size(); ++i) {
        centroid.row(train.labels[static_cast<std::size_t>(i)]) +=
            train.images.data().segment(i * dim, dim).cast<double>().matrix().transpose();
    }
    centroid /= 100.0;
    Index correct = 0;
    for (Index i = 0; i < test.size(); ++i) {
        const Eigen::RowVectorXd x = test.images.data().segment(i * dim, dim).cast<double>().matrix().transpose();
        Index best = 0;
        (centroid.rowwise() - x).rowwise().squaredNorm().minCoeff(&best);
        correct += best == test.labels[static_cast<std::size_t>(i)];
    }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(test.size()), 0.99);
}

TEST(Augment, IdentityAndInvolution) {
    Rng rng(7);
    const auto x = uniform<double>({4, 3, 8, 8}, rng, 0.0, 1.0);
    EXPECT_TRUE(bit_equal(augment(x, rng, 0, 0.0), x));
    EXPECT_TRUE(bit_equal(augment(augment(x, rng, 0, 1.0), rng, 0, 1.0), x));
    const auto f = flip_horizontal(x);
    EXPECT_EQ(f.at(1, 2, 3, 0), x.at(1, 2, 3, 7));
    EXPECT_TRUE(bit_equal(flip_horizontal(f), x));
}

TEST(Augment, CropOffsetsAreUniform) {
    // Each pixel encodes its position, so the centre output pixel reveals the
    // crop offset of its image.
    const Index side = 12, pad = 4, n = 10000;
    Tensor<double> x({n, 3, side, side});
    for (Index i = 0; i < n; ++i)
        for (Index c = 0; c < 3; ++c)
            for (Index r = 0; r < side; ++r)
                for (Index q = 0; q < side; ++q) x.at(i, c, r, q) = static_cast<double>(r * side + q + 1);
    Rng rng(8);
    const auto y = augment(x, rng, pad, 0.0);
    std::vector<long> counts(81, 0);
    for (Index i = 0; i < n; ++i) {
        const auto code = static_cast<Index>(y.at(i, 0, side / 2, side / 2)) - 1;
        const Index oy = code / side - side / 2 + pad;
        const Index ox = code % side - side / 2 + pad;
        ASSERT_TRUE(oy >= 0 && oy <= 2 * pad && ox >= 0 && ox <= 2 * pad);
        ++counts[static_cast<std::size_t>(oy * 9 + ox)];
    }
    EXPECT_GT(oracle::chi_square_uniform_p(counts), 0.01);
}

TEST(SmoothLabels, HandValuesAndRowSums) {
    const std::vector<int> labels{3, 0, 9};
    const auto t = smooth_labels<double>(labels, 10, 0.1);
    EXPECT_NEAR(t(0, 3), 0.91, 1e-15);
    EXPECT_NEAR(t(0, 0), 0.01, 1e-15);
    for (Index r = 0; r < 3; ++r) EXPECT_NEAR(t.row(r).sum(), 1.0, 1e-12);
    const auto hard = smooth_labels<double>(labels, 10, 0.0);
    for (Index r = 0; r < 3; ++r)
        for (Index k = 0; k < 10; ++k) EXPECT_EQ(hard(r, k), k == labels[static_cast<std::size_t>(r)] ? 1.0 : 0.0);
}

TEST(Mixup, ForcedLambdaCases) {
    Rng rng(9);
    Batch<double> b;
    b.images = randn<double>({4, 3, 4, 4}, rng, 1.0);
    b.labels = {0, 1, 2, 1};
    b.targets = smooth_labels<double>(b.labels, 3, 0.1);
    const std::vector<Index> perm{2, 0, 3, 1};
    const auto same = mixup_with(b, 1.0, perm);
    EXPECT_TRUE(bit_equal(same.images, b.images));
    EXPECT_EQ(same.targets, b.targets);

    Batch<double> twin;
    twin.images = Tensor<double>({2, 3, 4, 4});
    twin.images.mutable_data() << b.images.data().head(48), b.images.data().head(48);
    twin.labels = {1, 1};
    twin.targets = smooth_labels<double>(twin.labels, 3, 0.0);
    const std::vector<Index> swap{1, 0};
    const auto half = mixup_with(twin, 0.5, swap);
    EXPECT_TRUE(bit_equal(half.images, twin.images));
    EXPECT_EQ(half.targets, twin.targets);

    const auto mixed = mixup(b, 0.4, rng);
    for (Index r = 0; r < 4; ++r) EXPECT_NEAR(mixed.targets.row(r).sum(), 1.0, 1e-6);
}

TEST(Mixup, BetaQuantileProperties) {
    for (double u : {0.1, 0.37, 0.5, 0.9}) EXPECT_NEAR(beta_quantile(1.0, u), u, 1e-12);
    EXPECT_NEAR(beta_quantile(0.2, 0.5), 0.5, 1e-12);
    EXPECT_NEAR(beta_quantile(0.2, 0.2) + beta_quantile(0.2, 0.8), 1.0, 1e-12);
    // Beta(2, 2) has CDF 3x^2 - 2x^3.
    const double q = beta_quantile(2.0, 0.3);
    EXPECT_NEAR(3 * q * q - 2 * q * q * q, 0.3, 1e-12);
    EXPECT_THROW(beta_quantile(0.0, 0.5), ArgumentError);
}

TEST(Normalize, PerChannelAffine) {
    Rng rng(10);
    const auto x = uniform<double>({2, 3, 2, 2}, rng, 0.0, 1.0);
    const Normalization norm;
    const auto y = normalize(x, norm);
    for (Index c = 0; c < 3; ++c) {
        EXPECT_NEAR(y.at(1, c, 1, 0), (x.at(1, c, 1, 0) - norm.mean[static_cast<std::size_t>(c)]) / norm.std[static_cast<std::size_t>(c)],
                    1e-12);
    }
}

TEST(Gather, PicksRequestedImages) {
    const auto data = synth_blobs(3, 2, 4, Rng(11));
    const std::vector<Index> idx{5, 0};
    const auto g = gather<double>(data, idx);
    EXPECT_EQ(g.dims(), (Dims{2, 3, 4, 4}));
    EXPECT_EQ(g.at(0, 2, 3, 1), static_cast<double>(data.images.at(5, 2, 3, 1)));
    EXPECT_EQ(g.at(1, 0, 0, 0), static_cast<double>(data.images.at(0, 0, 0, 0)));
}
