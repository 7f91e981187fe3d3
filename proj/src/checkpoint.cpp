#include "hsnet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <boost/crc.hpp>

namespace hsnet {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'H', 'S', 'N', 'T'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
    boost::crc_32_type crc;
    crc.process_bytes(data, n);
    return crc.checksum();
}

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    template <typename T>
    T take() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, data_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    const std::uint8_t* bytes(std::size_t n) {
        need(n);
        const auto* p = data_ + pos_;
        pos_ += n;
        return p;
    }

    [[nodiscard]] std::size_t remaining() const { return size_ - pos_; }

private:
    void need(std::size_t n) const {
        if (n > size_ - pos_) throw FormatError("checkpoint: truncated record at byte " + std::to_string(pos_));
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointTensor>& tensors) {
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
        std::uint64_t count = 1;
        for (auto d : t.dims) {
            put<std::uint64_t>(out, d);
            count *= d;
        }
        if (count != t.values.size()) throw ShapeError("checkpoint: tensor " + t.name + " value count mismatch");
        for (float v : t.values) put<float>(out, v);
    }
    put<std::uint32_t>(out, crc32(out.data(), out.size()));
    return out;
}

std::vector<CheckpointTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16) throw FormatError("checkpoint: file too short (" + std::to_string(bytes.size()) + " bytes)");
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
    if (crc32(bytes.data(), bytes.size() - 4) != stored) throw CorruptionError("checkpoint: CRC-32 mismatch");

    Reader in(bytes.data(), bytes.size() - 4);
    if (std::memcmp(in.bytes(4), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
    const auto version = in.take<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto count = in.take<std::uint32_t>();
    std::vector<CheckpointTensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        const auto len = in.take<std::uint32_t>();
        const auto* name = in.bytes(len);
        t.name.assign(reinterpret_cast<const char*>(name), len);
        const auto rank = in.take<std::uint32_t>();
        if (rank > 8) throw FormatError("checkpoint: implausible rank for " + t.name);
        std::uint64_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            t.dims.push_back(in.take<std::uint64_t>());
            if (t.dims.back() != 0 && n > in.remaining() / t.dims.back()) {
                throw FormatError("checkpoint: tensor " + t.name + " larger than file");
            }
            n *= t.dims.back();
        }
        if (n > in.remaining() / 4) throw FormatError("checkpoint: tensor " + t.name + " larger than file");
        t.values.resize(n);
        std::memcpy(t.values.data(), in.bytes(n * 4), n * 4);
        tensors.push_back(std::move(t));
    }
    if (in.remaining() != 0) throw FormatError("checkpoint: trailing bytes before checksum");
    return tensors;
}

template <typename Scalar>
void save_checkpoint(Network<Scalar>& net, const std::filesystem::path& file) {
    auto named = net.named_tensors();
    std::sort(named.begin(), named.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    std::vector<CheckpointTensor> tensors;
    tensors.reserve(named.size());
    for (const auto& nt : named) {
        const auto& d = nt.tensor.dims();
        CheckpointTensor t{nt.name,
                           {static_cast<std::uint64_t>(d.n), static_cast<std::uint64_t>(d.c),
                            static_cast<std::uint64_t>(d.h), static_cast<std::uint64_t>(d.w)},
                           {}};
        t.values.resize(static_cast<std::size_t>(nt.tensor.size()));
        for (Index i = 0; i < nt.tensor.size(); ++i) t.values[i] = static_cast<float>(nt.tensor.data()[i]);
        tensors.push_back(std::move(t));
    }
    const auto bytes = encode_checkpoint(tensors);
    const auto tmp = std::filesystem::path(file).concat(".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, file);
}

template <typename Scalar>
void load_checkpoint(Network<Scalar>& net, const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + file.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto tensors = decode_checkpoint(bytes);

    std::map<std::string, const CheckpointTensor*> by_name;
    for (const auto& t : tensors) {
        if (!by_name.emplace(t.name, &t).second) throw FormatError("checkpoint: duplicate tensor " + t.name);
    }
    auto named = net.named_tensors();
    if (named.size() != by_name.size()) {
        throw IncompatibleError("checkpoint holds " + std::to_string(by_name.size()) + " tensors, network has " +
                                std::to_string(named.size()));
    }
    for (const auto& nt : named) {
        auto it = by_name.find(nt.name);
        if (it == by_name.end()) throw IncompatibleError("checkpoint lacks tensor " + nt.name);
        const auto& d = nt.tensor.dims();
        const std::vector<std::uint64_t> want{static_cast<std::uint64_t>(d.n), static_cast<std::uint64_t>(d.c),
                                              static_cast<std::uint64_t>(d.h), static_cast<std::uint64_t>(d.w)};
        if (it->second->dims != want) {
            throw IncompatibleError("checkpoint tensor " + nt.name + " has a different shape than " + d.str());
        }
    }
    for (auto& nt : named) {
        const auto& values = by_name.at(nt.name)->values;
        auto& data = nt.tensor.mutable_data();
        for (Index i = 0; i < nt.tensor.size(); ++i) data[i] = static_cast<Scalar>(values[i]);
    }
}

template void save_checkpoint<float>(Network<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(Network<double>&, const std::filesystem::path&);
template void load_checkpoint<float>(Network<float>&, const std::filesystem::path&);
template void load_checkpoint<double>(Network<double>&, const std::filesystem::path&);

}  // namespace hsnet
