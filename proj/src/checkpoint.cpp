// Checkpoint layout (little-endian):
//   "AXCK"                     magic
//   u32 version
//   i32 x 8                    input_size, kernel, conv1, conv2, fc1, fc2, classes, streams
//   u32 buffer_count, then per buffer: u32 ndim, u32 dims[ndim]
//   i64 adam step
//   f64 parameters, f64 first moments, f64 second moments (buffer order)
//   u64 FNV-1a hash of every preceding byte

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "apexflow/error.hpp"
#include "apexflow/network.hpp"

namespace apexflow::net {

namespace {

constexpr char kMagic[4] = {'A', 'X', 'C', 'K'};

class Writer {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        unsigned char raw[sizeof(T)];
        std::memcpy(raw, &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(raw, raw + sizeof(T));
        }
        bytes.insert(bytes.end(), raw, raw + sizeof(T));
    }

    std::vector<unsigned char> bytes;
};

class Reader {
public:
    Reader(const std::vector<unsigned char>& data, std::size_t limit) : data_(data), limit_(limit) {}

    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > limit_) {
            throw FormatError("checkpoint is truncated");
        }
        unsigned char raw[sizeof(T)];
        std::memcpy(raw, data_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(raw, raw + sizeof(T));
        }
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, raw, sizeof(T));
        return value;
    }

    std::size_t position() const noexcept { return pos_; }
    void seek(std::size_t pos) { pos_ = pos; }

private:
    const std::vector<unsigned char>& data_;
    std::size_t limit_;
    std::size_t pos_ = 0;
};

std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

void save_checkpoint(const NetworkParams& params, const AdamState& state, const std::filesystem::path& path) {
    const NetworkShape& s = params.shape;
    if (!(state.m.shape == s) || !(state.v.shape == s)) {
        throw ValidationError("optimizer state does not match the network shape");
    }
    Writer w;
    w.bytes.insert(w.bytes.end(), kMagic, kMagic + 4);
    w.put<std::uint32_t>(kCheckpointVersion);
    for (int v : {s.input_size, s.kernel, s.conv1_channels, s.conv2_channels, s.fc1_units, s.fc2_units, s.classes,
                  static_cast<int>(s.streams)}) {
        w.put<std::int32_t>(v);
    }
    const auto bufs = params.buffers();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(bufs.size()));
    for (const Tensor* t : bufs) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t->shape.size()));
        for (int d : t->shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
    w.put<std::int64_t>(state.t);
    for (const NetworkParams* set : {&params, &state.m, &state.v}) {
        for (const Tensor* t : set->buffers()) {
            for (double v : t->values) w.put<double>(v);
        }
    }
    w.put<std::uint64_t>(fnv1a(w.bytes.data(), w.bytes.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write checkpoint " + path.string());
    }
    out.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
    if (!out) {
        throw IoError("short write to checkpoint " + path.string());
    }
}

std::pair<NetworkParams, AdamState> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(path.string() + " is not a checkpoint file");
    }
    Reader header(bytes, bytes.size());
    for (int i = 0; i < 4; ++i) header.get<char>();
    const auto version = header.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    if (bytes.size() < 16) {
        throw FormatError("checkpoint is truncated");
    }
    const std::size_t body = bytes.size() - 8;
    Reader r(bytes, body);
    for (int i = 0; i < 8; ++i) r.get<char>();

    NetworkShape s;
    s.input_size = r.get<std::int32_t>();
    s.kernel = r.get<std::int32_t>();
    s.conv1_channels = r.get<std::int32_t>();
    s.conv2_channels = r.get<std::int32_t>();
    s.fc1_units = r.get<std::int32_t>();
    s.fc2_units = r.get<std::int32_t>();
    s.classes = r.get<std::int32_t>();
    const int streams = r.get<std::int32_t>();
    if (streams < 0 || streams > 2) {
        throw FormatError("checkpoint has an unknown stream mode");
    }
    s.streams = static_cast<Streams>(streams);
    try {
        s.validate();
    } catch (const ValidationError& e) {
        throw FormatError(std::string("checkpoint shape table is corrupt: ") + e.what());
    }

    NetworkParams params = NetworkParams::zeros(s);
    AdamState state = AdamState::zeros(s);
    const auto bufs = params.buffers();
    if (r.get<std::uint32_t>() != bufs.size()) {
        throw FormatError("checkpoint buffer count does not match its shape table");
    }
    for (const Tensor* t : bufs) {
        const auto ndim = r.get<std::uint32_t>();
        if (ndim != t->shape.size()) {
            throw FormatError("checkpoint buffer rank mismatch");
        }
        for (int d : t->shape) {
            if (r.get<std::uint32_t>() != static_cast<std::uint32_t>(d)) {
                throw FormatError("checkpoint buffer dimension mismatch");
            }
        }
    }
    state.t = r.get<std::int64_t>();
    for (NetworkParams* set : {&params, &state.m, &state.v}) {
        for (Tensor* t : set->buffers()) {
            for (double& v : t->values) v = r.get<double>();
        }
    }
    if (r.position() != body) {
        throw FormatError("checkpoint has trailing bytes");
    }
    Reader tail(bytes, bytes.size());
    tail.seek(body);
    if (tail.get<std::uint64_t>() != fnv1a(bytes.data(), body)) {
        throw FormatError("checkpoint checksum mismatch (file is corrupt)");
    }
    return {std::move(params), std::move(state)};
}

}  // namespace apexflow::net
