#include "hoi/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace hoi {

namespace {

constexpr char kMagic[4] = {'H', 'O', 'I', 'T'};

template <typename T>
constexpr std::uint8_t dtype_code() {
    return std::is_same_v<T, float> ? 0 : 1;
}

void put_u32_le(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

std::uint32_t get_u32_le(std::istream& in, const std::string& origin) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError(origin + ": truncated header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <typename T>
void put_scalar_le(std::ostream& out, T v) {
    using Bits = std::conditional_t<std::is_same_v<T, float>, std::uint32_t, std::uint64_t>;
    Bits bits;
    std::memcpy(&bits, &v, sizeof(T));
    char b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(b, sizeof(T));
}

template <typename T>
T get_scalar_le(const unsigned char* b) {
    using Bits = std::conditional_t<std::is_same_v<T, float>, std::uint32_t, std::uint64_t>;
    Bits bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<Bits>(b[i]) << (8 * i);
    T v;
    std::memcpy(&v, &bits, sizeof(T));
    return v;
}

}  // namespace

template <typename T>
void save_tensor(std::ostream& out, const Tensor<T>& t) {
    if (t.empty()) throw ValidationError("save_tensor: cannot serialize an empty tensor");
    if (t.rank() > 255) throw ValidationError("save_tensor: rank exceeds format limit");
    out.write(kMagic, 4);
    const std::uint8_t header[3] = {kTensorFormatVersion, dtype_code<T>(), static_cast<std::uint8_t>(t.rank())};
    out.write(reinterpret_cast<const char*>(header), 3);
    for (int d : t.dims()) put_u32_le(out, static_cast<std::uint32_t>(d));
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(t.data()), t.size() * static_cast<std::int64_t>(sizeof(T)));
    } else {
        for (std::int64_t i = 0; i < t.size(); ++i) put_scalar_le(out, t[i]);
    }
    if (!out) throw IoError("save_tensor: write failed");
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_tensor: cannot open " + path.string() + " for writing");
    save_tensor(f, t);
    f.close();
    if (!f) throw IoError("save_tensor: write failed for " + path.string());
}

namespace {

struct Header {
    std::uint8_t version, dtype, rank;
};

Header read_header(std::istream& in, const std::string& origin) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError(origin + ": bad magic, not a HOIT tensor file");
    }
    std::uint8_t h[3];
    in.read(reinterpret_cast<char*>(h), 3);
    if (!in) throw IoError(origin + ": truncated header");
    if (h[0] != kTensorFormatVersion) {
        throw IoError(origin + ": unsupported HOIT version " + std::to_string(h[0]));
    }
    if (h[1] > 1) throw IoError(origin + ": unknown dtype code " + std::to_string(h[1]));
    if (h[2] < 1) throw IoError(origin + ": rank must be >= 1");
    return {h[0], h[1], h[2]};
}

}  // namespace

template <typename T>
Tensor<T> load_tensor(std::istream& in, const std::string& origin) {
    const Header h = read_header(in, origin);
    if (h.dtype != dtype_code<T>()) {
        throw IoError(origin + ": dtype mismatch, file holds " + (h.dtype == 0 ? "f32" : "f64") +
                      " but caller expects " + (dtype_code<T>() == 0 ? "f32" : "f64"));
    }
    std::vector<int> dims(h.rank);
    std::int64_t n = 1;
    for (auto& d : dims) {
        const std::uint32_t e = get_u32_le(in, origin);
        if (e == 0) throw IoError(origin + ": zero extent");
        d = static_cast<int>(e);
        n *= d;
    }
    std::vector<unsigned char> payload(static_cast<std::size_t>(n) * sizeof(T));
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (static_cast<std::size_t>(in.gcount()) != payload.size()) {
        throw IoError(origin + ": truncated payload, expected " + std::to_string(n) + " scalars");
    }
    std::vector<T> data(static_cast<std::size_t>(n));
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(data.data(), payload.data(), payload.size());
    } else {
        for (std::int64_t i = 0; i < n; ++i) {
            data[static_cast<std::size_t>(i)] = get_scalar_le<T>(payload.data() + i * sizeof(T));
        }
    }
    return Tensor<T>(std::move(dims), std::move(data));
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_tensor: cannot open " + path.string());
    return load_tensor<T>(f, path.string());
}

int peek_tensor_dtype(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("peek_tensor_dtype: cannot open " + path.string());
    return read_header(f, path.string()).dtype;
}

template void save_tensor<float>(std::ostream&, const Tensor<float>&);
template void save_tensor<double>(std::ostream&, const Tensor<double>&);
template void save_tensor<float>(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor<double>(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tensor<float>(std::istream&, const std::string&);
template Tensor<double> load_tensor<double>(std::istream&, const std::string&);
template Tensor<float> load_tensor<float>(const std::filesystem::path&);
template Tensor<double> load_tensor<double>(const std::filesystem::path&);

}  // namespace hoi
