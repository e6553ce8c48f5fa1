#include "lesyn/lsf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace lesyn::lsf {

namespace {

constexpr char kMagic[4] = {'L', 'S', 'F', '1'};

void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace

std::string encode(std::span<const std::int64_t> shape, std::span<const float> data) {
    std::int64_t count = 1;
    std::string header = "{\"dtype\":\"f32\",\"shape\":[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] < 0) throw InvalidArgument("lsf: negative dimension");
        count *= shape[i];
        if (i) header += ',';
        header += std::to_string(shape[i]);
    }
    header += "]}";
    if (count != static_cast<std::int64_t>(data.size())) throw InvalidArgument("lsf: shape does not match data size");

    std::string out(kMagic, 4);
    put_u32_le(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    out.reserve(out.size() + data.size() * 4);
    for (float f : data) put_u32_le(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

Array decode(std::string_view bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("lsf: bad magic");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t hlen = get_u32_le(p + 4);
    if (bytes.size() < 8 + static_cast<std::size_t>(hlen)) throw IoError("lsf: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(8, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("lsf: malformed header: ") + e.what());
    }
    if (header.value("dtype", "") != "f32" || !header.contains("shape")) throw IoError("lsf: unsupported header");
    Array a;
    std::int64_t count = 1;
    for (const auto& d : header["shape"]) {
        const auto v = d.get<std::int64_t>();
        if (v < 0) throw IoError("lsf: negative dimension");
        a.shape.push_back(v);
        count *= v;
    }
    const std::size_t offset = 8 + hlen;
    if (bytes.size() != offset + static_cast<std::size_t>(count) * 4) throw IoError("lsf: payload size mismatch");
    a.data.resize(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = std::bit_cast<float>(get_u32_le(p + offset + 4 * i));
    return a;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

void write(const std::filesystem::path& path, std::span<const std::int64_t> shape, std::span<const float> data) {
    write_file(path, encode(shape, data));
}

Array read(const std::filesystem::path& path) { return decode(read_file(path)); }

std::string encode_grid(const FloatGrid& g) {
    const std::int64_t shape[2] = {g.rows(), g.cols()};
    return encode(shape, g.values());
}

FloatGrid decode_grid(std::string_view bytes) {
    Array a = decode(bytes);
    if (a.shape.size() != 2) throw IoError("lsf: expected a 2D array");
    return FloatGrid(static_cast<int>(a.shape[0]), static_cast<int>(a.shape[1]), std::move(a.data));
}

void write_grid(const std::filesystem::path& path, const FloatGrid& g) { write_file(path, encode_grid(g)); }

FloatGrid read_grid(const std::filesystem::path& path) { return decode_grid(read_file(path)); }

void write_mask(const std::filesystem::path& path, const Mask& m) { write_grid(path, m.to_float()); }

Mask read_mask(const std::filesystem::path& path) {
    const FloatGrid g = read_grid(path);
    Mask m(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const float v = g.storage()[i];
        if (v != 0.0f && v != 1.0f) throw IoError("mask file " + path.string() + " is not binary");
        m.storage()[i] = v == 1.0f ? 1 : 0;
    }
    return m;
}

template <typename T>
void write_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
    const std::int64_t shape[4] = {t.n, t.c, t.h, t.w};
    std::vector<float> data(t.data.begin(), t.data.end());
    write(path, shape, data);
}

template <typename T>
Tensor<T> read_tensor(const std::filesystem::path& path, std::array<int, 4> expected) {
    Array a = read(path);
    if (a.shape.size() != 4 || a.shape[0] != expected[0] || a.shape[1] != expected[1] || a.shape[2] != expected[2] ||
        a.shape[3] != expected[3])
        throw IoError(path.string() + ": stored shape does not match expected " + shape_string(expected));
    Tensor<T> t(expected);
    for (std::size_t i = 0; i < a.data.size(); ++i) t.data[i] = static_cast<T>(a.data[i]);
    return t;
}

template void write_tensor(const std::filesystem::path&, const Tensor<float>&);
template void write_tensor(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> read_tensor(const std::filesystem::path&, std::array<int, 4>);
template Tensor<double> read_tensor(const std::filesystem::path&, std::array<int, 4>);

}  // namespace lesyn::lsf
