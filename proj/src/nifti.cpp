#include "lesyn/nifti.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <memory>

#include <zlib.h>

namespace lesyn::nifti {

namespace {

struct GzCloser {
    void operator()(gzFile_s* f) const noexcept { gzclose(f); }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

template <typename T>
T load(const unsigned char* p, bool swap) {
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), p, sizeof(T));
    if (swap) std::reverse(b.begin(), b.end());
    T v;
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
}

template <typename T>
void store(unsigned char* p, T v) {
    std::memcpy(p, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(p, p + sizeof(T));
}

}  // namespace

Volume read(const std::filesystem::path& path) {
    GzHandle f(gzopen(path.string().c_str(), "rb"));
    if (!f) throw IoError("cannot open NIfTI file " + path.string());
    std::array<unsigned char, 348> h{};
    if (gzread(f.get(), h.data(), 348) != 348) throw IoError("truncated NIfTI header");

    bool swap = false;
    if (load<std::int32_t>(h.data(), false) != 348) {
        if (load<std::int32_t>(h.data(), true) != 348) throw IoError("not a NIfTI-1 file");
        swap = true;
    }
    if (std::memcmp(h.data() + 344, "n+1", 3) != 0) throw IoError("only single-file NIfTI-1 (n+1) is supported");

    const int ndim = load<std::int16_t>(h.data() + 40, swap);
    if (ndim < 2 || ndim > 7) throw IoError("unsupported NIfTI dimensionality");
    Volume v;
    v.nx = load<std::int16_t>(h.data() + 42, swap);
    v.ny = load<std::int16_t>(h.data() + 44, swap);
    v.nz = ndim >= 3 ? load<std::int16_t>(h.data() + 46, swap) : 1;
    for (int d = 4; d <= ndim; ++d)
        if (load<std::int16_t>(h.data() + 40 + 2 * d, swap) > 1) throw IoError("multi-volume NIfTI not supported");
    const int datatype = load<std::int16_t>(h.data() + 70, swap);
    v.dx = std::abs(load<float>(h.data() + 80, swap));
    v.dy = std::abs(load<float>(h.data() + 84, swap));
    v.dz = std::abs(load<float>(h.data() + 88, swap));
    const auto vox_offset = static_cast<long>(load<float>(h.data() + 108, swap));
    float slope = load<float>(h.data() + 112, swap);
    const float inter = load<float>(h.data() + 116, swap);
    if (slope == 0.0f || !std::isfinite(slope)) slope = 1.0f;
    if (v.nx <= 0 || v.ny <= 0 || v.nz <= 0) throw IoError("NIfTI has empty dimensions");

    int bytes = 0;
    switch (datatype) {
        case 2: bytes = 1; break;    // uint8
        case 4: bytes = 2; break;    // int16
        case 512: bytes = 2; break;  // uint16
        case 8: bytes = 4; break;    // int32
        case 16: bytes = 4; break;   // float32
        case 64: bytes = 8; break;   // float64
        default: throw IoError("unsupported NIfTI datatype " + std::to_string(datatype));
    }
    if (gzseek(f.get(), vox_offset, SEEK_SET) != vox_offset) throw IoError("cannot seek to NIfTI payload");
    const std::size_t count = static_cast<std::size_t>(v.nx) * v.ny * v.nz;
    std::vector<unsigned char> raw(count * bytes);
    std::size_t done = 0;
    while (done < raw.size()) {
        const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(raw.size() - done, 1u << 30));
        const int got = gzread(f.get(), raw.data() + done, chunk);
        if (got <= 0) throw IoError("truncated NIfTI payload");
        done += static_cast<std::size_t>(got);
    }
    v.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned char* p = raw.data() + i * bytes;
        double x = 0;
        switch (datatype) {
            case 2: x = *p; break;
            case 4: x = load<std::int16_t>(p, swap); break;
            case 512: x = load<std::uint16_t>(p, swap); break;
            case 8: x = load<std::int32_t>(p, swap); break;
            case 16: x = load<float>(p, swap); break;
            case 64: x = load<double>(p, swap); break;
        }
        v.data[i] = static_cast<float>(x * slope + inter);
    }
    return v;
}

void write(const std::filesystem::path& path, const Volume& v) {
    if (v.data.size() != static_cast<std::size_t>(v.nx) * v.ny * v.nz) throw InvalidArgument("volume size mismatch");
    std::vector<unsigned char> buf(352 + v.data.size() * 4, 0);
    store<std::int32_t>(buf.data(), 348);
    const std::int16_t dims[8] = {3, static_cast<std::int16_t>(v.nx), static_cast<std::int16_t>(v.ny),
                                  static_cast<std::int16_t>(v.nz), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) store<std::int16_t>(buf.data() + 40 + 2 * i, dims[i]);
    store<std::int16_t>(buf.data() + 70, 16);
    store<std::int16_t>(buf.data() + 72, 32);
    const float pix[8] = {1, static_cast<float>(v.dx), static_cast<float>(v.dy), static_cast<float>(v.dz), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) store<float>(buf.data() + 76 + 4 * i, pix[i]);
    store<float>(buf.data() + 108, 352.0f);
    store<float>(buf.data() + 112, 1.0f);
    std::memcpy(buf.data() + 344, "n+1\0", 4);
    for (std::size_t i = 0; i < v.data.size(); ++i) store<float>(buf.data() + 352 + 4 * i, v.data[i]);

    const bool gz = path.extension() == ".gz";
    GzHandle f(gzopen(path.string().c_str(), gz ? "wb" : "wbT"));
    if (!f) throw IoError("cannot write " + path.string());
    if (gzwrite(f.get(), buf.data(), static_cast<unsigned>(buf.size())) != static_cast<int>(buf.size()))
        throw IoError("short write to " + path.string());
}

Slice axial_slice(const Volume& v, int z) {
    if (z < 0 || z >= v.nz) throw InvalidArgument("axial slice index out of range");
    Slice s;
    s.pixels = FloatGrid(v.ny, v.nx);
    for (int y = 0; y < v.ny; ++y)
        for (int x = 0; x < v.nx; ++x) s.pixels(y, x) = v.at(x, y, z);
    s.row_mm = v.dy;
    s.col_mm = v.dx;
    s.provenance = Provenance::real;
    return s;
}

std::vector<SliceSample> import_labeled_volume(const Volume& ct, const Volume& labels, const HuWindow& window) {
    if (ct.nx != labels.nx || ct.ny != labels.ny || ct.nz != labels.nz)
        throw InvalidArgument("CT and label volumes differ in shape");
    window.validate();
    std::vector<SliceSample> out;
    for (int z = 0; z < ct.nz; ++z) {
        SliceSample s;
        s.slice = axial_slice(ct, z);
        s.window = window;
        s.liver = Mask(ct.ny, ct.nx);
        Mask lesion(ct.ny, ct.nx);
        for (int y = 0; y < ct.ny; ++y)
            for (int x = 0; x < ct.nx; ++x) {
                const float l = labels.at(x, y, z);
                s.liver(y, x) = l >= 0.5f ? 1 : 0;
                lesion(y, x) = l >= 1.5f ? 1 : 0;
            }
        if (!s.liver.any()) continue;
        s.lesions = connected_components(lesion);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace lesyn::nifti
