#include "lesyn/png.hpp"

#include <cstring>
#include <vector>

#include <png.h>

namespace lesyn::png {

std::string encode_gray(const FloatGrid& g) {
    if (g.empty()) throw InvalidArgument("png: empty image");
    std::vector<std::uint8_t> pixels(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) pixels[i] = to_byte(g.storage()[i]);

    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(g.cols());
    image.height = static_cast<png_uint_32>(g.rows());
    image.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr))
        throw IoError(std::string("png: ") + image.message);
    std::string out(size, '\0');
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr))
        throw IoError(std::string("png: ") + image.message);
    out.resize(size);
    return out;
}

Grid<std::uint8_t> decode_gray(std::string_view bytes) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw InvalidArgument(std::string("png: ") + image.message);
    image.format = PNG_FORMAT_GRAY;
    Grid<std::uint8_t> out(static_cast<int>(image.height), static_cast<int>(image.width));
    if (!png_image_finish_read(&image, nullptr, out.storage().data(), 0, nullptr)) {
        png_image_free(&image);
        throw InvalidArgument(std::string("png: ") + image.message);
    }
    return out;
}

}  // namespace lesyn::png
