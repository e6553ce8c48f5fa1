#pragma once

#include <string>
#include <string_view>

#include "lesyn/grid.hpp"

namespace lesyn::png {

/// 8-bit grayscale PNG of values in [0,1]: byte = floor(clamp(v,0,1) * 255 + 0.5).
std::string encode_gray(const FloatGrid& unit_values);

/// Decodes any PNG to 8-bit grayscale, returned as raw bytes 0..255.
Grid<std::uint8_t> decode_gray(std::string_view bytes);

inline std::uint8_t to_byte(float v) noexcept {
    const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    return static_cast<std::uint8_t>(static_cast<int>(c * 255.0f + 0.5f));
}

}  // namespace lesyn::png
