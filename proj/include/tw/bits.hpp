#pragma once

#include "tw/image.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tw {

// Masks travel as packed bit planes: row-major pixels, LSB-first within each
// byte, every row padded up to a whole byte so rows stay independently
// addressable.

inline size_t packed_row_bytes(int width) { return (static_cast<size_t>(width) + 7) / 8; }

inline std::vector<uint8_t> pack_mask_bits(const Mask& mask) {
    const size_t stride = packed_row_bytes(mask.width);
    std::vector<uint8_t> out(stride * mask.height, 0);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask.at(x, y)) out[y * stride + x / 8] |= static_cast<uint8_t>(1u << (x % 8));
        }
    }
    return out;
}

inline Mask unpack_mask_bits(const std::vector<uint8_t>& bytes, int width, int height) {
    const size_t stride = packed_row_bytes(width);
    if (bytes.size() != stride * static_cast<size_t>(height)) {
        throw std::invalid_argument("packed mask has " + std::to_string(bytes.size()) +
                                    " bytes, expected " + std::to_string(stride * height));
    }
    Mask mask = Mask::filled(width, height, 0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const uint8_t byte = bytes[y * stride + x / 8];
            mask.set(x, y, (byte >> (x % 8)) & 1u);
        }
    }
    return mask;
}

}  // namespace tw
