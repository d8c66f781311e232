#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace tw {

struct ImageRGB8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;  // row-major RGB triplets

    static ImageRGB8 filled(int w, int h, uint8_t r, uint8_t g, uint8_t b) {
        ImageRGB8 img;
        img.width = w;
        img.height = h;
        img.data.resize(static_cast<size_t>(w) * h * 3);
        for (size_t i = 0; i < img.data.size(); i += 3) {
            img.data[i] = r;
            img.data[i + 1] = g;
            img.data[i + 2] = b;
        }
        return img;
    }

    const uint8_t* px(int u, int v) const {
        return data.data() + (static_cast<size_t>(v) * width + u) * 3;
    }
    uint8_t* px(int u, int v) { return data.data() + (static_cast<size_t>(v) * width + u) * 3; }

    void set(int u, int v, uint8_t r, uint8_t g, uint8_t b) {
        uint8_t* p = px(u, v);
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }

    bool operator==(const ImageRGB8&) const = default;
};

// Binary per-pixel mask, 0 or 1.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    static Mask filled(int w, int h, uint8_t value) {
        Mask m;
        m.width = w;
        m.height = h;
        m.data.assign(static_cast<size_t>(w) * h, value);
        return m;
    }

    uint8_t at(int u, int v) const { return data[static_cast<size_t>(v) * width + u]; }
    void set(int u, int v, uint8_t value) { data[static_cast<size_t>(v) * width + u] = value; }
    size_t count() const {
        size_t n = 0;
        for (uint8_t x : data) n += (x != 0);
        return n;
    }

    bool operator==(const Mask&) const = default;
};

// Bilinear sample with clamp-to-edge, one channel of an RGB image.
// Position (u, v) in pixel-center coordinates.
std::array<double, 3> bilinear_rgb(const ImageRGB8& img, double u, double v);

}  // namespace tw
