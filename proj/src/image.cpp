#include "tw/image.hpp"

#include <algorithm>
#include <cmath>

namespace tw {

std::array<double, 3> bilinear_rgb(const ImageRGB8& img, double u, double v) {
    u = std::clamp(u, 0.0, static_cast<double>(img.width - 1));
    v = std::clamp(v, 0.0, static_cast<double>(img.height - 1));
    const int u0 = static_cast<int>(std::floor(u));
    const int v0 = static_cast<int>(std::floor(v));
    const int u1 = std::min(u0 + 1, img.width - 1);
    const int v1 = std::min(v0 + 1, img.height - 1);
    const double fu = u - u0;
    const double fv = v - v0;

    const uint8_t* p00 = img.px(u0, v0);
    const uint8_t* p10 = img.px(u1, v0);
    const uint8_t* p01 = img.px(u0, v1);
    const uint8_t* p11 = img.px(u1, v1);

    std::array<double, 3> out{};
    for (int c = 0; c < 3; ++c) {
        const double top = p00[c] * (1.0 - fu) + p10[c] * fu;
        const double bot = p01[c] * (1.0 - fu) + p11[c] * fu;
        out[c] = top * (1.0 - fv) + bot * fv;
    }
    return out;
}

}  // namespace tw
