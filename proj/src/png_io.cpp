#include "tw/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace tw {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void fail(const std::filesystem::path& path, const char* what) {
    throw std::runtime_error(path.string() + ": " + what);
}

void write_png(const std::filesystem::path& path, int width, int height, int color_type,
               const uint8_t* data, size_t row_bytes) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) fail(path, "cannot open for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail(path, "png allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "png write failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[y] = const_cast<png_bytep>(data + static_cast<size_t>(y) * row_bytes);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void read_png(const std::filesystem::path& path, int expect_channels, int& width, int& height,
              std::vector<uint8_t>& data) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) fail(path, "cannot open");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "png allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "png read failed");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));

    // Normalize whatever is on disk down to 8-bit gray or RGB.
    png_set_strip_16(png);
    png_set_packing(png);
    const png_byte color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (expect_channels == 3 && (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA))
        png_set_gray_to_rgb(png);
    if (expect_channels == 1 &&
        (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
         color == PNG_COLOR_TYPE_PALETTE))
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    png_read_update_info(png, info);

    const size_t row_bytes = png_get_rowbytes(png, info);
    if (row_bytes != static_cast<size_t>(width) * expect_channels) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "unexpected channel layout");
    }
    data.resize(row_bytes * static_cast<size_t>(height));
    std::vector<png_bytep> rows(static_cast<size_t>(height));
    for (int y = 0; y < height; ++y) rows[y] = data.data() + static_cast<size_t>(y) * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
}

}  // namespace

void save_png_rgb(const std::filesystem::path& path, const ImageRGB8& image) {
    write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, image.data.data(),
              static_cast<size_t>(image.width) * 3);
}

ImageRGB8 load_png_rgb(const std::filesystem::path& path) {
    ImageRGB8 image;
    read_png(path, 3, image.width, image.height, image.data);
    return image;
}

void save_png_mask(const std::filesystem::path& path, const Mask& mask) {
    std::vector<uint8_t> gray(mask.data.size());
    for (size_t i = 0; i < mask.data.size(); ++i) gray[i] = mask.data[i] ? 255 : 0;
    write_png(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, gray.data(),
              static_cast<size_t>(mask.width));
}

Mask load_png_mask(const std::filesystem::path& path) {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> gray;
    read_png(path, 1, width, height, gray);
    Mask mask = Mask::filled(width, height, 0);
    for (size_t i = 0; i < gray.size(); ++i) mask.data[i] = gray[i] >= 128 ? 1 : 0;
    return mask;
}

}  // namespace tw
