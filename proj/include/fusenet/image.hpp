// Single-channel images in [0,1] and 8-bit grayscale PNG I/O.
#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <csetjmp>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fusenet/common.hpp"
#include "fusenet/tensor.hpp"

namespace fusenet {

struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> pixels;  // row-major, values in [0,1]
    std::string source_id;

    float& at(std::size_t h, std::size_t w) { return pixels[h * width + w]; }
    float at(std::size_t h, std::size_t w) const { return pixels[h * width + w]; }
    std::size_t numel() const { return pixels.size(); }

    void validate() const {
        if (pixels.size() != height * width || height == 0 || width == 0) {
            throw ValidationError("image '" + source_id + "': pixel buffer does not match " +
                                  std::to_string(height) + "x" + std::to_string(width));
        }
        for (float p : pixels) {
            if (!(p >= 0.0f && p <= 1.0f)) {
                throw ValidationError("image '" + source_id + "': pixel value " + std::to_string(p) +
                                      " outside [0,1]");
            }
        }
    }
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline int png_channel_count(int color_type) {
    switch (color_type) {
        case PNG_COLOR_TYPE_GRAY: return 1;
        case PNG_COLOR_TYPE_GRAY_ALPHA: return 2;
        case PNG_COLOR_TYPE_RGB: return 3;
        case PNG_COLOR_TYPE_RGB_ALPHA: return 4;
        case PNG_COLOR_TYPE_PALETTE: return 3;  // expands to RGB
        default: return 0;
    }
}

}  // namespace detail

/// Decodes an 8-bit single-channel grayscale PNG and normalizes bytes to
/// [0,1] by dividing by 255. Any other layout is rejected.
inline Image load_png(const std::string& path) {
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open '" + path + "' for reading");

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        throw IoError("'" + path + "' is not a PNG file");
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialization failed");
    }

    std::vector<png_byte> raw;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0, height = 0;
    int bit_depth = 0, color_type = 0;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed to decode '" + path + "'");
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);

    if (color_type != PNG_COLOR_TYPE_GRAY || bit_depth != 8) {
        const int channels = detail::png_channel_count(color_type);
        png_destroy_read_struct(&png, &info, nullptr);
        if (color_type != PNG_COLOR_TYPE_GRAY) {
            throw ValidationError("'" + path + "' has " + std::to_string(channels) +
                                  " channels; expected single-channel 8-bit grayscale");
        }
        throw ValidationError("'" + path + "' has bit depth " + std::to_string(bit_depth) +
                              "; expected single-channel 8-bit grayscale");
    }

    raw.resize(static_cast<std::size_t>(width) * height);
    rows.resize(height);
    for (png_uint_32 r = 0; r < height; ++r) rows[r] = raw.data() + static_cast<std::size_t>(r) * width;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img;
    img.height = height;
    img.width = width;
    img.source_id = path;
    img.pixels.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = static_cast<float>(raw[i]) / 255.0f;
    return img;
}

/// Writes an 8-bit grayscale PNG; pixels map by round(p * 255), clamped.
inline void save_png(const Image& img, const std::string& path) {
    img.validate();
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open '" + path + "' for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialization failed");
    }

    std::vector<png_byte> raw(img.numel());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const long q = std::lround(static_cast<double>(img.pixels[i]) * 255.0);
        raw[i] = static_cast<png_byte>(std::min(255L, std::max(0L, q)));
    }
    std::vector<png_bytep> rows(img.height);
    for (std::size_t r = 0; r < img.height; ++r) rows[r] = raw.data() + r * img.width;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to encode '" + path + "'");
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Loads a co-registered pair; both files must decode to equal dimensions.
inline std::pair<Image, Image> load_pair(const std::string& path_a, const std::string& path_b) {
    Image a = load_png(path_a);
    Image b = load_png(path_b);
    if (a.height != b.height || a.width != b.width) {
        throw ValidationError("pair dimension mismatch: '" + path_a + "' is " + std::to_string(a.height) + "x" +
                              std::to_string(a.width) + " but '" + path_b + "' is " + std::to_string(b.height) +
                              "x" + std::to_string(b.width));
    }
    return {std::move(a), std::move(b)};
}

template <class S>
Tensor<S> image_to_tensor(const Image& img) {
    Tensor<S> t({1, img.height, img.width});
    for (std::size_t i = 0; i < img.numel(); ++i) t[i] = static_cast<S>(img.pixels[i]);
    return t;
}

/// 1xHxW tensor to image; values are clamped into [0,1].
template <class S>
Image tensor_to_image(const Tensor<S>& t, std::string source_id = {}) {
    if (t.ndim() != 3 || t.size(0) != 1) {
        throw ShapeError("tensor_to_image needs 1xHxW, got " + shape_str(t.shape()));
    }
    Image img;
    img.height = t.size(1);
    img.width = t.size(2);
    img.source_id = std::move(source_id);
    img.pixels.resize(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) {
        img.pixels[i] = std::min(1.0f, std::max(0.0f, static_cast<float>(t[i])));
    }
    return img;
}

inline Image center_crop(const Image& img, std::size_t size) {
    if (size == 0 || size > img.height || size > img.width) {
        throw ValidationError("center_crop size " + std::to_string(size) + " exceeds image " +
                              std::to_string(img.height) + "x" + std::to_string(img.width));
    }
    const std::size_t y0 = (img.height - size) / 2;
    const std::size_t x0 = (img.width - size) / 2;
    Image out;
    out.height = size;
    out.width = size;
    out.source_id = img.source_id;
    out.pixels.resize(size * size);
    for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) out.at(i, j) = img.at(y0 + i, x0 + j);
    return out;
}

}  // namespace fusenet
