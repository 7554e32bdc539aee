// Static grayscale bar chart of the six aggregate metrics.
//
// Each metric is drawn against its own full-scale reference (PSNR/100,
// MI/8, entropy/8, the [0,1] metrics as-is) with the actual value printed
// above the bar.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "fusenet/image.hpp"
#include "fusenet/metrics.hpp"

namespace fusenet::plot {

namespace detail {

// 5x7 bitmap glyphs, one byte per row, low 5 bits used.
struct Glyph {
    char ch;
    unsigned char rows[7];
};

inline const Glyph* find_glyph(char c) {
    static const Glyph table[] = {
        {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
        {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
        {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
        {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
        {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
        {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
        {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
        {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
        {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
        {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
        {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
        {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
        {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
        {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
        {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
        {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
        {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
        {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
        {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
        {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    };
    for (const auto& g : table) {
        if (g.ch == c) return &g;
    }
    return nullptr;
}

inline void draw_text(Image& img, std::size_t y, std::size_t x, const std::string& text, float shade) {
    for (std::size_t k = 0; k < text.size(); ++k) {
        const Glyph* g = find_glyph(text[k]);
        if (!g) continue;
        for (std::size_t r = 0; r < 7; ++r) {
            for (std::size_t c = 0; c < 5; ++c) {
                if ((g->rows[r] >> (4 - c)) & 1) {
                    const std::size_t yy = y + r, xx = x + k * 6 + c;
                    if (yy < img.height && xx < img.width) img.at(yy, xx) = shade;
                }
            }
        }
    }
}

inline void fill_rect(Image& img, std::size_t y0, std::size_t x0, std::size_t y1, std::size_t x1, float shade) {
    for (std::size_t y = y0; y < std::min(y1, img.height); ++y)
        for (std::size_t x = x0; x < std::min(x1, img.width); ++x) img.at(y, x) = shade;
}

}  // namespace detail

/// Renders the aggregate row of a batch evaluation as a PNG bar chart.
inline void save_metric_bars(const MetricReport& mean, const std::string& path) {
    const std::size_t width = 560, height = 360;
    Image img;
    img.height = height;
    img.width = width;
    img.pixels.assign(width * height, 1.0f);

    struct Bar {
        const char* label;
        double value;
        double full_scale;
    };
    const Bar bars[6] = {
        {"PSNR", mean.psnr, 100.0}, {"SSIM", mean.ssim, 1.0},    {"FSIM", mean.fsim, 1.0},
        {"MI", mean.mi, 8.0},       {"FMI", mean.fmi_pixel, 1.0}, {"EN", mean.entropy, 8.0},
    };

    const std::size_t base_y = height - 40;
    const std::size_t top_y = 40;
    const std::size_t slot = (width - 60) / 6;
    detail::fill_rect(img, base_y, 30, base_y + 2, width - 20, 0.0f);  // axis

    for (std::size_t i = 0; i < 6; ++i) {
        const double frac = std::clamp(bars[i].value / bars[i].full_scale, 0.0, 1.0);
        const std::size_t bar_h = static_cast<std::size_t>(std::lround(frac * (base_y - top_y)));
        const std::size_t x0 = 40 + i * slot;
        const std::size_t x1 = x0 + slot - 24;
        detail::fill_rect(img, base_y - bar_h, x0, base_y, x1, 0.35f);

        char value_text[32];
        std::snprintf(value_text, sizeof(value_text), "%.3f", bars[i].value);
        detail::draw_text(img, base_y - bar_h < top_y + 10 ? top_y : base_y - bar_h - 10, x0, value_text, 0.0f);
        detail::draw_text(img, base_y + 8, x0, bars[i].label, 0.0f);
    }
    save_png(img, path);
}

}  // namespace fusenet::plot
