#include "msrgan/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace msrgan {

namespace {

// 5x7 glyphs, column-major bits (bit 0 = top row). Covers what reports need.
struct Glyph {
    char ch;
    uint8_t cols[5];
};

constexpr Glyph kFont[] = {
    {'0', {0x3E, 0x51, 0x49, 0x45, 0x3E}}, {'1', {0x00, 0x42, 0x7F, 0x40, 0x00}},
    {'2', {0x42, 0x61, 0x51, 0x49, 0x46}}, {'3', {0x21, 0x41, 0x45, 0x4B, 0x31}},
    {'4', {0x18, 0x14, 0x12, 0x7F, 0x10}}, {'5', {0x27, 0x45, 0x45, 0x45, 0x39}},
    {'6', {0x3C, 0x4A, 0x49, 0x49, 0x30}}, {'7', {0x01, 0x71, 0x09, 0x05, 0x03}},
    {'8', {0x36, 0x49, 0x49, 0x49, 0x36}}, {'9', {0x06, 0x49, 0x49, 0x29, 0x1E}},
    {'.', {0x00, 0x60, 0x60, 0x00, 0x00}}, {'-', {0x08, 0x08, 0x08, 0x08, 0x08}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00}}, {'A', {0x7E, 0x11, 0x11, 0x11, 0x7E}},
    {'B', {0x7F, 0x49, 0x49, 0x49, 0x36}}, {'C', {0x3E, 0x41, 0x41, 0x41, 0x22}},
    {'D', {0x7F, 0x41, 0x41, 0x22, 0x1C}}, {'E', {0x7F, 0x49, 0x49, 0x49, 0x41}},
    {'G', {0x3E, 0x41, 0x49, 0x49, 0x7A}}, {'H', {0x7F, 0x08, 0x08, 0x08, 0x7F}},
    {'I', {0x00, 0x41, 0x7F, 0x41, 0x00}}, {'L', {0x7F, 0x40, 0x40, 0x40, 0x40}},
    {'M', {0x7F, 0x02, 0x0C, 0x02, 0x7F}}, {'N', {0x7F, 0x04, 0x08, 0x10, 0x7F}},
    {'O', {0x3E, 0x41, 0x41, 0x41, 0x3E}}, {'P', {0x7F, 0x09, 0x09, 0x09, 0x06}},
    {'R', {0x7F, 0x09, 0x19, 0x29, 0x46}}, {'S', {0x46, 0x49, 0x49, 0x49, 0x31}},
    {'T', {0x01, 0x01, 0x7F, 0x01, 0x01}}, {'U', {0x3F, 0x40, 0x40, 0x40, 0x3F}},
    {'V', {0x1F, 0x20, 0x40, 0x20, 0x1F}}, {'X', {0x63, 0x14, 0x08, 0x14, 0x63}},
};

const uint8_t* glyph_for(char c) {
    const char up = char(std::toupper(static_cast<unsigned char>(c)));
    for (const auto& g : kFont)
        if (g.ch == up) return g.cols;
    return kFont[12].cols;  // space
}

} // namespace

void draw_text(ImageU8& canvas, int x, int y, const std::string& text, uint8_t shade, int scale) {
    int cx = x;
    for (char c : text) {
        const uint8_t* cols = glyph_for(c);
        for (int col = 0; col < 5; ++col)
            for (int row = 0; row < 7; ++row) {
                if (!(cols[col] >> row & 1)) continue;
                for (int sy = 0; sy < scale; ++sy)
                    for (int sx = 0; sx < scale; ++sx) {
                        const int py = y + row * scale + sy;
                        const int px = cx + col * scale + sx;
                        if (py >= 0 && py < canvas.height && px >= 0 && px < canvas.width)
                            canvas.at(py, px) = shade;
                    }
            }
        cx += 6 * scale;
    }
}

ImageU8 render_histogram(const std::vector<real>& model_values,
                         const std::vector<real>& baseline_values, const std::string& title) {
    const int width = 640, height = 360;
    const int margin_l = 40, margin_b = 30, margin_t = 24, margin_r = 10;
    ImageU8 canvas(height, width, 255);

    std::vector<real> all = model_values;
    all.insert(all.end(), baseline_values.begin(), baseline_values.end());
    if (all.empty()) return canvas;
    real lo = *std::min_element(all.begin(), all.end());
    real hi = *std::max_element(all.begin(), all.end());
    if (hi - lo < 1e-9) {
        lo -= 0.5;
        hi += 0.5;
    }

    const int bins = 24;
    std::vector<int> hist_m(bins, 0), hist_b(bins, 0);
    auto bin_of = [&](real v) {
        return std::clamp(int((v - lo) / (hi - lo) * bins), 0, bins - 1);
    };
    for (real v : model_values) ++hist_m[size_t(bin_of(v))];
    for (real v : baseline_values) ++hist_b[size_t(bin_of(v))];
    const int peak =
        std::max(1, std::max(*std::max_element(hist_m.begin(), hist_m.end()),
                             *std::max_element(hist_b.begin(), hist_b.end())));

    const int plot_w = width - margin_l - margin_r;
    const int plot_h = height - margin_t - margin_b;
    const int slot = plot_w / bins;

    for (int b = 0; b < bins; ++b) {
        const int x0 = margin_l + b * slot;
        // Baseline behind (light), model in front (dark), half-slot offsets.
        const int hb = hist_b[size_t(b)] * plot_h / peak;
        for (int y = 0; y < hb; ++y)
            for (int x = x0 + 1; x < x0 + slot - 1; ++x)
                canvas.at(height - margin_b - 1 - y, x) = 190;
        const int hm = hist_m[size_t(b)] * plot_h / peak;
        for (int y = 0; y < hm; ++y)
            for (int x = x0 + 1 + slot / 3; x < x0 + slot - 1; ++x)
                canvas.at(height - margin_b - 1 - y, x) = 60;
    }

    // Axes
    for (int x = margin_l; x < width - margin_r; ++x) canvas.at(height - margin_b, x) = 0;
    for (int y = margin_t; y <= height - margin_b; ++y) canvas.at(y, margin_l) = 0;

    draw_text(canvas, margin_l, 8, title, 0, 1);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", double(lo));
    draw_text(canvas, margin_l, height - margin_b + 6, buf, 0, 1);
    std::snprintf(buf, sizeof(buf), "%.2f", double(hi));
    draw_text(canvas, width - margin_r - 40, height - margin_b + 6, buf, 0, 1);
    draw_text(canvas, width - 220, 8, "DARK MODEL LIGHT BASE", 0, 1);
    return canvas;
}

ImageU8 render_panel(const std::vector<std::pair<std::string, ImageF>>& tiles, int tile_side) {
    if (tiles.empty()) return ImageU8(1, 1);
    const int pad = 8, label_h = 14;
    const int width = pad + int(tiles.size()) * (tile_side + pad);
    const int height = pad + tile_side + label_h + pad;
    ImageU8 canvas(height, width, 255);

    for (size_t i = 0; i < tiles.size(); ++i) {
        const ImageU8 tile =
            to_u8(resize_image(tiles[i].second, tile_side, tile_side, ResizeMethod::bicubic));
        const int x0 = pad + int(i) * (tile_side + pad);
        for (int y = 0; y < tile_side; ++y)
            for (int x = 0; x < tile_side; ++x) canvas.at(pad + y, x0 + x) = tile.at(y, x);
        draw_text(canvas, x0, pad + tile_side + 4, tiles[i].first, 0, 1);
    }
    return canvas;
}

} // namespace msrgan
