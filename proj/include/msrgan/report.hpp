#pragma once

#include <string>
#include <vector>

#include "msrgan/image.hpp"

namespace msrgan {

/// Two-series histogram (model vs. baseline) rendered into an 8-bit PNG-able
/// image: model bars solid dark, baseline bars light, shared binning, tiny
/// bitmap-font labels.
ImageU8 render_histogram(const std::vector<real>& model_values,
                         const std::vector<real>& baseline_values, const std::string& title);

/// Horizontal montage with labels underneath, all tiles resized to
/// `tile_side` (the Fig-13-style inspection panel).
ImageU8 render_panel(const std::vector<std::pair<std::string, ImageF>>& tiles, int tile_side = 224);

/// 5x7 bitmap text, scale >= 1. Coordinates clamp at the image border.
void draw_text(ImageU8& canvas, int x, int y, const std::string& text, uint8_t shade, int scale = 1);

} // namespace msrgan
