#pragma once

#include "msrgan/image.hpp"

namespace msrgan {

struct ClaheParams {
    real clip_limit = 2.0;  // multiple of the uniform histogram level
    int tiles_x = 8;
    int tiles_y = 8;
};

/// Contrast-limited adaptive histogram equalization.
///
/// Definition (kept bit-exact so an independent per-pixel oracle can match):
///  - the image is replicate-padded on the bottom/right until the tile grid
///    divides it, then cropped back at the end;
///  - per tile, a 256-bin histogram is clipped at
///    max(1, floor(clip_limit * tile_area / 256)); the excess is spread
///    uniformly, remainder going one count each to the lowest bins;
///  - tile mapping: lut[v] = round(cdf[v] * 255 / tile_area);
///  - a tile whose histogram is a single spike maps identically (a constant
///    region has nothing to equalize and must survive unchanged);
///  - each pixel blends the four nearest tile mappings bilinearly by
///    distance to tile centers, clamped at the borders, and rounds once.
ImageU8 apply_clahe(const ImageU8& img, const ClaheParams& params = {});

/// The clipped-histogram mapping for one tile; exposed so tests can probe
/// tiles directly.
void clahe_tile_lut(const uint32_t hist[256], int tile_area, real clip_limit, uint8_t lut[256]);

} // namespace msrgan
