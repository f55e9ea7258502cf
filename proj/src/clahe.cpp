#include "msrgan/clahe.hpp"

#include <algorithm>
#include <cmath>

namespace msrgan {

void clahe_tile_lut(const uint32_t hist[256], int tile_area, real clip_limit, uint8_t lut[256]) {
    int nonzero = 0, spike = 0;
    for (int v = 0; v < 256; ++v)
        if (hist[v] > 0) {
            ++nonzero;
            spike = v;
        }
    if (nonzero <= 1) {
        // Constant tile: identity mapping.
        (void)spike;
        for (int v = 0; v < 256; ++v) lut[v] = uint8_t(v);
        return;
    }

    uint64_t clipped[256];
    const uint64_t limit = std::max<uint64_t>(1, uint64_t(clip_limit * real(tile_area) / real(256)));
    uint64_t excess = 0;
    for (int v = 0; v < 256; ++v) {
        if (hist[v] > limit) {
            excess += hist[v] - limit;
            clipped[v] = limit;
        } else {
            clipped[v] = hist[v];
        }
    }
    const uint64_t per_bin = excess / 256;
    const uint64_t remainder = excess % 256;
    for (int v = 0; v < 256; ++v) clipped[v] += per_bin + (uint64_t(v) < remainder ? 1 : 0);

    uint64_t cdf = 0;
    for (int v = 0; v < 256; ++v) {
        cdf += clipped[v];
        const long mapped = std::lround(real(cdf) * real(255) / real(tile_area));
        lut[v] = uint8_t(std::clamp<long>(mapped, 0, 255));
    }
}

ImageU8 apply_clahe(const ImageU8& img, const ClaheParams& params) {
    if (img.empty()) return img;
    const int tx = std::max(1, params.tiles_x);
    const int ty = std::max(1, params.tiles_y);

    // Replicate-pad so the grid divides the image.
    const int ph = (img.height + ty - 1) / ty * ty;
    const int pw = (img.width + tx - 1) / tx * tx;
    ImageU8 padded(ph, pw);
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
            padded.at(y, x) = img.at(std::min(y, img.height - 1), std::min(x, img.width - 1));

    const int th = ph / ty, tw = pw / tx;
    const int tile_area = th * tw;

    std::vector<std::array<uint8_t, 256>> luts(size_t(tx) * size_t(ty));
    for (int tyi = 0; tyi < ty; ++tyi) {
        for (int txi = 0; txi < tx; ++txi) {
            uint32_t hist[256] = {};
            for (int y = tyi * th; y < (tyi + 1) * th; ++y)
                for (int x = txi * tw; x < (txi + 1) * tw; ++x) ++hist[padded.at(y, x)];
            clahe_tile_lut(hist, tile_area, params.clip_limit, luts[size_t(tyi) * tx + txi].data());
        }
    }

    ImageU8 out(img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        const real sy = (real(y) + real(0.5)) / real(th) - real(0.5);
        int ty0 = int(std::floor(sy));
        real fy = sy - real(ty0);
        if (ty0 < 0) { ty0 = 0; fy = 0; }
        int ty1 = ty0 + 1;
        if (ty1 > ty - 1) { ty1 = ty - 1; ty0 = ty - 1; fy = 0; }
        for (int x = 0; x < img.width; ++x) {
            const real sx = (real(x) + real(0.5)) / real(tw) - real(0.5);
            int tx0 = int(std::floor(sx));
            real fx = sx - real(tx0);
            if (tx0 < 0) { tx0 = 0; fx = 0; }
            int tx1 = tx0 + 1;
            if (tx1 > tx - 1) { tx1 = tx - 1; tx0 = tx - 1; fx = 0; }

            const uint8_t v = padded.at(y, x);
            const real tl = luts[size_t(ty0) * tx + tx0][v];
            const real tr = luts[size_t(ty0) * tx + tx1][v];
            const real bl = luts[size_t(ty1) * tx + tx0][v];
            const real br = luts[size_t(ty1) * tx + tx1][v];
            const real blended =
                (real(1) - fy) * ((real(1) - fx) * tl + fx * tr) + fy * ((real(1) - fx) * bl + fx * br);
            out.at(y, x) = uint8_t(std::clamp<long>(std::lround(blended), 0, 255));
        }
    }
    return out;
}

} // namespace msrgan
