#pragma once

#include <cstdint>
#include <vector>

#include "msrgan/common.hpp"
#include "msrgan/rng.hpp"

namespace msrgan {

/// 8-bit grayscale image, row-major.
struct ImageU8 {
    int height = 0, width = 0;
    std::vector<uint8_t> pixels;

    ImageU8() = default;
    ImageU8(int h, int w, uint8_t fill = 0) : height(h), width(w), pixels(size_t(h) * size_t(w), fill) {}
    uint8_t& at(int y, int x) { return pixels[size_t(y) * size_t(width) + size_t(x)]; }
    uint8_t at(int y, int x) const { return pixels[size_t(y) * size_t(width) + size_t(x)]; }
    bool empty() const { return pixels.empty(); }
};

/// Unit-interval grayscale image (values in [0,1]), row-major.
struct ImageF {
    int height = 0, width = 0;
    std::vector<real> pixels;

    ImageF() = default;
    ImageF(int h, int w, real fill = 0) : height(h), width(w), pixels(size_t(h) * size_t(w), fill) {}
    real& at(int y, int x) { return pixels[size_t(y) * size_t(width) + size_t(x)]; }
    real at(int y, int x) const { return pixels[size_t(y) * size_t(width) + size_t(x)]; }
    bool empty() const { return pixels.empty(); }
    bool same_shape(const ImageF& o) const { return height == o.height && width == o.width; }
};

ImageF to_unit(const ImageU8& img);           // /255
ImageU8 to_u8(const ImageF& img);             // round(255*clamp01(v))

ImageU8 flip_horizontal(const ImageU8& img);
ImageF flip_horizontal(const ImageF& img);

enum class ResizeMethod { bicubic, area };

/// Separable resampling. Bicubic uses the a = -0.5 Catmull-Rom-style kernel
/// with the align-corners=false pixel-center convention; area computes
/// coverage-weighted box averages (exact block means for integer shrink
/// factors). Constants are preserved by both.
ImageF resize_image(const ImageF& img, int target_h, int target_w, ResizeMethod method);
ImageU8 resize_image(const ImageU8& img, int target_h, int target_w, ResizeMethod method);

/// Convenience: bicubic scale-up by a power-of-two factor.
ImageF bicubic_upsample(const ImageF& img, int scale);

/// Exact 2x box downsample (mean of each 2x2 block).
ImageF downsample2_area(const ImageF& img);

real mean_pixel(const ImageF& img);

} // namespace msrgan
