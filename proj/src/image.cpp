#include "msrgan/image.hpp"

#include <algorithm>
#include <cmath>

namespace msrgan {

ImageF to_unit(const ImageU8& img) {
    ImageF out(img.height, img.width);
    for (size_t i = 0; i < img.pixels.size(); ++i) out.pixels[i] = real(img.pixels[i]) / real(255);
    return out;
}

ImageU8 to_u8(const ImageF& img) {
    ImageU8 out(img.height, img.width);
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        const real v = std::clamp(img.pixels[i], real(0), real(1));
        out.pixels[i] = uint8_t(std::lround(v * real(255)));
    }
    return out;
}

template <typename Img>
static Img flip_h(const Img& img) {
    Img out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(y, x) = img.at(y, img.width - 1 - x);
    return out;
}

ImageU8 flip_horizontal(const ImageU8& img) { return flip_h(img); }
ImageF flip_horizontal(const ImageF& img) { return flip_h(img); }

namespace {

// Catmull-Rom-style cubic, a = -0.5.
real cubic_kernel(real x) {
    constexpr real a = real(-0.5);
    x = std::abs(x);
    if (x <= 1) return ((a + 2) * x - (a + 3)) * x * x + 1;
    if (x < 2) return (((x - 5) * x + 8) * x - 4) * a;
    return 0;
}

// One 1-d bicubic pass: maps `src_n` samples to `dst_n` samples with edge
// clamping; used for rows then columns.
void bicubic_pass(const real* src, int src_n, int64_t src_stride, real* dst, int dst_n,
                  int64_t dst_stride) {
    const real scale = real(src_n) / real(dst_n);
    for (int d = 0; d < dst_n; ++d) {
        const real center = (real(d) + real(0.5)) * scale - real(0.5);
        const int base = int(std::floor(center)) - 1;
        real acc = 0, wsum = 0;
        for (int k = 0; k < 4; ++k) {
            const int idx = std::clamp(base + k, 0, src_n - 1);
            const real w = cubic_kernel(center - real(base + k));
            acc += w * src[int64_t(idx) * src_stride];
            wsum += w;
        }
        dst[int64_t(d) * dst_stride] = acc / wsum;
    }
}

ImageF resize_bicubic(const ImageF& img, int th, int tw) {
    // rows first, then columns
    ImageF tmp(img.height, tw);
    for (int y = 0; y < img.height; ++y)
        bicubic_pass(img.pixels.data() + size_t(y) * size_t(img.width), img.width, 1,
                     tmp.pixels.data() + size_t(y) * size_t(tw), tw, 1);
    ImageF out(th, tw);
    for (int x = 0; x < tw; ++x)
        bicubic_pass(tmp.pixels.data() + x, img.height, tw, out.pixels.data() + x, th, tw);
    return out;
}

// Coverage-weighted box average over the source span of each output pixel.
void area_pass(const real* src, int src_n, int64_t src_stride, real* dst, int dst_n,
               int64_t dst_stride) {
    const real scale = real(src_n) / real(dst_n);
    for (int d = 0; d < dst_n; ++d) {
        const real lo = real(d) * scale;
        const real hi = real(d + 1) * scale;
        const int i0 = int(std::floor(lo));
        const int i1 = std::min(int(std::ceil(hi)), src_n);
        real acc = 0, wsum = 0;
        for (int i = i0; i < i1; ++i) {
            const real cover = std::min(hi, real(i + 1)) - std::max(lo, real(i));
            if (cover <= 0) continue;
            acc += cover * src[int64_t(i) * src_stride];
            wsum += cover;
        }
        dst[int64_t(d) * dst_stride] = acc / wsum;
    }
}

ImageF resize_area(const ImageF& img, int th, int tw) {
    ImageF tmp(img.height, tw);
    for (int y = 0; y < img.height; ++y)
        area_pass(img.pixels.data() + size_t(y) * size_t(img.width), img.width, 1,
                  tmp.pixels.data() + size_t(y) * size_t(tw), tw, 1);
    ImageF out(th, tw);
    for (int x = 0; x < tw; ++x)
        area_pass(tmp.pixels.data() + x, img.height, tw, out.pixels.data() + x, th, tw);
    return out;
}

} // namespace

ImageF resize_image(const ImageF& img, int target_h, int target_w, ResizeMethod method) {
    if (target_h < 1 || target_w < 1) throw WrongShape("resize target must be at least 1x1");
    if (img.empty()) throw WrongShape("resize of empty image");
    if (target_h == img.height && target_w == img.width) return img;
    return method == ResizeMethod::bicubic ? resize_bicubic(img, target_h, target_w)
                                           : resize_area(img, target_h, target_w);
}

ImageU8 resize_image(const ImageU8& img, int target_h, int target_w, ResizeMethod method) {
    if (target_h == img.height && target_w == img.width) return img;
    return to_u8(resize_image(to_unit(img), target_h, target_w, method));
}

ImageF bicubic_upsample(const ImageF& img, int scale) {
    return resize_image(img, img.height * scale, img.width * scale, ResizeMethod::bicubic);
}

ImageF downsample2_area(const ImageF& img) {
    if (img.height % 2 != 0 || img.width % 2 != 0)
        throw WrongShape("downsample2_area expects even dimensions");
    ImageF out(img.height / 2, img.width / 2);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            out.at(y, x) = (img.at(2 * y, 2 * x) + img.at(2 * y, 2 * x + 1) + img.at(2 * y + 1, 2 * x) +
                            img.at(2 * y + 1, 2 * x + 1)) *
                           real(0.25);
        }
    return out;
}

real mean_pixel(const ImageF& img) {
    real acc = 0;
    for (real v : img.pixels) acc += v;
    return img.pixels.empty() ? real(0) : acc / real(img.pixels.size());
}

} // namespace msrgan
