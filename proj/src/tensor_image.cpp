#include "msrgan/tensor_image.hpp"

#include <algorithm>

#include "msrgan/common.hpp"

namespace msrgan {

Tensor tensor_from_image(const ImageF& img) {
    Tensor t({1, 1, img.height, img.width});
    std::copy(img.pixels.begin(), img.pixels.end(), t.data());
    return t;
}

ImageF image_from_tensor(const Tensor& t, int batch, int channel) {
    if (t.ndim() != 4) throw ShapeMismatch("image_from_tensor expects 4-d tensor");
    const int H = t.dim(2), W = t.dim(3);
    ImageF img(H, W);
    const real* src = t.data() + (int64_t(batch) * t.dim(1) + channel) * H * W;
    std::copy_n(src, int64_t(H) * W, img.pixels.data());
    return img;
}

Tensor batch_from_images(const std::vector<ImageF>& imgs) {
    if (imgs.empty()) throw ShapeMismatch("batch_from_images needs at least one image");
    const int H = imgs[0].height, W = imgs[0].width;
    Tensor t({int(imgs.size()), 1, H, W});
    for (size_t b = 0; b < imgs.size(); ++b) {
        if (imgs[b].height != H || imgs[b].width != W)
            throw ShapeMismatch("batch_from_images inputs disagree on shape");
        std::copy(imgs[b].pixels.begin(), imgs[b].pixels.end(), t.data() + int64_t(b) * H * W);
    }
    return t;
}

Tensor resize_feature_map(const Tensor& t, int target_h, int target_w) {
    if (t.ndim() != 4) throw ShapeMismatch("resize_feature_map expects 4-d tensor");
    const int B = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
    if (H == target_h && W == target_w) return t;

    Tensor out({B, C, target_h, target_w});
    if (target_h >= H) {
        if (target_h % H != 0 || target_w % W != 0)
            throw ShapeMismatch("resize_feature_map growth must be an integer factor");
        const int fy = target_h / H, fx = target_w / W;
        for (int64_t pc = 0; pc < int64_t(B) * C; ++pc) {
            const real* src = t.data() + pc * H * W;
            real* dst = out.data() + pc * int64_t(target_h) * target_w;
            for (int y = 0; y < target_h; ++y)
                for (int x = 0; x < target_w; ++x)
                    dst[int64_t(y) * target_w + x] = src[int64_t(y / fy) * W + x / fx];
        }
    } else {
        if (H % target_h != 0 || W % target_w != 0)
            throw ShapeMismatch("resize_feature_map shrink must be an integer factor");
        const int fy = H / target_h, fx = W / target_w;
        const real inv = real(1) / (real(fy) * real(fx));
        for (int64_t pc = 0; pc < int64_t(B) * C; ++pc) {
            const real* src = t.data() + pc * H * W;
            real* dst = out.data() + pc * int64_t(target_h) * target_w;
            for (int y = 0; y < target_h; ++y)
                for (int x = 0; x < target_w; ++x) {
                    real acc = 0;
                    for (int dy = 0; dy < fy; ++dy)
                        for (int dx = 0; dx < fx; ++dx)
                            acc += src[int64_t(y * fy + dy) * W + (x * fx + dx)];
                    dst[int64_t(y) * target_w + x] = acc * inv;
                }
        }
    }
    return out;
}

} // namespace msrgan
