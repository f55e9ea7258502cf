#include "msrgan/metrics.hpp"

#include <cmath>
#include <vector>

namespace msrgan {

real psnr(const ImageF& a, const ImageF& b, real max_val) {
    if (!a.same_shape(b)) throw ShapeMismatch("psnr inputs must share a shape");
    real mse = 0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        const real d = a.pixels[i] - b.pixels[i];
        mse += d * d;
    }
    mse /= real(a.pixels.size());
    if (mse == 0) return 100;
    return std::min<real>(100, 10 * std::log10(max_val * max_val / mse));
}

namespace {

std::vector<real> gaussian_window(int n, real sigma) {
    std::vector<real> w(static_cast<size_t>(n), real(0));
    const real c = real(n - 1) / 2;
    real sum = 0;
    for (int i = 0; i < n; ++i) {
        w[size_t(i)] = std::exp(-((real(i) - c) * (real(i) - c)) / (2 * sigma * sigma));
        sum += w[size_t(i)];
    }
    for (real& v : w) v /= sum;
    return w;
}

// Separable valid-mode filtering: output is (h-n+1) x (w-n+1).
ImageF filter_valid(const ImageF& img, const std::vector<real>& k) {
    const int n = int(k.size());
    ImageF tmp(img.height, img.width - n + 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < tmp.width; ++x) {
            real acc = 0;
            for (int i = 0; i < n; ++i) acc += k[size_t(i)] * img.at(y, x + i);
            tmp.at(y, x) = acc;
        }
    ImageF out(img.height - n + 1, tmp.width);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            real acc = 0;
            for (int i = 0; i < n; ++i) acc += k[size_t(i)] * tmp.at(y + i, x);
            out.at(y, x) = acc;
        }
    return out;
}

ImageF hadamard(const ImageF& a, const ImageF& b) {
    ImageF out(a.height, a.width);
    for (size_t i = 0; i < a.pixels.size(); ++i) out.pixels[i] = a.pixels[i] * b.pixels[i];
    return out;
}

} // namespace

SsimTerms ssim_terms(const ImageF& a, const ImageF& b, const SsimParams& p) {
    if (!a.same_shape(b)) throw ShapeMismatch("ssim inputs must share a shape");
    if (a.height < p.window || a.width < p.window)
        throw TooSmall("ssim needs images at least " + std::to_string(p.window) + " pixels per side");

    const std::vector<real> k = gaussian_window(p.window, p.sigma);
    const ImageF mu1 = filter_valid(a, k);
    const ImageF mu2 = filter_valid(b, k);
    const ImageF e_aa = filter_valid(hadamard(a, a), k);
    const ImageF e_bb = filter_valid(hadamard(b, b), k);
    const ImageF e_ab = filter_valid(hadamard(a, b), k);

    const real c1 = (p.k1 * p.max_val) * (p.k1 * p.max_val);
    const real c2 = (p.k2 * p.max_val) * (p.k2 * p.max_val);

    real ssim_sum = 0, cs_sum = 0;
    for (size_t i = 0; i < mu1.pixels.size(); ++i) {
        const real m1 = mu1.pixels[i], m2 = mu2.pixels[i];
        const real s11 = e_aa.pixels[i] - m1 * m1;
        const real s22 = e_bb.pixels[i] - m2 * m2;
        const real s12 = e_ab.pixels[i] - m1 * m2;
        const real cs = (2 * s12 + c2) / (s11 + s22 + c2);
        const real lum = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        cs_sum += cs;
        ssim_sum += lum * cs;
    }
    const real n = real(mu1.pixels.size());
    return {ssim_sum / n, cs_sum / n};
}

real ssim(const ImageF& a, const ImageF& b, const SsimParams& params) {
    return ssim_terms(a, b, params).ssim;
}

real ms_ssim(const ImageF& a, const ImageF& b, int max_levels, const SsimParams& params) {
    if (!a.same_shape(b)) throw ShapeMismatch("ms_ssim inputs must share a shape");
    static const real kWeights5[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

    int levels = 1;
    {
        int side = std::min(a.height, a.width);
        while (levels < max_levels && levels < 5 && (side >> 1) >= params.window) {
            side >>= 1;
            ++levels;
        }
    }
    // A single level is the definition collapse: plain SSIM, no clamping
    // (the floor below only protects fractional exponents).
    if (levels == 1) return ssim_terms(a, b, params).ssim;

    real wsum = 0;
    for (int j = 0; j < levels; ++j) wsum += kWeights5[j];

    ImageF ca = a, cb = b;
    real result = 1;
    for (int j = 0; j < levels; ++j) {
        const SsimTerms terms = ssim_terms(ca, cb, params);
        const real w = kWeights5[j] / wsum;
        // Floor at 0: cs can dip below zero on adversarial inputs and a
        // negative base under a fractional exponent is undefined.
        const real term = (j + 1 == levels) ? std::max<real>(0, terms.ssim)
                                            : std::max<real>(0, terms.cs);
        result *= std::pow(term, w);
        if (j + 1 < levels) {
            // Crop to even dims, then 2x2 box downsample.
            ImageF ea(ca.height & ~1, ca.width & ~1);
            ImageF eb(ea.height, ea.width);
            for (int y = 0; y < ea.height; ++y)
                for (int x = 0; x < ea.width; ++x) {
                    ea.at(y, x) = ca.at(y, x);
                    eb.at(y, x) = cb.at(y, x);
                }
            ca = downsample2_area(ea);
            cb = downsample2_area(eb);
        }
    }
    return result;
}

} // namespace msrgan
