#pragma once

#include "msrgan/image.hpp"

namespace msrgan {

/// 10*log10(max_val^2 / MSE), capped at 100 dB (the identical-image
/// sentinel) so averages stay finite. Throws ShapeMismatch.
real psnr(const ImageF& a, const ImageF& b, real max_val = 1.0);

struct SsimParams {
    int window = 11;
    real sigma = 1.5;
    real k1 = 0.01;
    real k2 = 0.03;
    real max_val = 1.0;
};

/// Mean local SSIM over all fully-covered (valid) window positions with a
/// Gaussian window. Symmetric in (a, b); equals 1 iff a == b.
/// Throws ShapeMismatch / TooSmall.
real ssim(const ImageF& a, const ImageF& b, const SsimParams& params = {});

/// Mean SSIM and mean contrast-structure term at one scale, for MS-SSIM.
struct SsimTerms {
    real ssim = 0;
    real cs = 0;
};
SsimTerms ssim_terms(const ImageF& a, const ImageF& b, const SsimParams& params = {});

/// Multi-scale SSIM: contrast-structure means at every dyadic scale, the
/// full SSIM at the coarsest, combined with weight exponents. Levels beyond
/// what the image size supports are dropped and the standard 5-level weights
/// renormalized; a single-level configuration therefore reduces exactly to
/// ssim(). Slightly negative terms are floored at 0 before exponentiation.
real ms_ssim(const ImageF& a, const ImageF& b, int max_levels = 5, const SsimParams& params = {});

} // namespace msrgan
