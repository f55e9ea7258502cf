#pragma once

#include <vector>

#include "msrgan/image.hpp"
#include "msrgan/tensor.hpp"

namespace msrgan {

Tensor tensor_from_image(const ImageF& img);                       // [1,1,H,W]
ImageF image_from_tensor(const Tensor& t, int batch, int channel); // plane copy
Tensor batch_from_images(const std::vector<ImageF>& imgs);         // [B,1,H,W]

/// Integer-factor resize for feature maps: nearest when growing, box mean
/// when shrinking. Used to bring backbone taps to a working resolution;
/// these are constants, so no gradient path is needed.
Tensor resize_feature_map(const Tensor& t, int target_h, int target_w);

} // namespace msrgan
