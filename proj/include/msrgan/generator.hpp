#pragma once

#include <array>
#include <memory>
#include <string>

#include "msrgan/backbone.hpp"
#include "msrgan/nn.hpp"
#include "msrgan/pipeline.hpp"
#include "msrgan/tensor_image.hpp"

namespace msrgan {

struct GeneratorConfig {
    int base_channels = 64;
    int residual_blocks_per_scale = 1;
    real leaky_slope = 0.2;
    /// Start the detail heads at zero so the untrained generator is exactly
    /// the clamped bicubic interpolation; training can only add detail.
    bool zero_init_heads = true;
    uint64_t weights_seed = 0;
};

/// Per-sample inference output; every value clamped to [0,1] at the heads.
struct MultiScaleOutput {
    ImageF sr2;  // 56 x 56
    ImageF sr4;  // 112 x 112
    ImageF sr8;  // 224 x 224
};

/// Batched training-time output (graph nodes, gradients flow).
struct MultiScaleVar {
    Var sr2, sr4, sr8;
};

/// Per-batch constant inputs derived from the LR images: the clamped
/// bicubic base at each scale and the frozen backbone taps resized to each
/// working resolution.
struct GeneratorInputs {
    Tensor bicubic2, bicubic4, bicubic8;  // [B,1,56/112/224,...]
    Tensor feats2, feats4, feats8;        // backbone taps per scale path
};

/// Nearest-x2 upsample -> 3x3 conv -> activation, with the nearest-upsampled
/// input added back as a bypass.
struct UpsamplingUnit {
    Conv2d conv;
    real slope = 0.2;

    UpsamplingUnit() = default;
    UpsamplingUnit(int channels, real slope_, Rng& rng, const std::string& name, ParamList& reg)
        : conv(channels, channels, 3, 1, 1, rng, name + ".conv", reg), slope(slope_) {}

    Var operator()(const Var& x) const {
        const Var up = upsample_nearest2(x);
        return add(up, leaky_relu(conv(up), slope));
    }
};

/// Two conv+activation stages with an additive skip from the block input.
struct ResidualBlock {
    Conv2d conv1, conv2;
    real slope = 0.2;

    ResidualBlock() = default;
    ResidualBlock(int channels, real slope_, Rng& rng, const std::string& name, ParamList& reg)
        : conv1(channels, channels, 3, 1, 1, rng, name + ".conv1", reg),
          conv2(channels, channels, 3, 1, 1, rng, name + ".conv2", reg),
          slope(slope_) {}

    Var operator()(const Var& x) const {
        return add(x, leaky_relu(conv2(leaky_relu(conv1(x), slope)), slope));
    }
};

/// One-filter convolution followed by a logistic squeeze into [0,1]; the
/// standalone image head used when there is no bicubic base to add to.
Var to_image_2img(const Var& features, const Conv2d& conv);

/// Multi-scale residual-learning generator: per scale, the trunk is
/// upsampled, fused with frozen backbone features, refined by residual
/// blocks, and a one-filter detail map is added onto the clamped bicubic
/// interpolation of the input.
class Generator {
public:
    Generator(const GeneratorConfig& cfg, std::shared_ptr<Backbone> backbone);

    /// [B,1,28,28] -> three scale outputs. Throws WrongInputShape.
    MultiScaleVar forward(const Tensor& lr_batch, const GeneratorInputs& inputs) const;
    MultiScaleVar forward(const Tensor& lr_batch) const;
    MultiScaleOutput forward(const ImageF& lr) const;

    /// Bicubic bases + backbone taps for a batch; cacheable by the caller
    /// since they depend only on the input images.
    GeneratorInputs prepare_inputs(const Tensor& lr_batch) const;

    /// Zeroes every per-scale detail head, turning the generator into pure
    /// clamped bicubic interpolation.
    void zero_detail_heads();

    const GeneratorConfig& config() const { return cfg_; }
    const std::shared_ptr<Backbone>& backbone() const { return backbone_; }

    /// Trainable parameters only (what checkpoints store and Adam updates).
    ParamList& trainable_parameters() { return params_; }
    const ParamList& trainable_parameters() const { return params_; }
    /// Trainable + frozen backbone parameters, for parameter accounting.
    ParamList all_parameters() const;

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    struct ScalePath {
        UpsamplingUnit up;
        Conv2d fuse;
        std::vector<ResidualBlock> res;
        Conv2d head;
    };

    Var run_scale(const ScalePath& path, const Var& trunk_in, const Tensor& feats,
                  const Tensor& bicubic, Var* out_image) const;

    GeneratorConfig cfg_;
    std::shared_ptr<Backbone> backbone_;
    ParamList params_;
    Conv2d stem_;
    std::array<ScalePath, 3> scales_;  // x2, x4, x8
};

} // namespace msrgan
