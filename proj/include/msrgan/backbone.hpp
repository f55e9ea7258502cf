#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "msrgan/image.hpp"
#include "msrgan/nn.hpp"

namespace msrgan {

/// Densely connected feature extractor in the CheXNet mold: stem conv,
/// dense blocks joined by halving transitions, taps exported at fixed
/// strides. Frozen during GAN training; the generator reads its taps as
/// constant feature maps.
struct BackboneConfig {
    int growth_rate = 12;
    std::vector<int> block_layers = {4, 4, 4};
    int stem_channels = 24;
    int stem_kernel = 3;   // 4 gives an exactly flip-equivariant stem, 7 matches DenseNet-121
    int dense_kernel = 3;
    bool frozen = true;
    std::vector<std::string> tap_points = {"stride2", "stride4", "stride8"};

    static BackboneConfig desk();
    /// Full DenseNet-121 geometry (growth 32, blocks 6/12/24/16) for runs
    /// with pretrained weights; tests never need it for forward passes.
    static BackboneConfig densenet121();
};

struct BackboneInfo {
    std::string source;        // "random:<seed>" or a file path
    std::string content_hash;  // checkpoint hash or parameter checksum
};

class Backbone {
public:
    Backbone(const BackboneConfig& cfg, uint64_t seed);

    /// Runs the stem + blocks far enough to produce `tap` and returns that
    /// activation, [1, C, H/stride, W/stride]. No gradient ever flows into
    /// the backbone; inputs are replicated to 3 channels.
    Tensor extract_features(const ImageF& img, const std::string& tap) const;
    /// Batched variant used by the generator ([B,3,H,W] input).
    Tensor extract_features(const Tensor& batch, const std::string& tap) const;

    /// All configured taps in one pass over a batch.
    std::map<std::string, Tensor> extract_all_taps(const Tensor& batch) const;

    /// Global-average-pooled coarsest features, [B, C].
    Tensor pooled_features(const Tensor& batch) const;

    int tap_channels(const std::string& tap) const;
    int tap_stride(const std::string& tap) const;

    const BackboneConfig& config() const { return cfg_; }
    const BackboneInfo& info() const { return info_; }
    const ParamList& parameters() const { return params_; }
    ParamList& parameters() { return params_; }
    std::string checksum() const { return params_checksum(params_); }

    void save_weights(const std::string& path) const;

private:
    friend Backbone load_backbone_weights(const std::string& source, const BackboneConfig& cfg);

    BackboneConfig cfg_;
    BackboneInfo info_;
    ParamList params_;
    Conv2d stem_;
    std::vector<std::vector<Conv2d>> blocks_;
    std::vector<Conv2d> transitions_;
    std::vector<int> block_out_channels_;

    Var run_to_depth(const Var& x, int want_depth) const;
    static int tap_depth(const std::string& tap);
};

/// Builds a backbone from "random:<seed>" or a weight file. File loads
/// verify the content hash and the architecture against `cfg`
/// (ChecksumMismatch / ArchitectureMismatch). Provenance lands in info().
Backbone load_backbone_weights(const std::string& source, const BackboneConfig& cfg);

/// One dense block applied to a feature map: every layer consumes the
/// concatenation of the block input and all previous layer outputs.
/// Exposed for connectivity tests.
Var dense_block_forward(const Var& x, const std::vector<Conv2d>& layers);

/// [B,1,H,W] or ImageF to the 3-channel input the backbone expects.
Tensor replicate_to_rgb(const ImageF& img);
Tensor replicate_to_rgb_batch(const Tensor& gray);  // [B,1,H,W] -> [B,3,H,W]

} // namespace msrgan
