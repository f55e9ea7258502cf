#pragma once

#include <string>
#include <vector>

#include "msrgan/capsule.hpp"
#include "msrgan/image.hpp"
#include "msrgan/nn.hpp"
#include "msrgan/tensor_image.hpp"

namespace msrgan {

struct DiscriminatorConfig {
    /// Output channels of the stride-2 trunk stages (224->112->56->28).
    std::vector<int> widths = {32, 64, 128};
    /// Extra stride-2 stages between the injected trunk and the capsule
    /// stage; 0 keeps primary capsules at 28x28 positions.
    int extra_downsample = 0;
    int primary_types = 8;    // capsule types in the first capsule layer
    int primary_dim = 32;     // neurons per first-layer capsule
    int routed_caps = 10;     // capsules in the second layer
    int routed_dim = 16;      // neurons per second-layer capsule
    int routing_iterations = 3;
    bool inject_lr = false;   // also feed the 28x28 LR into the trunk
    real leaky_slope = 0.2;
    uint64_t weights_seed = 0;
};

/// 25x25 grid of per-patch real/fake scores in [0,1].
struct PatchMap {
    std::vector<real> scores;  // row-major 25x25

    real at(int y, int x) const { return scores[size_t(y) * 25 + size_t(x)]; }
};

constexpr int kPatchSide = 25;
constexpr int kPatchCount = kPatchSide * kPatchSide;

/// All three scales of one sample, either a real pyramid or a generator
/// output set.
struct DiscriminatorInput {
    ImageF i2, i4, i8;
    ImageF lr;  // consulted only when inject_lr is set
};

struct DiscriminatorBatch {
    Tensor i2, i4, i8;  // [B,1,56,56], [B,1,112,112], [B,1,224,224]
    Tensor lr;          // [B,1,28,28], optional
};

/// Convolutional downsampling trunk with per-scale image injections, capsule
/// head with dynamic routing, and a 625-unit layer reshaped to the patch map.
class Discriminator {
public:
    explicit Discriminator(const DiscriminatorConfig& cfg);

    /// Batched scores [B, 625] in (0,1); gradients flow to inputs that are
    /// graph nodes and to unfrozen parameters.
    Var forward(const Var& i8, const Var& i4, const Var& i2, const Var& lr = {}) const;
    Var forward(const DiscriminatorBatch& batch) const;
    PatchMap forward(const DiscriminatorInput& input) const;

    /// Couplings observed on the most recent forward (filled only when
    /// capture_trace was set beforehand).
    void capture_trace(RoutingTrace* trace) { trace_ = trace; }

    const DiscriminatorConfig& config() const { return cfg_; }
    ParamList& parameters() { return params_; }
    const ParamList& parameters() const { return params_; }

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    DiscriminatorConfig cfg_;
    ParamList params_;
    std::vector<Conv2d> trunk_;
    Conv2d caps_conv_;
    Var caps_transform_;
    Linear patch_fc_;
    RoutingTrace* trace_ = nullptr;
};

} // namespace msrgan
