#include "msrgan/backbone.hpp"

#include <algorithm>

#include "msrgan/checkpoint.hpp"
#include "msrgan/sha256.hpp"

namespace msrgan {

BackboneConfig BackboneConfig::desk() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::densenet121() {
    BackboneConfig cfg;
    cfg.growth_rate = 32;
    cfg.block_layers = {6, 12, 24, 16};
    cfg.stem_channels = 64;
    cfg.stem_kernel = 7;
    cfg.tap_points = {"stride2", "stride4", "stride8", "stride16"};
    return cfg;
}

Var dense_block_forward(const Var& x, const std::vector<Conv2d>& layers) {
    Var features = x;
    for (const Conv2d& layer : layers) {
        const Var y = relu(layer(features));
        features = concat_channels({features, y});
    }
    return features;
}

Tensor replicate_to_rgb(const ImageF& img) {
    Tensor t({1, 3, img.height, img.width});
    const int64_t plane = int64_t(img.height) * img.width;
    for (int c = 0; c < 3; ++c)
        std::copy(img.pixels.begin(), img.pixels.end(), t.data() + c * plane);
    return t;
}

Tensor replicate_to_rgb_batch(const Tensor& gray) {
    if (gray.ndim() != 4 || gray.dim(1) != 1) throw ShapeMismatch("expected [B,1,H,W] grayscale batch");
    const int B = gray.dim(0), H = gray.dim(2), W = gray.dim(3);
    Tensor t({B, 3, H, W});
    const int64_t plane = int64_t(H) * W;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < 3; ++c)
            std::copy_n(gray.data() + b * plane, plane, t.data() + (int64_t(b) * 3 + c) * plane);
    return t;
}

// Depth encoding: 0 = after stem (stride 2), k >= 1 = after block k
// (stride 2^(k+1)).
int Backbone::tap_depth(const std::string& tap) {
    if (tap == "stride2") return 0;
    if (tap == "stride4") return 1;
    if (tap == "stride8") return 2;
    if (tap == "stride16") return 3;
    if (tap == "stride32") return 4;
    throw UnknownTap("unknown backbone tap: " + tap);
}

Backbone::Backbone(const BackboneConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    const int sk = cfg.stem_kernel;
    stem_ = Conv2d(3, cfg.stem_channels, sk, /*stride=*/2, /*pad=*/(sk - 1) / 2, rng, "stem", params_);

    int channels = cfg.stem_channels;
    for (size_t bi = 0; bi < cfg.block_layers.size(); ++bi) {
        if (bi > 0) {
            // Halving transition between blocks.
            const int out_ch = std::max(1, channels / 2);
            transitions_.emplace_back(channels, out_ch, 1, 1, 0, rng,
                                      "transition" + std::to_string(bi), params_);
            channels = out_ch;
        }
        std::vector<Conv2d> block;
        for (int li = 0; li < cfg.block_layers[bi]; ++li) {
            const int in_ch = channels + li * cfg.growth_rate;
            block.emplace_back(in_ch, cfg.growth_rate, cfg.dense_kernel, 1, (cfg.dense_kernel - 1) / 2,
                               rng, "block" + std::to_string(bi + 1) + ".layer" + std::to_string(li),
                               params_);
        }
        channels += cfg.block_layers[bi] * cfg.growth_rate;
        blocks_.push_back(std::move(block));
        block_out_channels_.push_back(channels);
    }

    set_frozen(params_, cfg.frozen);
    info_.source = "random:" + std::to_string(seed);
    info_.content_hash = checksum();
}

Var Backbone::run_to_depth(const Var& x, int want_depth) const {
    Var h = relu(stem_(x));
    if (want_depth == 0) return h;
    h = avg_pool2(h);
    for (size_t bi = 0; bi < blocks_.size(); ++bi) {
        if (bi > 0) h = avg_pool2(relu(transitions_[bi - 1](h)));
        h = dense_block_forward(h, blocks_[bi]);
        if (int(bi) + 1 == want_depth) return h;
    }
    throw UnknownTap("tap deeper than backbone: depth " + std::to_string(want_depth));
}

Tensor Backbone::extract_features(const ImageF& img, const std::string& tap) const {
    return extract_features(replicate_to_rgb(img), tap);
}

Tensor Backbone::extract_features(const Tensor& batch, const std::string& tap) const {
    const int depth = tap_depth(tap);
    if (depth > int(blocks_.size())) throw UnknownTap("tap deeper than backbone: " + tap);
    // Constant input + frozen params: the graph records no backward work.
    const Var out = run_to_depth(Var::constant(batch), depth);
    return out.value();
}

std::map<std::string, Tensor> Backbone::extract_all_taps(const Tensor& batch) const {
    int deepest = 0;
    for (const auto& tap : cfg_.tap_points) deepest = std::max(deepest, tap_depth(tap));

    std::map<std::string, Tensor> out;
    Var h = relu(stem_(Var::constant(batch)));
    if (std::count(cfg_.tap_points.begin(), cfg_.tap_points.end(), "stride2")) out["stride2"] = h.value();
    if (deepest == 0) return out;
    h = avg_pool2(h);
    for (size_t bi = 0; bi < blocks_.size(); ++bi) {
        if (bi > 0) h = avg_pool2(relu(transitions_[bi - 1](h)));
        h = dense_block_forward(h, blocks_[bi]);
        const std::string name = "stride" + std::to_string(4 << bi);
        if (std::count(cfg_.tap_points.begin(), cfg_.tap_points.end(), name)) out[name] = h.value();
        if (int(bi) + 1 == deepest) break;
    }
    return out;
}

Tensor Backbone::pooled_features(const Tensor& batch) const {
    const Var h = run_to_depth(Var::constant(batch), int(blocks_.size()));
    return global_avg_pool(h).value();
}

int Backbone::tap_channels(const std::string& tap) const {
    const int depth = tap_depth(tap);
    if (depth == 0) return cfg_.stem_channels;
    if (depth > int(block_out_channels_.size())) throw UnknownTap("tap deeper than backbone: " + tap);
    return block_out_channels_[size_t(depth - 1)];
}

int Backbone::tap_stride(const std::string& tap) const { return 2 << tap_depth(tap); }

void Backbone::save_weights(const std::string& path) const {
    CheckpointArchive archive;
    for (const auto& p : params_) archive.tensors.emplace_back(p.name, p.var.value());
    archive.meta["kind"] = "backbone";
    archive.meta["growth_rate"] = std::to_string(cfg_.growth_rate);
    save_checkpoint(path, archive);
}

Backbone load_backbone_weights(const std::string& source, const BackboneConfig& cfg) {
    if (source.rfind("random:", 0) == 0) {
        const uint64_t seed = std::stoull(source.substr(7));
        return Backbone(cfg, seed);
    }

    const CheckpointArchive archive = load_checkpoint(source);  // verifies content hash
    Backbone net(cfg, /*seed=*/0);
    if (archive.tensors.size() != net.params_.size())
        throw ArchitectureMismatch("backbone layer count differs from checkpoint: " + source);
    for (auto& p : net.params_) {
        const Tensor* t = archive.find(p.name);
        if (!t) throw ArchitectureMismatch("missing backbone parameter " + p.name + " in " + source);
        if (!t->same_shape(p.var.value()))
            throw ArchitectureMismatch("backbone parameter shape mismatch: " + p.name);
        p.var.value() = *t;
    }
    set_frozen(net.params_, cfg.frozen);
    net.info_.source = source;
    net.info_.content_hash = sha256_file_hex(source);
    return net;
}

} // namespace msrgan
