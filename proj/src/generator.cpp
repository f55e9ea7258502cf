#include "msrgan/generator.hpp"

#include "msrgan/checkpoint.hpp"

namespace msrgan {

Var to_image_2img(const Var& features, const Conv2d& conv) { return sigmoid(conv(features)); }

Generator::Generator(const GeneratorConfig& cfg, std::shared_ptr<Backbone> backbone)
    : cfg_(cfg), backbone_(std::move(backbone)) {
    if (cfg_.base_channels < 8) throw Error("generator base_channels must be at least 8");
    Rng rng(cfg_.weights_seed);
    const int C = cfg_.base_channels;
    stem_ = Conv2d(1, C, 3, 1, 1, rng, "stem", params_);

    const char* names[3] = {"scale2", "scale4", "scale8"};
    const char* taps[3] = {"stride2", "stride4", "stride8"};
    for (int s = 0; s < 3; ++s) {
        ScalePath& p = scales_[size_t(s)];
        const std::string base = names[s];
        p.up = UpsamplingUnit(C, cfg_.leaky_slope, rng, base + ".up", params_);
        const int fused_in = C + backbone_->tap_channels(taps[s]);
        p.fuse = Conv2d(fused_in, C, 1, 1, 0, rng, base + ".fuse", params_);
        for (int r = 0; r < cfg_.residual_blocks_per_scale; ++r)
            p.res.emplace_back(C, cfg_.leaky_slope, rng, base + ".res" + std::to_string(r), params_);
        p.head = Conv2d(C, 1, 1, 1, 0, rng, base + ".head", params_);
        if (cfg_.zero_init_heads) {
            p.head.w.value().fill(0);
            p.head.b.value().fill(0);
        }
    }
}

GeneratorInputs Generator::prepare_inputs(const Tensor& lr_batch) const {
    if (lr_batch.ndim() != 4 || lr_batch.dim(1) != 1 || lr_batch.dim(2) != kLrSize ||
        lr_batch.dim(3) != kLrSize)
        throw WrongInputShape("generator expects [B,1,28,28] input");
    const int B = lr_batch.dim(0);

    GeneratorInputs in;
    const size_t n = size_t(B);
    std::vector<ImageF> up2(n), up4(n), up8(n);
    for (int b = 0; b < B; ++b) {
        const ImageF lr = image_from_tensor(lr_batch, b, 0);
        up2[size_t(b)] = bicubic_upsample(lr, 2);
        up4[size_t(b)] = bicubic_upsample(lr, 4);
        up8[size_t(b)] = bicubic_upsample(lr, 8);
    }
    in.bicubic2 = batch_from_images(up2);
    in.bicubic4 = batch_from_images(up4);
    in.bicubic8 = batch_from_images(up8);

    // One frozen-backbone pass over the x8 bicubic upsample; each tap is
    // brought to its scale path's working resolution.
    const auto taps = backbone_->extract_all_taps(replicate_to_rgb_batch(in.bicubic8));
    in.feats2 = resize_feature_map(taps.at("stride2"), 2 * kLrSize, 2 * kLrSize);
    in.feats4 = resize_feature_map(taps.at("stride4"), 4 * kLrSize, 4 * kLrSize);
    in.feats8 = resize_feature_map(taps.at("stride8"), 8 * kLrSize, 8 * kLrSize);
    return in;
}

Var Generator::run_scale(const ScalePath& path, const Var& trunk_in, const Tensor& feats,
                         const Tensor& bicubic, Var* out_image) const {
    Var h = path.up(trunk_in);
    h = leaky_relu(path.fuse(concat_channels({h, Var::constant(feats)})), cfg_.leaky_slope);
    for (const ResidualBlock& block : path.res) h = block(h);
    const Var detail = path.head(h);
    *out_image = clamp01(add(Var::constant(bicubic), detail));
    return h;
}

MultiScaleVar Generator::forward(const Tensor& lr_batch, const GeneratorInputs& inputs) const {
    if (lr_batch.ndim() != 4 || lr_batch.dim(1) != 1 || lr_batch.dim(2) != kLrSize ||
        lr_batch.dim(3) != kLrSize)
        throw WrongInputShape("generator expects [B,1,28,28] input");

    MultiScaleVar out;
    Var trunk = leaky_relu(stem_(Var::constant(lr_batch)), cfg_.leaky_slope);
    trunk = run_scale(scales_[0], trunk, inputs.feats2, inputs.bicubic2, &out.sr2);
    trunk = run_scale(scales_[1], trunk, inputs.feats4, inputs.bicubic4, &out.sr4);
    run_scale(scales_[2], trunk, inputs.feats8, inputs.bicubic8, &out.sr8);
    return out;
}

MultiScaleVar Generator::forward(const Tensor& lr_batch) const {
    return forward(lr_batch, prepare_inputs(lr_batch));
}

MultiScaleOutput Generator::forward(const ImageF& lr) const {
    if (lr.height != kLrSize || lr.width != kLrSize)
        throw WrongInputShape("generator expects a 28x28 image");
    const MultiScaleVar v = forward(tensor_from_image(lr));
    return {image_from_tensor(v.sr2.value(), 0, 0), image_from_tensor(v.sr4.value(), 0, 0),
            image_from_tensor(v.sr8.value(), 0, 0)};
}

void Generator::zero_detail_heads() {
    for (auto& path : scales_) {
        path.head.w.value().fill(0);
        path.head.b.value().fill(0);
    }
}

ParamList Generator::all_parameters() const {
    ParamList all = params_;
    for (const auto& p : backbone_->parameters()) all.push_back({"backbone." + p.name, p.var});
    return all;
}

void Generator::save(const std::string& path) const {
    CheckpointArchive archive;
    for (const auto& p : params_) archive.tensors.emplace_back(p.name, p.var.value());
    archive.meta["kind"] = "generator";
    archive.meta["base_channels"] = std::to_string(cfg_.base_channels);
    archive.meta["residual_blocks_per_scale"] = std::to_string(cfg_.residual_blocks_per_scale);
    archive.meta["backbone_source"] = backbone_->info().source;
    archive.meta["backbone_hash"] = backbone_->info().content_hash;
    save_checkpoint(path, archive);
}

void Generator::load(const std::string& path) {
    const CheckpointArchive archive = load_checkpoint(path);
    if (archive.meta.count("kind") && archive.meta.at("kind") != "generator")
        throw CheckpointMismatch("not a generator checkpoint: " + path);
    // Training checkpoints carry optimizer state under an "adam." prefix.
    size_t weight_tensors = 0;
    for (const auto& [name, t] : archive.tensors) weight_tensors += name.rfind("adam.", 0) != 0;
    if (weight_tensors != params_.size())
        throw CheckpointMismatch("generator parameter count differs from checkpoint: " + path);
    for (auto& p : params_) {
        const Tensor* t = archive.find(p.name);
        if (!t) throw CheckpointMismatch("missing generator parameter " + p.name + " in " + path);
        if (!t->same_shape(p.var.value()))
            throw CheckpointMismatch("generator parameter shape mismatch: " + p.name);
        p.var.value() = *t;
    }
}

} // namespace msrgan
