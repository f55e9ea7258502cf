#include "msrgan/discriminator.hpp"

#include "msrgan/checkpoint.hpp"
#include "msrgan/pipeline.hpp"

namespace msrgan {

Discriminator::Discriminator(const DiscriminatorConfig& cfg) : cfg_(cfg) {
    if (cfg_.widths.size() != 3) throw Error("discriminator needs exactly three trunk widths");
    Rng rng(cfg_.weights_seed);

    // Injections happen after the first and second stride-2 stages, so those
    // stages consume one extra channel.
    trunk_.emplace_back(1, cfg_.widths[0], 3, 2, 1, rng, "trunk0", params_);
    trunk_.emplace_back(cfg_.widths[0] + 1, cfg_.widths[1], 3, 2, 1, rng, "trunk1", params_);
    trunk_.emplace_back(cfg_.widths[1] + 1, cfg_.widths[2], 3, 2, 1, rng, "trunk2", params_);
    int ch = cfg_.widths[2];
    if (cfg_.inject_lr) ch += 1;  // LR concatenated at the 28x28 stage
    for (int i = 0; i < cfg_.extra_downsample; ++i) {
        trunk_.emplace_back(ch, cfg_.widths[2], 3, 2, 1, rng, "trunk_extra" + std::to_string(i), params_);
        ch = cfg_.widths[2];
    }

    const int caps_channels = cfg_.primary_types * cfg_.primary_dim;
    caps_conv_ = Conv2d(ch, caps_channels, 3, 1, 1, rng, "caps_conv", params_);

    const int caps_spatial = (kHrSize / 8) >> cfg_.extra_downsample;
    const int in_caps = cfg_.primary_types * caps_spatial * caps_spatial;
    caps_transform_ = make_caps_transform(in_caps, cfg_.routed_caps, cfg_.routed_dim, cfg_.primary_dim, rng);
    params_.push_back({"caps_transform", caps_transform_});

    patch_fc_ = Linear(cfg_.routed_caps * cfg_.routed_dim, kPatchCount, rng, "patch_fc", params_);
}

Var Discriminator::forward(const Var& i8, const Var& i4, const Var& i2, const Var& lr) const {
    const auto expect = [](const Var& v, int side, const char* name) {
        if (!v.defined() || v.value().ndim() != 4 || v.value().dim(1) != 1 ||
            v.value().dim(2) != side || v.value().dim(3) != side)
            throw ScaleMismatch(std::string("discriminator input ") + name + " must be [B,1," +
                                std::to_string(side) + "," + std::to_string(side) + "]");
    };
    expect(i8, kHrSize, "i8");
    expect(i4, kHrSize / 2, "i4");
    expect(i2, kHrSize / 4, "i2");
    if (cfg_.inject_lr) expect(lr, kLrSize, "lr");

    const real slope = cfg_.leaky_slope;
    Var h = leaky_relu(trunk_[0](i8), slope);             // 112
    h = leaky_relu(trunk_[1](concat_channels({h, i4})), slope);  // 56
    h = leaky_relu(trunk_[2](concat_channels({h, i2})), slope);  // 28
    size_t next = 3;
    if (cfg_.inject_lr) h = concat_channels({h, lr});
    for (int i = 0; i < cfg_.extra_downsample; ++i) h = leaky_relu(trunk_[next++](h), slope);

    h = leaky_relu(caps_conv_(h), slope);
    const CapsuleTensor primary = primary_capsules(h, cfg_.primary_types, cfg_.primary_dim);
    const CapsuleTensor routed =
        routed_capsule_layer(primary, caps_transform_, cfg_.routing_iterations, trace_);

    const int B = routed.vectors.value().dim(0);
    const Var flat = reshape(routed.vectors, {B, routed.num_capsules * routed.capsule_dim});
    return sigmoid(patch_fc_(flat));
}

Var Discriminator::forward(const DiscriminatorBatch& batch) const {
    return forward(Var::constant(batch.i8), Var::constant(batch.i4), Var::constant(batch.i2),
                   batch.lr.empty() ? Var() : Var::constant(batch.lr));
}

PatchMap Discriminator::forward(const DiscriminatorInput& input) const {
    DiscriminatorBatch batch;
    batch.i2 = tensor_from_image(input.i2);
    batch.i4 = tensor_from_image(input.i4);
    batch.i8 = tensor_from_image(input.i8);
    if (cfg_.inject_lr) batch.lr = tensor_from_image(input.lr);
    const Var scores = forward(batch);
    PatchMap out;
    out.scores.assign(scores.value().data(), scores.value().data() + kPatchCount);
    return out;
}

void Discriminator::save(const std::string& path) const {
    CheckpointArchive archive;
    for (const auto& p : params_) archive.tensors.emplace_back(p.name, p.var.value());
    archive.meta["kind"] = "discriminator";
    archive.meta["widths"] = std::to_string(cfg_.widths[0]) + "," + std::to_string(cfg_.widths[1]) +
                             "," + std::to_string(cfg_.widths[2]);
    save_checkpoint(path, archive);
}

void Discriminator::load(const std::string& path) {
    const CheckpointArchive archive = load_checkpoint(path);
    if (archive.meta.count("kind") && archive.meta.at("kind") != "discriminator")
        throw CheckpointMismatch("not a discriminator checkpoint: " + path);
    size_t weight_tensors = 0;
    for (const auto& [name, t] : archive.tensors) weight_tensors += name.rfind("adam.", 0) != 0;
    if (weight_tensors != params_.size())
        throw CheckpointMismatch("discriminator parameter count differs from checkpoint: " + path);
    for (auto& p : params_) {
        const Tensor* t = archive.find(p.name);
        if (!t) throw CheckpointMismatch("missing discriminator parameter " + p.name + " in " + path);
        if (!t->same_shape(p.var.value()))
            throw CheckpointMismatch("discriminator parameter shape mismatch: " + p.name);
        p.var.value() = *t;
    }
}

} // namespace msrgan
