#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "msrgan/discriminator.hpp"
#include "msrgan/generator.hpp"
#include "msrgan/pipeline.hpp"

namespace msrgan {

/// Raised when a step produces a non-finite loss; the CLI maps it to exit 3.
struct NumericFailure : Error {
    using Error::Error;
};

struct TrainConfig {
    int gen_batch = 32;
    int disc_batch = 8;
    int64_t steps = 0;
    real lr_g = 1e-4;
    real lr_d = 1e-4;
    real adam_beta1 = 0.5;
    real adam_beta2 = 0.999;
    real w_adv = 1e-3;
    std::array<real, 3> w_content = {1, 1, 1};  // x2, x4, x8
    uint64_t seed = 0;
    int64_t checkpoint_every = 0;  // 0: checkpoint only when done
    /// Cache backbone features / bicubic bases per (sample, flip); resolved
    /// automatically for small datasets when unset.
    std::optional<bool> feature_cache;
};

struct LedgerRow {
    int64_t step = 0;
    real g_loss = 0, d_loss = 0;
    real content2 = 0, content4 = 0, content8 = 0;  // unweighted per-scale MAE
    real grad_norm_g = 0, grad_norm_d = 0;
    int gen_samples = 0, disc_real = 0, disc_fake = 0;
};

std::string ledger_row_json(const LedgerRow& row);
LedgerRow ledger_row_from_json(const std::string& line);

/// Sample access for the loader; manifests and in-memory test sets both
/// implement it. load() returns the un-augmented pyramid.
class PyramidDataset {
public:
    virtual ~PyramidDataset() = default;
    virtual size_t size() const = 0;
    virtual ScalePyramid load(size_t index) const = 0;
};

class ManifestDataset : public PyramidDataset {
public:
    explicit ManifestDataset(DatasetManifest manifest);
    size_t size() const override { return manifest_.records.size(); }
    ScalePyramid load(size_t index) const override;
    const DatasetManifest& manifest() const { return manifest_; }

private:
    DatasetManifest manifest_;
};

class MemoryDataset : public PyramidDataset {
public:
    explicit MemoryDataset(std::vector<ImageF> hr_images);
    size_t size() const override { return images_.size(); }
    ScalePyramid load(size_t index) const override;

private:
    std::vector<ImageF> images_;
};

/// Epoch-shuffled, seed-deterministic sample stream. Batches wrap across
/// epochs (reshuffling each time) instead of raising DataExhausted. The
/// per-epoch permutation is a pure function of (seed, epoch), so loader
/// state serializes as three integers plus the augmentation stream.
class SeededLoader {
public:
    SeededLoader(const PyramidDataset& data, uint64_t seed);

    struct Drawn {
        ScalePyramid pyramid;
        size_t index = 0;
        bool flipped = false;
    };
    std::vector<Drawn> next_batch(int n);

    std::string state_json() const;
    void restore_state(const std::string& json_text);

private:
    void reshuffle();

    const PyramidDataset* data_;
    uint64_t seed_;
    int64_t epoch_ = 0;
    size_t cursor_ = 0;
    std::vector<size_t> perm_;
    Rng aug_rng_;
};

struct ContentParts {
    real c2 = 0, c4 = 0, c8 = 0;
};

/// Weighted sum of per-scale mean absolute errors. Raw (unweighted) values
/// are reported through `parts`.
Var content_loss(const MultiScaleVar& out, const Tensor& t2, const Tensor& t4, const Tensor& t8,
                 const std::array<real, 3>& weights, ContentParts* parts = nullptr);

/// Mean binary cross-entropy of a patch map against an all-real (1) or
/// all-fake (0) target.
Var patch_bce_loss(const Var& pred, real target);

/// Owns the optimizers and the alternating update; one engine per run.
class TrainingEngine {
public:
    TrainingEngine(Generator& gen, Discriminator& disc, const TrainConfig& cfg);

    /// One discriminator update on a real batch plus fakes generated from
    /// the same samples' LR level. Generator parameters stay untouched.
    real train_step_discriminator(const std::vector<SeededLoader::Drawn>& real_batch);

    /// One generator update: adversarial term against an all-real target
    /// plus the content loss. Discriminator and backbone stay untouched.
    real train_step_generator(const std::vector<SeededLoader::Drawn>& batch, ContentParts* parts,
                              real* adv_out = nullptr);

    Adam& gen_optimizer() { return adam_g_; }
    Adam& disc_optimizer() { return adam_d_; }

    void set_feature_cache(bool enabled) { cache_enabled_ = enabled; }

private:
    GeneratorInputs prepare_cached(const std::vector<SeededLoader::Drawn>& batch);

    Generator& gen_;
    Discriminator& disc_;
    TrainConfig cfg_;
    Adam adam_g_, adam_d_;
    bool cache_enabled_ = false;
    std::unordered_map<uint64_t, GeneratorInputs> cache_;
};

struct RunResult {
    std::vector<LedgerRow> ledger;
    int64_t final_step = 0;
    std::string checkpoint_dir;  // of the final step
};

/// Alternating training with checkpoints every cfg.checkpoint_every steps
/// (and always at the end). Layout under run_dir:
///   checkpoints/<step>/generator.ckpt
///   checkpoints/<step>/discriminator.ckpt
///   checkpoints/<step>/trainstate.json
///   checkpoints/<step>/ledger.jsonl
/// Passing resume=true continues from the newest checkpoint; the resulting
/// ledger is bit-identical to an uninterrupted run with the same config.
RunResult run_training(Generator& gen, Discriminator& disc, const PyramidDataset& data,
                       const TrainConfig& cfg, const std::string& run_dir, bool resume = false,
                       std::function<void(const LedgerRow&)> on_step = {});

/// Newest checkpoint step under run_dir/checkpoints, if any.
std::optional<int64_t> latest_checkpoint_step(const std::string& run_dir);

} // namespace msrgan
