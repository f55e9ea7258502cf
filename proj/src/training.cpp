#include "msrgan/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "msrgan/checkpoint.hpp"
#include "msrgan/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace msrgan {

std::string ledger_row_json(const LedgerRow& r) {
    json row{{"step", r.step},
             {"g_loss", r.g_loss},
             {"d_loss", r.d_loss},
             {"content2", r.content2},
             {"content4", r.content4},
             {"content8", r.content8},
             {"grad_norm_g", r.grad_norm_g},
             {"grad_norm_d", r.grad_norm_d},
             {"gen_samples", r.gen_samples},
             {"disc_real", r.disc_real},
             {"disc_fake", r.disc_fake}};
    return row.dump();
}

LedgerRow ledger_row_from_json(const std::string& line) {
    const json row = json::parse(line);
    LedgerRow r;
    r.step = row.at("step").get<int64_t>();
    r.g_loss = row.at("g_loss").get<real>();
    r.d_loss = row.at("d_loss").get<real>();
    r.content2 = row.at("content2").get<real>();
    r.content4 = row.at("content4").get<real>();
    r.content8 = row.at("content8").get<real>();
    r.grad_norm_g = row.at("grad_norm_g").get<real>();
    r.grad_norm_d = row.at("grad_norm_d").get<real>();
    r.gen_samples = row.at("gen_samples").get<int>();
    r.disc_real = row.at("disc_real").get<int>();
    r.disc_fake = row.at("disc_fake").get<int>();
    return r;
}

ManifestDataset::ManifestDataset(DatasetManifest manifest) : manifest_(std::move(manifest)) {
    if (manifest_.records.empty()) throw EmptyManifest("dataset manifest has no records");
}

ScalePyramid ManifestDataset::load(size_t index) const {
    const ImageU8 img = read_png(manifest_.records.at(index).path);
    if (img.height != kHrSize || img.width != kHrSize)
        throw WrongShape("training image is not 224x224: " + manifest_.records.at(index).path);
    return build_pyramid(img);
}

MemoryDataset::MemoryDataset(std::vector<ImageF> hr_images) : images_(std::move(hr_images)) {
    if (images_.empty()) throw EmptyManifest("memory dataset has no images");
}

ScalePyramid MemoryDataset::load(size_t index) const { return build_pyramid(images_.at(index)); }

SeededLoader::SeededLoader(const PyramidDataset& data, uint64_t seed)
    : data_(&data), seed_(seed), aug_rng_(Rng::mix(seed, 0x617567)) {
    reshuffle();
}

void SeededLoader::reshuffle() {
    perm_.resize(data_->size());
    for (size_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
    Rng rng(Rng::mix(seed_, uint64_t(epoch_)));
    rng.shuffle(perm_);
    cursor_ = 0;
}

std::vector<SeededLoader::Drawn> SeededLoader::next_batch(int n) {
    std::vector<Drawn> out;
    out.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        if (cursor_ >= perm_.size()) {
            ++epoch_;
            reshuffle();
        }
        Drawn d;
        d.index = perm_[cursor_++];
        d.flipped = aug_rng_.bernoulli(0.5);
        const ScalePyramid p = data_->load(d.index);
        d.pyramid = d.flipped ? ScalePyramid{flip_horizontal(p.lr), flip_horizontal(p.x2),
                                             flip_horizontal(p.x4), flip_horizontal(p.x8)}
                              : p;
        out.push_back(std::move(d));
    }
    return out;
}

std::string SeededLoader::state_json() const {
    const auto s = aug_rng_.state();
    json j{{"epoch", epoch_}, {"cursor", cursor_}, {"aug_rng", {s[0], s[1], s[2], s[3]}}};
    return j.dump();
}

void SeededLoader::restore_state(const std::string& text) {
    const json j = json::parse(text);
    epoch_ = j.at("epoch").get<int64_t>();
    reshuffle();
    cursor_ = j.at("cursor").get<size_t>();
    const auto arr = j.at("aug_rng");
    aug_rng_.set_state({arr[0].get<uint64_t>(), arr[1].get<uint64_t>(), arr[2].get<uint64_t>(),
                        arr[3].get<uint64_t>()});
}

Var content_loss(const MultiScaleVar& out, const Tensor& t2, const Tensor& t4, const Tensor& t8,
                 const std::array<real, 3>& weights, ContentParts* parts) {
    const Var m2 = mae(out.sr2, Var::constant(t2));
    const Var m4 = mae(out.sr4, Var::constant(t4));
    const Var m8 = mae(out.sr8, Var::constant(t8));
    if (parts) *parts = {m2.value()[0], m4.value()[0], m8.value()[0]};
    return add(add(scale(m2, weights[0]), scale(m4, weights[1])), scale(m8, weights[2]));
}

Var patch_bce_loss(const Var& pred, real target) { return bce_mean(pred, target); }

TrainingEngine::TrainingEngine(Generator& gen, Discriminator& disc, const TrainConfig& cfg)
    : gen_(gen),
      disc_(disc),
      cfg_(cfg),
      adam_g_(gen.trainable_parameters(), cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2),
      adam_d_(disc.parameters(), cfg.lr_d, cfg.adam_beta1, cfg.adam_beta2) {}

namespace {

struct ScaleBatches {
    Tensor lr, i2, i4, i8;
};

ScaleBatches batches_from(const std::vector<SeededLoader::Drawn>& batch) {
    std::vector<ImageF> lr, i2, i4, i8;
    lr.reserve(batch.size());
    for (const auto& d : batch) {
        lr.push_back(d.pyramid.lr);
        i2.push_back(d.pyramid.x2);
        i4.push_back(d.pyramid.x4);
        i8.push_back(d.pyramid.x8);
    }
    return {batch_from_images(lr), batch_from_images(i2), batch_from_images(i4),
            batch_from_images(i8)};
}

void check_finite(real v, const char* what) {
    if (!std::isfinite(v)) throw NumericFailure(std::string(what) + " is not finite");
}

Tensor concat_batch_dim(const std::vector<const Tensor*>& parts) {
    const Tensor& first = *parts.front();
    std::vector<int> shape = first.shape();
    int total = 0;
    for (const Tensor* p : parts) total += p->dim(0);
    shape[0] = total;
    Tensor out(shape);
    int64_t off = 0;
    for (const Tensor* p : parts) {
        std::copy_n(p->data(), p->size(), out.data() + off);
        off += p->size();
    }
    return out;
}

} // namespace

GeneratorInputs TrainingEngine::prepare_cached(const std::vector<SeededLoader::Drawn>& batch) {
    if (!cache_enabled_) {
        std::vector<ImageF> lr;
        lr.reserve(batch.size());
        for (const auto& d : batch) lr.push_back(d.pyramid.lr);
        return gen_.prepare_inputs(batch_from_images(lr));
    }
    std::vector<const GeneratorInputs*> entries;
    entries.reserve(batch.size());
    for (const auto& d : batch) {
        const uint64_t key = uint64_t(d.index) * 2 + (d.flipped ? 1 : 0);
        auto it = cache_.find(key);
        if (it == cache_.end()) {
            GeneratorInputs inputs = gen_.prepare_inputs(tensor_from_image(d.pyramid.lr));
            it = cache_.emplace(key, std::move(inputs)).first;
        }
        entries.push_back(&it->second);
    }
    GeneratorInputs out;
    auto gather = [&](Tensor GeneratorInputs::* field) {
        std::vector<const Tensor*> parts;
        parts.reserve(entries.size());
        for (const GeneratorInputs* e : entries) parts.push_back(&(e->*field));
        return concat_batch_dim(parts);
    };
    out.bicubic2 = gather(&GeneratorInputs::bicubic2);
    out.bicubic4 = gather(&GeneratorInputs::bicubic4);
    out.bicubic8 = gather(&GeneratorInputs::bicubic8);
    out.feats2 = gather(&GeneratorInputs::feats2);
    out.feats4 = gather(&GeneratorInputs::feats4);
    out.feats8 = gather(&GeneratorInputs::feats8);
    return out;
}

real TrainingEngine::train_step_discriminator(const std::vector<SeededLoader::Drawn>& batch) {
    const ScaleBatches real_b = batches_from(batch);

    // Fakes come from the same samples' LR level, generated with the
    // generator frozen so no gradient graph reaches it.
    set_frozen(gen_.trainable_parameters(), true);
    const GeneratorInputs inputs = prepare_cached(batch);
    const MultiScaleVar fake = gen_.forward(real_b.lr, inputs);
    set_frozen(gen_.trainable_parameters(), false);

    const Var lr_var = disc_.config().inject_lr ? Var::constant(real_b.lr) : Var();
    const Var real_scores = disc_.forward(Var::constant(real_b.i8), Var::constant(real_b.i4),
                                          Var::constant(real_b.i2), lr_var);
    const Var fake_scores = disc_.forward(fake.sr8, fake.sr4, fake.sr2, lr_var);

    const Var loss = add(patch_bce_loss(real_scores, 1), patch_bce_loss(fake_scores, 0));
    check_finite(loss.value()[0], "discriminator loss");

    adam_d_.zero_grad();
    backward(loss);
    adam_d_.step();
    return loss.value()[0];
}

real TrainingEngine::train_step_generator(const std::vector<SeededLoader::Drawn>& batch,
                                          ContentParts* parts, real* adv_out) {
    const ScaleBatches b = batches_from(batch);

    set_frozen(disc_.parameters(), true);
    const GeneratorInputs inputs = prepare_cached(batch);
    const MultiScaleVar out = gen_.forward(b.lr, inputs);

    const Var lr_var = disc_.config().inject_lr ? Var::constant(b.lr) : Var();
    const Var adv = patch_bce_loss(disc_.forward(out.sr8, out.sr4, out.sr2, lr_var), 1);
    const Var content = content_loss(out, b.i2, b.i4, b.i8, cfg_.w_content, parts);
    const Var loss = add(scale(adv, cfg_.w_adv), content);
    check_finite(loss.value()[0], "generator loss");
    if (adv_out) *adv_out = adv.value()[0];

    adam_g_.zero_grad();
    backward(loss);
    adam_g_.step();
    set_frozen(disc_.parameters(), false);
    return loss.value()[0];
}

namespace {

void save_net_checkpoint(const std::string& path, const ParamList& params, const Adam& adam,
                         const std::string& kind) {
    CheckpointArchive archive;
    for (const auto& p : params) archive.tensors.emplace_back(p.name, p.var.value());
    for (const auto& [name, t] : adam.state_tensors()) archive.tensors.emplace_back("adam." + name, *t);
    archive.meta["kind"] = kind;
    archive.meta["adam_step"] = std::to_string(adam.step_count());
    save_checkpoint(path, archive);
}

void load_net_checkpoint(const std::string& path, ParamList& params, Adam& adam) {
    const CheckpointArchive archive = load_checkpoint(path);
    for (auto& p : params) {
        const Tensor* t = archive.find(p.name);
        if (!t || !t->same_shape(p.var.value()))
            throw CheckpointMismatch("parameter missing or reshaped in checkpoint: " + p.name);
        p.var.value() = *t;
    }
    for (const auto& [name, t] : archive.tensors) {
        if (name.rfind("adam.", 0) == 0) adam.load_state(name.substr(5), t);
    }
    adam.set_step_count(std::stoll(archive.meta.at("adam_step")));
}

} // namespace

std::optional<int64_t> latest_checkpoint_step(const std::string& run_dir) {
    const fs::path root = fs::path(run_dir) / "checkpoints";
    if (!fs::exists(root)) return std::nullopt;
    std::optional<int64_t> best;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        try {
            const int64_t step = std::stoll(entry.path().filename().string());
            if (fs::exists(entry.path() / "trainstate.json") &&
                (!best || step > *best))
                best = step;
        } catch (...) {
            continue;
        }
    }
    return best;
}

RunResult run_training(Generator& gen, Discriminator& disc, const PyramidDataset& data,
                       const TrainConfig& cfg, const std::string& run_dir, bool resume,
                       std::function<void(const LedgerRow&)> on_step) {
    TrainingEngine engine(gen, disc, cfg);
    const bool cache = cfg.feature_cache.value_or(data.size() <= 64);
    engine.set_feature_cache(cache);

    SeededLoader loader(data, cfg.seed);
    std::vector<LedgerRow> ledger;
    int64_t start_step = 0;

    const fs::path ckpt_root = fs::path(run_dir) / "checkpoints";
    fs::create_directories(ckpt_root);

    if (resume) {
        const auto latest = latest_checkpoint_step(run_dir);
        if (latest) {
            const fs::path dir = ckpt_root / std::to_string(*latest);
            load_net_checkpoint((dir / "generator.ckpt").string(), gen.trainable_parameters(),
                                engine.gen_optimizer());
            load_net_checkpoint((dir / "discriminator.ckpt").string(), disc.parameters(),
                                engine.disc_optimizer());
            std::ifstream state(dir / "trainstate.json");
            std::string text((std::istreambuf_iterator<char>(state)), std::istreambuf_iterator<char>());
            const json j = json::parse(text);
            start_step = j.at("step").get<int64_t>();
            loader.restore_state(j.at("loader").dump());
            std::ifstream lf(dir / "ledger.jsonl");
            std::string line;
            while (std::getline(lf, line))
                if (!line.empty()) ledger.push_back(ledger_row_from_json(line));
        }
    }

    auto write_checkpoint = [&](int64_t step) {
        const fs::path final_dir = ckpt_root / std::to_string(step);
        const fs::path tmp_dir = ckpt_root / ("." + std::to_string(step) + ".tmp");
        fs::remove_all(tmp_dir);
        fs::create_directories(tmp_dir);
        save_net_checkpoint((tmp_dir / "generator.ckpt").string(), gen.trainable_parameters(),
                            engine.gen_optimizer(), "generator");
        save_net_checkpoint((tmp_dir / "discriminator.ckpt").string(), disc.parameters(),
                            engine.disc_optimizer(), "discriminator");
        {
            std::ofstream lf(tmp_dir / "ledger.jsonl", std::ios::trunc);
            for (const auto& row : ledger) lf << ledger_row_json(row) << '\n';
        }
        {
            json state{{"step", step}, {"loader", json::parse(loader.state_json())}};
            std::ofstream sf(tmp_dir / "trainstate.json", std::ios::trunc);
            sf << state.dump(2) << '\n';
        }
        fs::remove_all(final_dir);
        fs::rename(tmp_dir, final_dir);
        return final_dir.string();
    };

    std::string last_dir;
    for (int64_t step = start_step + 1; step <= cfg.steps; ++step) {
        LedgerRow row;
        row.step = step;

        // A NumericFailure below aborts the run without touching the last
        // periodic checkpoint; the CLI reports exit code 3.
        const auto disc_batch = loader.next_batch(cfg.disc_batch);
        row.d_loss = engine.train_step_discriminator(disc_batch);
        row.grad_norm_d = grad_norm(disc.parameters());

        const auto gen_batch = loader.next_batch(cfg.gen_batch);
        ContentParts parts;
        row.g_loss = engine.train_step_generator(gen_batch, &parts);
        row.grad_norm_g = grad_norm(gen.trainable_parameters());
        row.content2 = parts.c2;
        row.content4 = parts.c4;
        row.content8 = parts.c8;
        row.gen_samples = cfg.gen_batch;
        row.disc_real = cfg.disc_batch;
        row.disc_fake = cfg.disc_batch;

        ledger.push_back(row);
        if (on_step) on_step(row);

        const bool due = cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0;
        if (due || step == cfg.steps) last_dir = write_checkpoint(step);
    }

    if (cfg.steps == start_step || cfg.steps == 0) {
        // Nothing to run; still emit a checkpoint of the current state.
        last_dir = write_checkpoint(start_step);
    }

    RunResult result;
    result.ledger = std::move(ledger);
    result.final_step = std::max(start_step, cfg.steps);
    result.checkpoint_dir = last_dir;
    return result;
}

} // namespace msrgan
