// msrgan: multi-scale gradient capsule GAN for 8x prostate-MRI
// super-resolution. Subcommands cover the full workflow: preprocess DICOM
// studies, train, evaluate, compute the task-specific similarity ratio,
// run single-image inference and render reports.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "msrgan/config.hpp"
#include "msrgan/evaluation.hpp"
#include "msrgan/png_io.hpp"
#include "msrgan/report.hpp"
#include "msrgan/sha256.hpp"

namespace fs = std::filesystem;
using namespace msrgan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUser = 2;
constexpr int kExitNumeric = 3;

struct CommonArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string ckpt;
    std::string out;
};

RunConfig load_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig::from_toml(TomlTable{})
                                             : RunConfig::from_toml(TomlTable::parse_file(args.config_path));
    if (args.seed) {
        cfg.seed = *args.seed;
        cfg.training.seed = *args.seed;
    }
    if (!args.out.empty()) cfg.run_dir = args.out;
    if (cfg.data_root.empty() || cfg.data_root == "data") {
        if (const char* env = std::getenv("MSRGAN_DATA_ROOT")) cfg.data_root = env;
    }
    return cfg;
}

/// Config snapshot plus a content hash of the inputs, written before any
/// side effect so a run can be reproduced from its run directory alone.
void write_run_snapshot(const RunConfig& cfg, const CommonArgs& args) {
    fs::create_directories(cfg.run_dir);
    {
        std::ofstream f(fs::path(cfg.run_dir) / "config.snapshot", std::ios::trunc);
        f << cfg.to_toml().serialize();
    }
    Sha256 h;
    if (!args.config_path.empty() && fs::exists(args.config_path)) {
        const std::string d = sha256_file_hex(args.config_path);
        h.update(d.data(), d.size());
    }
    for (const char* name : {"train_manifest.jsonl", "test_manifest.jsonl"}) {
        const fs::path p = fs::path(cfg.data_root) / name;
        if (fs::exists(p)) {
            const std::string d = sha256_file_hex(p.string());
            h.update(d.data(), d.size());
        }
    }
    std::ofstream f(fs::path(cfg.run_dir) / "inputs.hash", std::ios::trunc);
    f << h.hex_digest() << '\n';
}

std::shared_ptr<Backbone> make_backbone(const RunConfig& cfg) {
    return std::make_shared<Backbone>(
        load_backbone_weights(cfg.backbone_source_or_default(), cfg.backbone_config()));
}

std::vector<ImageF> load_manifest_images(const DatasetManifest& manifest) {
    std::vector<ImageF> out;
    out.reserve(manifest.records.size());
    for (const auto& r : manifest.records) out.push_back(to_unit(read_png(r.path)));
    return out;
}

std::map<std::string, bool> read_clinsig_labels(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open ClinSig labels: " + path);
    std::map<std::string, bool> labels;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        labels[j.at("patient_id").get<std::string>()] = j.at("clinsig").get<bool>();
    }
    return labels;
}

struct ClassifierBundle {
    ClinSigClassifier net;
    std::vector<LabeledCase> test_cases;
};

/// Loads run_dir/classifier.ckpt when present, otherwise trains on the
/// balanced ClinSig manifest (building it first if needed) and saves both.
ClassifierBundle prepare_classifier(const RunConfig& cfg) {
    const fs::path manifest_path = fs::path(cfg.data_root) / "clinsig_manifest.jsonl";
    if (!fs::exists(manifest_path)) {
        const std::string labels_path = (fs::path(cfg.data_root) / "clinsig_labels.jsonl").string();
        if (!fs::exists(labels_path))
            throw Error("no ClinSig labels at " + labels_path +
                        "; provide clinsig_labels.jsonl next to the manifests");
        const auto labels = read_clinsig_labels(labels_path);
        const DatasetManifest train =
            read_manifest_jsonl((fs::path(cfg.data_root) / "train_manifest.jsonl").string());
        std::vector<LabeledImage> metadata;
        for (const auto& r : train.records) {
            const auto it = labels.find(r.patient_id);
            if (it != labels.end()) metadata.push_back({r.path, it->second});
        }
        const int n_total = std::min<int>(cfg.clinsig_total, int(metadata.size()) * 2);
        const ClinSigManifest manifest = build_clinsig_manifest(metadata, std::max(n_total, 10), cfg.seed);
        write_clinsig_jsonl(manifest_path.string(), manifest);
    }

    const ClinSigManifest manifest = read_clinsig_jsonl(manifest_path.string());
    std::vector<LabeledCase> train_cases, test_cases;
    for (const auto& r : manifest.records) {
        LabeledCase c{to_unit(read_png(r.image_path)), r.label};
        (r.split == "train" ? train_cases : test_cases).push_back(std::move(c));
    }

    ClassifierBundle bundle{ClinSigClassifier(cfg.classifier), std::move(test_cases)};
    const fs::path ckpt = fs::path(cfg.run_dir) / "classifier.ckpt";
    if (fs::exists(ckpt)) {
        bundle.net.load(ckpt.string());
    } else {
        const ClassifierFit fit =
            train_clinsig_classifier(bundle.net, train_cases, bundle.test_cases, cfg.classifier_training);
        std::cout << "classifier trained: test accuracy " << fit.test_accuracy << ", test loss "
                  << fit.test_loss << "\n";
        fs::create_directories(cfg.run_dir);
        bundle.net.save(ckpt.string());
    }
    return bundle;
}

int cmd_preprocess(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    if (cfg.dicom_root.empty()) {
        std::cerr << "error: data.dicom_root is not set\n";
        return kExitUser;
    }
    write_run_snapshot(cfg, args);
    PreprocessConfig pc;
    pc.dicom_root = cfg.dicom_root;
    pc.out_root = cfg.data_root;
    pc.clahe = cfg.clahe;
    pc.n_test_patients = cfg.n_test_patients;
    pc.seed = cfg.seed;
    pc.series_filter = cfg.series_filter;
    const PreprocessStats stats = run_preprocess(pc);
    std::cout << "found " << stats.found << " files, converted " << stats.converted << ", unchanged "
              << stats.skipped_unchanged << ", failed " << stats.failed << "\n"
              << "train records " << stats.train_records << ", test records " << stats.test_records
              << "\n";
    return kExitOk;
}

int cmd_train(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    const fs::path train_manifest = fs::path(cfg.data_root) / "train_manifest.jsonl";
    if (!fs::exists(train_manifest)) {
        std::cerr << "error: missing manifest " << train_manifest << " (run preprocess first)\n";
        return kExitUser;
    }
    write_run_snapshot(cfg, args);

    auto backbone = make_backbone(cfg);
    Generator gen(cfg.generator, backbone);
    Discriminator disc(cfg.discriminator);
    ManifestDataset data(read_manifest_jsonl(train_manifest.string()));

    const bool resume = latest_checkpoint_step(cfg.run_dir).has_value();
    if (resume) std::cout << "resuming from step " << *latest_checkpoint_step(cfg.run_dir) << "\n";

    const RunResult result =
        run_training(gen, disc, data, cfg.training, cfg.run_dir, resume, [](const LedgerRow& row) {
            if (row.step % 50 == 0 || row.step <= 5)
                std::cout << "step " << row.step << "  g_loss " << row.g_loss << "  d_loss "
                          << row.d_loss << "  mae8 " << row.content8 << "\n";
        });

    const size_t tail = std::min<size_t>(5, result.ledger.size());
    std::cout << "--- ledger tail ---\n";
    for (size_t i = result.ledger.size() - tail; i < result.ledger.size(); ++i)
        std::cout << ledger_row_json(result.ledger[i]) << "\n";
    std::cout << "final checkpoint: " << result.checkpoint_dir << "\n";
    return kExitOk;
}

SrFunction load_generator(const RunConfig& cfg, const std::string& ckpt,
                          std::shared_ptr<Generator>* out_gen) {
    auto backbone = make_backbone(cfg);
    auto gen = std::make_shared<Generator>(cfg.generator, backbone);
    gen->load(ckpt);
    if (out_gen) *out_gen = gen;
    return [gen](const ImageF& lr) { return gen->forward(lr); };
}

std::string resolve_ckpt(const RunConfig& cfg, const std::string& explicit_ckpt) {
    if (!explicit_ckpt.empty()) return explicit_ckpt;
    const auto step = latest_checkpoint_step(cfg.run_dir);
    if (!step) throw Error("no checkpoint under " + cfg.run_dir + "; pass --ckpt");
    return (fs::path(cfg.run_dir) / "checkpoints" / std::to_string(*step) / "generator.ckpt").string();
}

int cmd_evaluate(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    const fs::path test_manifest = fs::path(cfg.data_root) / "test_manifest.jsonl";
    if (!fs::exists(test_manifest)) {
        std::cerr << "error: missing manifest " << test_manifest << "\n";
        return kExitUser;
    }
    write_run_snapshot(cfg, args);

    const std::string ckpt = resolve_ckpt(cfg, args.ckpt);
    std::shared_ptr<Generator> gen;
    const SrFunction sr = load_generator(cfg, ckpt, &gen);
    const std::vector<ImageF> images = load_manifest_images(read_manifest_jsonl(test_manifest.string()));

    std::optional<ClassifierBundle> classifier;
    const fs::path classifier_ckpt = fs::path(cfg.run_dir) / "classifier.ckpt";
    const fs::path clinsig_manifest = fs::path(cfg.data_root) / "clinsig_manifest.jsonl";
    if (fs::exists(classifier_ckpt) && fs::exists(clinsig_manifest)) classifier = prepare_classifier(cfg);

    MetricsReport report =
        evaluate_model(sr, images, classifier ? &classifier->net : nullptr,
                       classifier ? &classifier->test_cases : nullptr);
    report.generator_params = count_parameters(gen->all_parameters());
    Discriminator disc(cfg.discriminator);
    report.discriminator_params = count_parameters(disc.parameters());

    const fs::path reports = fs::path(cfg.run_dir) / "reports";
    fs::create_directories(reports);
    {
        std::ofstream f(reports / "metrics.json", std::ios::trunc);
        f << metrics_report_to_json(report) << '\n';
    }
    const std::string tables = render_report_tables(report);
    {
        std::ofstream f(reports / "metrics.txt", std::ios::trunc);
        f << tables;
    }
    std::cout << tables;
    return kExitOk;
}

int cmd_tssa(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    write_run_snapshot(cfg, args);

    ClassifierBundle classifier = prepare_classifier(cfg);
    const std::string ckpt = resolve_ckpt(cfg, args.ckpt);
    const SrFunction sr = load_generator(cfg, ckpt, nullptr);

    const std::vector<LabeledCase> sr_cases = super_resolve_cases(sr, classifier.test_cases);
    const TssaResult result = tssa(classifier.net, classifier.test_cases, sr_cases);

    const fs::path reports = fs::path(cfg.run_dir) / "reports";
    fs::create_directories(reports);
    {
        nlohmann::json j{{"tssa", result.tssa},
                         {"accuracy_gt", result.metric_gt},
                         {"accuracy_sr", result.metric_sr},
                         {"loss_gt", result.loss_gt},
                         {"loss_sr", result.loss_sr}};
        std::ofstream f(reports / "tssa.json", std::ios::trunc);
        f << j.dump(2) << '\n';
    }
    std::cout << "accuracy gt " << result.metric_gt << ", accuracy sr " << result.metric_sr
              << ", TSSA " << result.tssa << "\n";
    return kExitOk;
}

int cmd_infer(const CommonArgs& args, const std::string& input_path) {
    RunConfig cfg = load_config(args);
    if (!fs::exists(input_path)) {
        std::cerr << "error: input image not found: " << input_path << "\n";
        return kExitUser;
    }
    write_run_snapshot(cfg, args);

    const std::string ckpt = resolve_ckpt(cfg, args.ckpt);
    const SrFunction sr = load_generator(cfg, ckpt, nullptr);

    const ImageU8 raw = read_png(input_path);
    ImageF input = to_unit(raw);
    ImageF truth;
    ImageF lr;
    if (input.height == kLrSize && input.width == kLrSize) {
        lr = input;
        truth = bicubic_upsample(lr, 8);
    } else {
        // Convenience path: treat larger inputs as ground truth.
        const ImageF hr = resize_image(input, kHrSize, kHrSize, ResizeMethod::bicubic);
        lr = build_pyramid(hr).lr;
        truth = hr;
    }

    const MultiScaleOutput out = sr(lr);
    const fs::path samples = fs::path(cfg.run_dir) / "samples";
    fs::create_directories(samples);
    write_png((samples / "sr2.png").string(), to_u8(out.sr2));
    write_png((samples / "sr4.png").string(), to_u8(out.sr4));
    write_png((samples / "sr8.png").string(), to_u8(out.sr8));

    ImageF bicubic = bicubic_upsample(lr, 8);
    for (real& v : bicubic.pixels) v = std::clamp(v, real(0), real(1));
    const ImageU8 panel = render_panel(
        {{"GT", truth}, {"MODEL", out.sr8}, {"BICUBIC", bicubic}, {"LR", lr}});
    write_png((samples / "panel.png").string(), panel);
    std::cout << "wrote sr2/sr4/sr8 and panel under " << samples << "\n";
    return kExitOk;
}

int cmd_report(const CommonArgs& args) {
    RunConfig cfg = load_config(args);
    const fs::path reports = fs::path(cfg.run_dir) / "reports";
    const fs::path metrics_path = reports / "metrics.json";
    if (!fs::exists(metrics_path)) {
        std::cerr << "error: no metrics at " << metrics_path << " (run evaluate first)\n";
        return kExitUser;
    }
    std::ifstream f(metrics_path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const MetricsReport report = metrics_report_from_json(text);

    std::cout << render_report_tables(report);
    if (!report.per_image_psnr_model.empty()) {
        const ImageU8 hist = render_histogram(report.per_image_psnr_model,
                                              report.per_image_psnr_bicubic, "PSNR DB");
        write_png((reports / "psnr_hist.png").string(), hist);
        std::cout << "wrote " << (reports / "psnr_hist.png") << "\n";
    }
    return kExitOk;
}

int cmd_synth(const std::string& out_dir, int patients, int slices, int size, uint64_t seed) {
    Rng rng(seed);
    fs::create_directories(out_dir);
    std::ofstream labels(fs::path(out_dir) / "clinsig_labels.jsonl", std::ios::trunc);
    for (int p = 0; p < patients; ++p) {
        char pid[16];
        std::snprintf(pid, sizeof(pid), "P%03d", p);
        const bool clinsig = p % 2 == 0;
        labels << nlohmann::json{{"patient_id", pid}, {"clinsig", clinsig}}.dump() << '\n';
        const fs::path dir = fs::path(out_dir) / pid / "study0";
        fs::create_directories(dir);
        for (int s = 0; s < slices; ++s) {
            SyntheticDicom d;
            d.rows = d.cols = size;
            d.patient_id = pid;
            d.series_description = s % 3 == 0 ? "t2 sag" : "t2 tra axial";
            d.instance_number = s + 1;
            d.include_window = true;
            d.wl = 2048;
            d.ww = 4096;
            d.pixels.resize(size_t(size) * size_t(size));
            // Smooth anatomy-ish blobs plus noise; ClinSig-positive patients
            // get a bright focal lesion so a classifier has signal to learn.
            const real cx = size / 2.0 + rng.uniform(-size / 8.0, size / 8.0);
            const real cy = size / 2.0 + rng.uniform(-size / 8.0, size / 8.0);
            const real lesion_x = cx + rng.uniform(-size / 6.0, size / 6.0);
            const real lesion_y = cy + rng.uniform(-size / 6.0, size / 6.0);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const real dx = (x - cx) / (size / 3.0), dy = (y - cy) / (size / 3.0);
                    real v = 2048 * std::exp(-(dx * dx + dy * dy));
                    v += 300 * std::sin(x * 0.21) * std::cos(y * 0.17);
                    if (clinsig) {
                        const real lx = (x - lesion_x) / (size / 14.0);
                        const real ly = (y - lesion_y) / (size / 14.0);
                        v += 1500 * std::exp(-(lx * lx + ly * ly));
                    }
                    v += rng.uniform(0, 120);
                    d.pixels[size_t(y) * size_t(size) + size_t(x)] =
                        uint16_t(std::clamp<real>(v, 0, 4095));
                }
            char name[32];
            std::snprintf(name, sizeof(name), "slice%03d.dcm", s);
            write_synthetic_dicom((dir / name).string(), d);
        }
    }
    std::cout << "wrote " << patients << " synthetic patients (" << patients * slices
              << " slices) under " << out_dir << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-scale gradient capsule GAN for prostate MRI super-resolution"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string infer_input;
    std::string synth_out = "synthetic";
    int synth_patients = 12, synth_slices = 4, synth_size = 160;
    uint64_t synth_seed = 0;

    auto add_common = [&](CLI::App* cmd, bool with_ckpt = false) {
        cmd->add_option("--config", common.config_path, "TOML run configuration");
        cmd->add_option("--seed", common.seed, "Override the run seed");
        cmd->add_option("--out", common.out, "Run directory override");
        if (with_ckpt) cmd->add_option("--ckpt", common.ckpt, "Generator checkpoint path");
    };

    CLI::App* preprocess = app.add_subcommand("preprocess", "DICOM tree to PNGs and manifests");
    add_common(preprocess);
    CLI::App* train = app.add_subcommand("train", "Adversarial training (resumes automatically)");
    add_common(train);
    CLI::App* evaluate = app.add_subcommand("evaluate", "Metrics report against the test manifest");
    add_common(evaluate, true);
    CLI::App* tssa_cmd = app.add_subcommand("tssa", "Task-specific similarity assessment");
    add_common(tssa_cmd, true);
    CLI::App* infer = app.add_subcommand("infer", "Super-resolve one PNG");
    add_common(infer, true);
    infer->add_option("input", infer_input, "Input PNG (28x28, larger images are downsampled)")
        ->required();
    CLI::App* report = app.add_subcommand("report", "Render tables and plots from metrics.json");
    add_common(report);
    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic DICOM tree for smoke tests");
    synth->add_option("--out", synth_out, "Output directory");
    synth->add_option("--patients", synth_patients, "Number of patients");
    synth->add_option("--slices", synth_slices, "Slices per patient");
    synth->add_option("--size", synth_size, "Slice side length in pixels");
    synth->add_option("--seed", synth_seed, "Generation seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (preprocess->parsed()) return cmd_preprocess(common);
        if (train->parsed()) return cmd_train(common);
        if (evaluate->parsed()) return cmd_evaluate(common);
        if (tssa_cmd->parsed()) return cmd_tssa(common);
        if (infer->parsed()) return cmd_infer(common, infer_input);
        if (report->parsed()) return cmd_report(common);
        if (synth->parsed()) return cmd_synth(synth_out, synth_patients, synth_slices, synth_size, synth_seed);
    } catch (const NumericFailure& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUser;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUser;
    }
    return kExitUser;
}
