#include "msrgan/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "msrgan/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace msrgan {

ScalePyramid build_pyramid(const ImageF& hr) {
    if (hr.height != kHrSize || hr.width != kHrSize)
        throw WrongShape("build_pyramid expects a 224x224 input");
    ScalePyramid p;
    p.x8 = hr;
    p.x4 = downsample2_area(p.x8);
    p.x2 = downsample2_area(p.x4);
    p.lr = downsample2_area(p.x2);
    return p;
}

ScalePyramid build_pyramid(const ImageU8& hr) { return build_pyramid(to_unit(hr)); }

ScalePyramid augment_flip(const ScalePyramid& p, Rng& rng) {
    if (!rng.bernoulli(0.5)) return p;
    ScalePyramid out;
    out.lr = flip_horizontal(p.lr);
    out.x2 = flip_horizontal(p.x2);
    out.x4 = flip_horizontal(p.x4);
    out.x8 = flip_horizontal(p.x8);
    return out;
}

std::vector<std::string> DatasetManifest::patient_ids() const {
    std::set<std::string> ids;
    for (const auto& r : records) ids.insert(r.patient_id);
    return {ids.begin(), ids.end()};
}

std::pair<DatasetManifest, DatasetManifest> split_by_patient(const std::vector<SampleRecord>& slices,
                                                             int n_test_patients, uint64_t seed) {
    std::set<std::string> id_set;
    for (const auto& s : slices) id_set.insert(s.patient_id);
    if (int(id_set.size()) <= n_test_patients)
        throw TooFewPatients("need more than " + std::to_string(n_test_patients) + " patients, have " +
                             std::to_string(id_set.size()));

    std::vector<std::string> ids(id_set.begin(), id_set.end());  // sorted for determinism
    Rng rng(seed);
    rng.shuffle(ids);
    std::set<std::string> test_ids(ids.begin(), ids.begin() + n_test_patients);

    DatasetManifest train, test;
    train.split = "train";
    test.split = "test";
    train.seed = test.seed = seed;
    for (const auto& s : slices) {
        SampleRecord r = s;
        if (test_ids.count(r.patient_id)) {
            r.split = "test";
            test.records.push_back(std::move(r));
        } else {
            r.split = "train";
            train.records.push_back(std::move(r));
        }
    }
    return {std::move(train), std::move(test)};
}

ClinSigManifest build_clinsig_manifest(const std::vector<LabeledImage>& metadata, int n_total,
                                       uint64_t seed) {
    std::vector<const LabeledImage*> pos, neg;
    for (const auto& m : metadata) (m.label ? pos : neg).push_back(&m);
    if (pos.empty() || neg.empty()) throw EmptyClass("both ClinSig classes must be non-empty");

    const int per_class = n_total / 2;
    ClinSigManifest out;
    out.seed = seed;
    Rng rng(seed);

    auto sample_class = [&](std::vector<const LabeledImage*>& cls, bool label) {
        std::vector<const LabeledImage*> chosen;
        if (int(cls.size()) >= per_class) {
            rng.shuffle(cls);
            chosen.assign(cls.begin(), cls.begin() + per_class);
        } else {
            out.sampled_with_replacement = true;
            chosen.reserve(size_t(per_class));
            for (int i = 0; i < per_class; ++i)
                chosen.push_back(cls[size_t(rng.uniform_index(cls.size()))]);
        }
        // Stratified 80/20 inside each class keeps both splits balanced.
        const int n_train = per_class * 4 / 5;
        for (int i = 0; i < per_class; ++i) {
            out.records.push_back({chosen[size_t(i)]->path, label, i < n_train ? "train" : "test"});
        }
    };
    sample_class(pos, true);
    sample_class(neg, false);
    rng.shuffle(out.records);
    return out;
}

// ---- manifest serialization --------------------------------------------------

void write_manifest_jsonl(const std::string& path, const DatasetManifest& m) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("cannot open for writing: " + path);
    for (const auto& r : m.records) {
        json row{{"path", r.path},
                 {"patient_id", r.patient_id},
                 {"series_kind", to_string(r.series_kind)},
                 {"split", r.split}};
        if (r.label.has_value()) row["label"] = *r.label;
        f << row.dump() << '\n';
    }
}

DatasetManifest read_manifest_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open manifest: " + path);
    DatasetManifest m;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json row = json::parse(line);
        SampleRecord r;
        r.path = row.at("path").get<std::string>();
        r.patient_id = row.at("patient_id").get<std::string>();
        r.series_kind = series_kind_from_string(row.at("series_kind").get<std::string>());
        r.split = row.at("split").get<std::string>();
        if (row.contains("label")) r.label = row["label"].get<bool>();
        if (m.split.empty()) m.split = r.split;
        m.records.push_back(std::move(r));
    }
    return m;
}

void write_clinsig_jsonl(const std::string& path, const ClinSigManifest& m) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("cannot open for writing: " + path);
    json header{{"sampled_with_replacement", m.sampled_with_replacement}, {"seed", m.seed}};
    f << header.dump() << '\n';
    for (const auto& r : m.records) {
        f << json{{"path", r.image_path}, {"label", r.label}, {"split", r.split}}.dump() << '\n';
    }
}

ClinSigManifest read_clinsig_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open manifest: " + path);
    ClinSigManifest m;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json row = json::parse(line);
        if (first) {
            first = false;
            m.sampled_with_replacement = row.at("sampled_with_replacement").get<bool>();
            m.seed = row.at("seed").get<uint64_t>();
            continue;
        }
        m.records.push_back({row.at("path").get<std::string>(), row.at("label").get<bool>(),
                             row.at("split").get<std::string>()});
    }
    return m;
}

// ---- preprocessing -------------------------------------------------------------

ImageU8 preprocess_slice(const RawSlice& slice, const ClaheParams& clahe) {
    ImageU8 windowed = apply_window(slice);
    ImageU8 resized = resize_image(windowed, kHrSize, kHrSize, ResizeMethod::bicubic);
    return apply_clahe(resized, clahe);
}

PreprocessStats run_preprocess(const PreprocessConfig& cfg) {
    if (!fs::exists(cfg.dicom_root)) throw Error("DICOM root does not exist: " + cfg.dicom_root);

    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(cfg.dicom_root)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".dcm" || ext == ".DCM" || ext.empty()) files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw EmptyManifest("no DICOM found under " + cfg.dicom_root);

    PreprocessStats stats;
    stats.found = int(files.size());
    fs::create_directories(fs::path(cfg.out_root) / "images");

    std::vector<SampleRecord> records;
    std::map<std::string, int> per_series_counter;
    std::vector<std::string> failures;

    for (const std::string& file : files) {
        RawSlice slice;
        try {
            slice = load_dicom_slice(file);
        } catch (const Error& e) {
            ++stats.failed;
            failures.push_back(std::string(e.what()));
            continue;
        }
        if (cfg.series_filter && slice.series_kind != *cfg.series_filter) continue;

        const ImageU8 processed = preprocess_slice(slice, cfg.clahe);

        const int ordinal =
            per_series_counter[slice.patient_id + "/" + to_string(slice.series_kind)]++;
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%05d.png", to_string(slice.series_kind).c_str(), ordinal);
        const fs::path dir = fs::path(cfg.out_root) / "images" / slice.patient_id;
        fs::create_directories(dir);
        const fs::path out_path = dir / name;

        const std::vector<uint8_t> bytes = encode_png(processed);
        bool unchanged = false;
        if (fs::exists(out_path) && fs::file_size(out_path) == bytes.size()) {
            std::ifstream existing(out_path, std::ios::binary);
            std::vector<uint8_t> current((std::istreambuf_iterator<char>(existing)),
                                         std::istreambuf_iterator<char>());
            unchanged = current == bytes;
        }
        if (unchanged) {
            ++stats.skipped_unchanged;
        } else {
            std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
            f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
            if (!f) throw Error("short write: " + out_path.string());
            ++stats.converted;
        }

        SampleRecord r;
        r.path = out_path.string();
        r.patient_id = slice.patient_id;
        r.series_kind = slice.series_kind;
        records.push_back(std::move(r));
    }

    if (stats.failed > 0 &&
        real(stats.failed) > cfg.max_failure_fraction * real(stats.found)) {
        throw ParseError("too many unreadable DICOM files (" + std::to_string(stats.failed) + "/" +
                         std::to_string(stats.found) + "); first: " + failures.front());
    }
    if (records.empty()) throw EmptyManifest("no usable slices under " + cfg.dicom_root);

    auto [train, test] = split_by_patient(records, cfg.n_test_patients, cfg.seed);
    stats.train_records = int(train.records.size());
    stats.test_records = int(test.records.size());
    write_manifest_jsonl((fs::path(cfg.out_root) / "train_manifest.jsonl").string(), train);
    write_manifest_jsonl((fs::path(cfg.out_root) / "test_manifest.jsonl").string(), test);
    return stats;
}

} // namespace msrgan
