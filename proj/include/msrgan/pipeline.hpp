#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msrgan/clahe.hpp"
#include "msrgan/dicom.hpp"
#include "msrgan/image.hpp"
#include "msrgan/rng.hpp"

namespace msrgan {

/// Aligned multi-scale views of one sample; x8 is the ground truth.
struct ScalePyramid {
    ImageF lr;  // 28 x 28
    ImageF x2;  // 56 x 56
    ImageF x4;  // 112 x 112
    ImageF x8;  // 224 x 224
};

constexpr int kHrSize = 224;
constexpr int kLrSize = 28;

/// x8 = input; lower levels by successive 2x box downsampling, so means are
/// preserved and the low-res level is a deterministic function of the truth.
ScalePyramid build_pyramid(const ImageF& hr);
ScalePyramid build_pyramid(const ImageU8& hr);

/// Flips all levels together with probability 1/2.
ScalePyramid augment_flip(const ScalePyramid& p, Rng& rng);

struct SampleRecord {
    std::string path;
    std::string patient_id;
    SeriesKind series_kind = SeriesKind::axial;
    std::string split;  // "train" | "test"
    std::optional<bool> label;
};

struct DatasetManifest {
    std::vector<SampleRecord> records;
    std::string split;
    uint64_t seed = 0;

    std::vector<std::string> patient_ids() const;
};

/// Deterministic patient-level split: no patient appears on both sides.
/// Throws TooFewPatients when fewer than n_test_patients + 1 patients exist.
std::pair<DatasetManifest, DatasetManifest> split_by_patient(const std::vector<SampleRecord>& slices,
                                                             int n_test_patients, uint64_t seed);

struct ClinSigRecord {
    std::string image_path;
    bool label = false;
    std::string split;  // "train" | "test"
};

struct ClinSigManifest {
    std::vector<ClinSigRecord> records;
    bool sampled_with_replacement = false;
    uint64_t seed = 0;
};

struct LabeledImage {
    std::string path;
    bool label = false;
};

/// Balanced two-class sample: n_total/2 per class (with replacement when a
/// class is too small, flagged in the manifest), then a stratified 80/20
/// train/test split.
ClinSigManifest build_clinsig_manifest(const std::vector<LabeledImage>& metadata, int n_total,
                                       uint64_t seed);

void write_manifest_jsonl(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest_jsonl(const std::string& path);
void write_clinsig_jsonl(const std::string& path, const ClinSigManifest& m);
ClinSigManifest read_clinsig_jsonl(const std::string& path);

// ---- preprocessing driver ---------------------------------------------------

struct PreprocessConfig {
    std::string dicom_root;
    std::string out_root;
    ClaheParams clahe;
    int n_test_patients = 9;
    uint64_t seed = 0;
    std::optional<SeriesKind> series_filter;  // keep-only when set
    real max_failure_fraction = 0.01;
};

struct PreprocessStats {
    int found = 0;
    int converted = 0;
    int skipped_unchanged = 0;
    int failed = 0;
    int train_records = 0;
    int test_records = 0;
};

/// DICOM tree -> windowed/CLAHE 224x224 PNGs plus train/test manifests.
/// Idempotent: outputs whose bytes already match are not rewritten.
PreprocessStats run_preprocess(const PreprocessConfig& cfg);

/// Full per-slice transform (window -> CLAHE -> bicubic resize to 224).
ImageU8 preprocess_slice(const RawSlice& slice, const ClaheParams& clahe);

} // namespace msrgan
