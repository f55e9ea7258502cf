#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "msrgan/backbone.hpp"
#include "msrgan/classifier.hpp"
#include "msrgan/discriminator.hpp"
#include "msrgan/generator.hpp"
#include "msrgan/pipeline.hpp"
#include "msrgan/training.hpp"

namespace msrgan {

/// Minimal TOML reader/writer: [section] headers, scalar values (string,
/// integer, float, bool) and flat arrays. Enough for human-diffable run
/// config snapshots; nested tables are out of scope.
class TomlTable {
public:
    using Value = std::variant<std::string, int64_t, real, bool, std::vector<int64_t>,
                               std::vector<real>, std::vector<std::string>>;

    static TomlTable parse(const std::string& text);
    static TomlTable parse_file(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) const;
    real get_real(const std::string& section, const std::string& key, real fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<int64_t> get_int_array(const std::string& section, const std::string& key,
                                       std::vector<int64_t> fallback) const;
    std::vector<real> get_real_array(const std::string& section, const std::string& key,
                                     std::vector<real> fallback) const;

    void set(const std::string& section, const std::string& key, Value value);
    std::string serialize() const;

private:
    const Value* find(const std::string& section, const std::string& key) const;
    // section -> ordered key/value pairs
    std::map<std::string, std::vector<std::pair<std::string, Value>>> sections_;
};

/// Everything one run needs, mirroring the per-module configs. A snapshot is
/// written into the run directory before any work starts.
struct RunConfig {
    uint64_t seed = 0;
    std::string run_dir = "run";

    // [data]
    std::string dicom_root;
    std::string data_root;  // preprocess output root / training input root
    ClaheParams clahe;
    int n_test_patients = 9;
    std::optional<SeriesKind> series_filter;

    // [backbone]
    std::string backbone_preset = "desk";  // "desk" | "densenet121"
    std::string backbone_source;           // "" -> random:<seed>
    int backbone_growth = 12;
    std::vector<int> backbone_blocks = {4, 4, 4};
    int backbone_stem_kernel = 3;

    // [generator]
    GeneratorConfig generator;

    // [discriminator]
    DiscriminatorConfig discriminator;

    // [training]
    TrainConfig training;

    // [evaluation]
    ClassifierConfig classifier;
    ClassifierTrainConfig classifier_training;
    int clinsig_total = 4000;

    static RunConfig from_toml(const TomlTable& t);
    TomlTable to_toml() const;

    BackboneConfig backbone_config() const;
    std::string backbone_source_or_default() const;
};

} // namespace msrgan
