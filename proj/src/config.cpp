#include "msrgan/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace msrgan {

namespace {

std::string strip(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

TomlTable::Value parse_scalar(const std::string& raw) {
    const std::string s = strip(raw);
    if (s.empty()) throw ParseError("empty TOML value");
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"') throw ParseError("unterminated string: " + s);
        std::string out;
        for (size_t i = 1; i + 1 < s.size(); ++i) {
            if (s[i] == '\\' && i + 2 < s.size()) {
                ++i;
                switch (s[i]) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    default: out.push_back(s[i]);
                }
            } else {
                out.push_back(s[i]);
            }
        }
        return out;
    }
    if (s == "true") return true;
    if (s == "false") return false;
    const bool looks_float = s.find_first_of(".eE") != std::string::npos &&
                             s.find_first_not_of("+-0123456789.eE") == std::string::npos;
    try {
        if (looks_float) return std::stod(s);
        size_t pos = 0;
        const int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw ParseError("bad TOML number: " + s);
        return v;
    } catch (const ParseError&) {
        throw;
    } catch (...) {
        throw ParseError("bad TOML value: " + s);
    }
}

TomlTable::Value parse_value(const std::string& raw) {
    const std::string s = strip(raw);
    if (s.empty() || s.front() != '[') return parse_scalar(s);
    if (s.back() != ']') throw ParseError("unterminated array: " + s);

    std::vector<std::string> parts;
    std::string cur;
    bool in_string = false;
    for (size_t i = 1; i + 1 < s.size(); ++i) {
        const char c = s[i];
        if (c == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
        if (c == ',' && !in_string) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!strip(cur).empty()) parts.push_back(cur);

    if (parts.empty()) return std::vector<int64_t>{};
    std::vector<TomlTable::Value> scalars;
    for (const auto& p : parts) scalars.push_back(parse_scalar(p));
    if (std::holds_alternative<std::string>(scalars[0])) {
        std::vector<std::string> out;
        for (auto& v : scalars) out.push_back(std::get<std::string>(v));
        return out;
    }
    if (std::holds_alternative<real>(scalars[0])) {
        std::vector<real> out;
        for (auto& v : scalars)
            out.push_back(std::holds_alternative<real>(v) ? std::get<real>(v)
                                                          : real(std::get<int64_t>(v)));
        return out;
    }
    bool any_real = false;
    for (auto& v : scalars) any_real = any_real || std::holds_alternative<real>(v);
    if (any_real) {
        std::vector<real> out;
        for (auto& v : scalars)
            out.push_back(std::holds_alternative<real>(v) ? std::get<real>(v)
                                                          : real(std::get<int64_t>(v)));
        return out;
    }
    std::vector<int64_t> out;
    for (auto& v : scalars) out.push_back(std::get<int64_t>(v));
    return out;
}

std::string serialize_value(const TomlTable::Value& v) {
    std::ostringstream os;
    os.precision(17);
    if (const auto* s = std::get_if<std::string>(&v)) {
        os << '"';
        for (char c : *s) {
            if (c == '"' || c == '\\') os << '\\';
            os << c;
        }
        os << '"';
    } else if (const auto* i = std::get_if<int64_t>(&v)) {
        os << *i;
    } else if (const auto* r = std::get_if<real>(&v)) {
        os << *r;
        if (os.str().find_first_of(".eE") == std::string::npos) os << ".0";
    } else if (const auto* b = std::get_if<bool>(&v)) {
        os << (*b ? "true" : "false");
    } else if (const auto* vi = std::get_if<std::vector<int64_t>>(&v)) {
        os << '[';
        for (size_t k = 0; k < vi->size(); ++k) os << (k ? ", " : "") << (*vi)[k];
        os << ']';
    } else if (const auto* vr = std::get_if<std::vector<real>>(&v)) {
        os << '[';
        for (size_t k = 0; k < vr->size(); ++k) os << (k ? ", " : "") << (*vr)[k];
        os << ']';
    } else if (const auto* vs = std::get_if<std::vector<std::string>>(&v)) {
        os << '[';
        for (size_t k = 0; k < vs->size(); ++k) {
            os << (k ? ", " : "") << '"' << (*vs)[k] << '"';
        }
        os << ']';
    }
    return os.str();
}

} // namespace

TomlTable TomlTable::parse(const std::string& text) {
    TomlTable t;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // Strip comments outside strings.
        bool in_string = false;
        for (size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
            if (line[i] == '#' && !in_string) {
                line = line.substr(0, i);
                break;
            }
        }
        const std::string s = strip(line);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ParseError("bad section header at line " + std::to_string(lineno));
            section = strip(s.substr(1, s.size() - 2));
            continue;
        }
        const size_t eq = s.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value at line " + std::to_string(lineno));
        const std::string key = strip(s.substr(0, eq));
        if (key.empty()) throw ParseError("empty key at line " + std::to_string(lineno));
        t.set(section, key, parse_value(s.substr(eq + 1)));
    }
    return t;
}

TomlTable TomlTable::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse(text);
}

const TomlTable::Value* TomlTable::find(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    if (it == sections_.end()) return nullptr;
    for (const auto& [k, v] : it->second)
        if (k == key) return &v;
    return nullptr;
}

bool TomlTable::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

std::string TomlTable::get_string(const std::string& section, const std::string& key,
                                  const std::string& fallback) const {
    const Value* v = find(section, key);
    if (!v) return fallback;
    if (const auto* s = std::get_if<std::string>(v)) return *s;
    throw ParseError("config key " + section + "." + key + " is not a string");
}

int64_t TomlTable::get_int(const std::string& section, const std::string& key, int64_t fallback) const {
    const Value* v = find(section, key);
    if (!v) return fallback;
    if (const auto* i = std::get_if<int64_t>(v)) return *i;
    throw ParseError("config key " + section + "." + key + " is not an integer");
}

real TomlTable::get_real(const std::string& section, const std::string& key, real fallback) const {
    const Value* v = find(section, key);
    if (!v) return fallback;
    if (const auto* r = std::get_if<real>(v)) return *r;
    if (const auto* i = std::get_if<int64_t>(v)) return real(*i);
    throw ParseError("config key " + section + "." + key + " is not a number");
}

bool TomlTable::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const Value* v = find(section, key);
    if (!v) return fallback;
    if (const auto* b = std::get_if<bool>(v)) return *b;
    throw ParseError("config key " + section + "." + key + " is not a bool");
}

std::vector<int64_t> TomlTable::get_int_array(const std::string& section, const std::string& key,
                                              std::vector<int64_t> fallback) const {
    const Value* v = find(section, key);
    if (!v) return fallback;
    if (const auto* a = std::get_if<std::vector<int64_t>>(v)) return *a;
    throw ParseError("config key " + section + "." + key + " is not an integer array");
}

std::vector<real> TomlTable::get_real_array(const std::string& section, const std::string& key,
                                            std::vector<real> fallback) const {
    const Value* v = find(section, key);
    if (!v) return fallback;
    if (const auto* a = std::get_if<std::vector<real>>(v)) return *a;
    if (const auto* ai = std::get_if<std::vector<int64_t>>(v)) {
        std::vector<real> out(ai->begin(), ai->end());
        return out;
    }
    throw ParseError("config key " + section + "." + key + " is not a number array");
}

void TomlTable::set(const std::string& section, const std::string& key, Value value) {
    auto& entries = sections_[section];
    for (auto& [k, v] : entries) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    entries.emplace_back(key, std::move(value));
}

std::string TomlTable::serialize() const {
    std::ostringstream os;
    const auto root = sections_.find("");
    if (root != sections_.end()) {
        for (const auto& [k, v] : root->second) os << k << " = " << serialize_value(v) << '\n';
    }
    for (const auto& [name, entries] : sections_) {
        if (name.empty()) continue;
        os << '\n' << '[' << name << ']' << '\n';
        for (const auto& [k, v] : entries) os << k << " = " << serialize_value(v) << '\n';
    }
    return os.str();
}

RunConfig RunConfig::from_toml(const TomlTable& t) {
    RunConfig c;
    c.seed = uint64_t(t.get_int("", "seed", 0));
    c.run_dir = t.get_string("", "run_dir", "run");

    c.dicom_root = t.get_string("data", "dicom_root", "");
    c.data_root = t.get_string("data", "data_root", "data");
    c.clahe.clip_limit = t.get_real("data", "clahe_clip_limit", 2.0);
    c.clahe.tiles_x = int(t.get_int("data", "clahe_tiles", 8));
    c.clahe.tiles_y = c.clahe.tiles_x;
    c.n_test_patients = int(t.get_int("data", "n_test_patients", 9));
    const std::string filter = t.get_string("data", "series_filter", "");
    if (!filter.empty()) c.series_filter = series_kind_from_string(filter);

    c.backbone_preset = t.get_string("backbone", "preset", "desk");
    c.backbone_source = t.get_string("backbone", "source", "");
    c.backbone_growth = int(t.get_int("backbone", "growth_rate", c.backbone_preset == "densenet121" ? 32 : 12));
    {
        std::vector<int64_t> def = c.backbone_preset == "densenet121"
                                       ? std::vector<int64_t>{6, 12, 24, 16}
                                       : std::vector<int64_t>{4, 4, 4};
        const auto blocks = t.get_int_array("backbone", "block_layers", def);
        c.backbone_blocks.assign(blocks.begin(), blocks.end());
    }
    c.backbone_stem_kernel =
        int(t.get_int("backbone", "stem_kernel", c.backbone_preset == "densenet121" ? 7 : 3));

    c.generator.base_channels = int(t.get_int("generator", "base_channels", 64));
    c.generator.residual_blocks_per_scale = int(t.get_int("generator", "residual_blocks_per_scale", 1));
    c.generator.leaky_slope = t.get_real("generator", "leaky_slope", 0.2);
    c.generator.zero_init_heads = t.get_bool("generator", "zero_init_heads", true);
    c.generator.weights_seed = uint64_t(t.get_int("generator", "weights_seed", int64_t(c.seed ^ 0x67656e)));

    {
        const auto widths = t.get_int_array("discriminator", "widths", {32, 64, 128});
        c.discriminator.widths.assign(widths.begin(), widths.end());
    }
    c.discriminator.extra_downsample = int(t.get_int("discriminator", "extra_downsample", 0));
    c.discriminator.routing_iterations = int(t.get_int("discriminator", "routing_iterations", 3));
    c.discriminator.inject_lr = t.get_bool("discriminator", "inject_lr", false);
    c.discriminator.leaky_slope = t.get_real("discriminator", "leaky_slope", 0.2);
    c.discriminator.weights_seed =
        uint64_t(t.get_int("discriminator", "weights_seed", int64_t(c.seed ^ 0x646973)));

    c.training.gen_batch = int(t.get_int("training", "gen_batch", 32));
    c.training.disc_batch = int(t.get_int("training", "disc_batch", 8));
    c.training.steps = t.get_int("training", "steps", 0);
    c.training.lr_g = t.get_real("training", "lr_g", 1e-4);
    c.training.lr_d = t.get_real("training", "lr_d", 1e-4);
    c.training.adam_beta1 = t.get_real("training", "adam_beta1", 0.5);
    c.training.adam_beta2 = t.get_real("training", "adam_beta2", 0.999);
    c.training.w_adv = t.get_real("training", "w_adv", 1e-3);
    {
        const auto w = t.get_real_array("training", "w_content", {1, 1, 1});
        if (w.size() != 3) throw ParseError("training.w_content needs three weights");
        c.training.w_content = {w[0], w[1], w[2]};
    }
    c.training.seed = uint64_t(t.get_int("training", "seed", int64_t(c.seed)));
    c.training.checkpoint_every = t.get_int("training", "checkpoint_every", 0);
    if (t.has("training", "feature_cache"))
        c.training.feature_cache = t.get_bool("training", "feature_cache", false);

    {
        const auto widths = t.get_int_array("evaluation", "classifier_widths", {8, 16, 32, 64});
        c.classifier.widths.assign(widths.begin(), widths.end());
    }
    c.classifier.weights_seed = uint64_t(t.get_int("evaluation", "classifier_seed", int64_t(c.seed ^ 0x636c66)));
    c.classifier_training.epochs = int(t.get_int("evaluation", "classifier_epochs", 10));
    c.classifier_training.batch = int(t.get_int("evaluation", "classifier_batch", 16));
    c.classifier_training.lr = t.get_real("evaluation", "classifier_lr", 1e-3);
    c.classifier_training.seed = uint64_t(t.get_int("evaluation", "classifier_train_seed", int64_t(c.seed)));
    c.clinsig_total = int(t.get_int("evaluation", "clinsig_total", 4000));
    return c;
}

TomlTable RunConfig::to_toml() const {
    TomlTable t;
    t.set("", "seed", int64_t(seed));
    t.set("", "run_dir", run_dir);

    t.set("data", "dicom_root", dicom_root);
    t.set("data", "data_root", data_root);
    t.set("data", "clahe_clip_limit", clahe.clip_limit);
    t.set("data", "clahe_tiles", int64_t(clahe.tiles_x));
    t.set("data", "n_test_patients", int64_t(n_test_patients));
    if (series_filter) t.set("data", "series_filter", to_string(*series_filter));

    t.set("backbone", "preset", backbone_preset);
    t.set("backbone", "source", backbone_source);
    t.set("backbone", "growth_rate", int64_t(backbone_growth));
    t.set("backbone", "block_layers",
          std::vector<int64_t>(backbone_blocks.begin(), backbone_blocks.end()));
    t.set("backbone", "stem_kernel", int64_t(backbone_stem_kernel));

    t.set("generator", "base_channels", int64_t(generator.base_channels));
    t.set("generator", "residual_blocks_per_scale", int64_t(generator.residual_blocks_per_scale));
    t.set("generator", "leaky_slope", generator.leaky_slope);
    t.set("generator", "zero_init_heads", generator.zero_init_heads);
    t.set("generator", "weights_seed", int64_t(generator.weights_seed));

    t.set("discriminator", "widths",
          std::vector<int64_t>(discriminator.widths.begin(), discriminator.widths.end()));
    t.set("discriminator", "extra_downsample", int64_t(discriminator.extra_downsample));
    t.set("discriminator", "routing_iterations", int64_t(discriminator.routing_iterations));
    t.set("discriminator", "inject_lr", discriminator.inject_lr);
    t.set("discriminator", "leaky_slope", discriminator.leaky_slope);
    t.set("discriminator", "weights_seed", int64_t(discriminator.weights_seed));

    t.set("training", "gen_batch", int64_t(training.gen_batch));
    t.set("training", "disc_batch", int64_t(training.disc_batch));
    t.set("training", "steps", training.steps);
    t.set("training", "lr_g", training.lr_g);
    t.set("training", "lr_d", training.lr_d);
    t.set("training", "adam_beta1", training.adam_beta1);
    t.set("training", "adam_beta2", training.adam_beta2);
    t.set("training", "w_adv", training.w_adv);
    t.set("training", "w_content",
          std::vector<real>{training.w_content[0], training.w_content[1], training.w_content[2]});
    t.set("training", "seed", int64_t(training.seed));
    t.set("training", "checkpoint_every", training.checkpoint_every);
    if (training.feature_cache) t.set("training", "feature_cache", *training.feature_cache);

    t.set("evaluation", "classifier_widths",
          std::vector<int64_t>(classifier.widths.begin(), classifier.widths.end()));
    t.set("evaluation", "classifier_seed", int64_t(classifier.weights_seed));
    t.set("evaluation", "classifier_epochs", int64_t(classifier_training.epochs));
    t.set("evaluation", "classifier_batch", int64_t(classifier_training.batch));
    t.set("evaluation", "classifier_lr", classifier_training.lr);
    t.set("evaluation", "classifier_train_seed", int64_t(classifier_training.seed));
    t.set("evaluation", "clinsig_total", int64_t(clinsig_total));
    return t;
}

BackboneConfig RunConfig::backbone_config() const {
    BackboneConfig cfg =
        backbone_preset == "densenet121" ? BackboneConfig::densenet121() : BackboneConfig::desk();
    cfg.growth_rate = backbone_growth;
    cfg.block_layers = backbone_blocks;
    cfg.stem_kernel = backbone_stem_kernel;
    return cfg;
}

std::string RunConfig::backbone_source_or_default() const {
    if (!backbone_source.empty()) return backbone_source;
    return "random:" + std::to_string(seed ^ 0x6262);
}

} // namespace msrgan
