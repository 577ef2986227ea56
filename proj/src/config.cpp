#include "nfseg/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "nfseg/errors.hpp"

namespace nfseg {

DecoderConfig ExperimentConfig::decoder_config() const {
    DecoderConfig d;
    d.strategy = strategy;
    d.code_source = code_source;
    d.hidden = hidden;
    d.blocks = resolved_blocks();
    d.heads = heads;
    d.embed_l = embed_l;
    d.classes = classes;
    d.token_posenc = token_posenc;
    return d;
}

EncoderConfig ExperimentConfig::encoder_config() const {
    EncoderConfig e;
    e.stem_width = stem_width;
    e.stage_widths = stage_widths;
    return e;
}

void ExperimentConfig::validate() const {
    decoder_config().validate();
    if (dataset != "synthetic" && dataset != "tiles")
        throw ConfigError("dataset must be 'synthetic' or 'tiles'");
    if (dataset == "tiles" && tile_dir.empty())
        throw ConfigError("tiles dataset needs data.tile_dir");
    if (image_size < 32) throw ConfigError("image_size must be >= 32");
    if (batch_size < 1 || points < 1 || max_epochs < 1 || patience < 0 || val_every < 1)
        throw ConfigError("invalid training parameter");
    if (lr < 0) throw ConfigError("learning rate must be >= 0");
    const int ds = encoder_config().downsample();
    if (image_size % ds != 0)
        throw ConfigError("image_size " + std::to_string(image_size) +
                          " not divisible by encoder downsample " + std::to_string(ds));
}

void apply_paper_profile(ExperimentConfig& cfg) {
    // 256x256 inputs through the downsample-32 encoder give the published
    // 512 x 8 x 8 feature map
    cfg.hidden = 512;
    cfg.batch_size = 64;
    cfg.stage_widths = {32, 64, 128, 512};
    cfg.image_size = 256;
}

namespace {

struct Binding {
    std::string key;  // section.name
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int to_int(const std::string& v, const std::string& key) {
    try {
        return std::stoi(v);
    } catch (...) {
        throw ConfigError("cannot parse integer '" + v + "' for " + key);
    }
}

double to_double(const std::string& v, const std::string& key) {
    try {
        return std::stod(v);
    } catch (...) {
        throw ConfigError("cannot parse number '" + v + "' for " + key);
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("cannot parse boolean '" + v + "' for " + key);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += v[i];
    }
    return out;
}

Strategy strategy_from(const std::string& v) {
    if (v == "concat") return Strategy::concat;
    if (v == "film") return Strategy::film;
    if (v == "cross_attention") return Strategy::cross_attention;
    throw ConfigError("unknown strategy '" + v + "'");
}

CodeSource code_source_from(const std::string& v) {
    if (v == "global") return CodeSource::global;
    if (v == "local") return CodeSource::local;
    if (v == "combined") return CodeSource::combined;
    if (v == "tokens") return CodeSource::tokens;
    throw ConfigError("unknown code source '" + v + "'");
}

std::string fmt_double(double d) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
}

const std::vector<Binding>& bindings() {
    static const std::vector<Binding> b = {
        {"model.strategy",
         [](ExperimentConfig& c, const std::string& v) { c.strategy = strategy_from(v); },
         [](const ExperimentConfig& c) { return std::string(to_string(c.strategy)); }},
        {"model.code_source",
         [](ExperimentConfig& c, const std::string& v) { c.code_source = code_source_from(v); },
         [](const ExperimentConfig& c) { return std::string(to_string(c.code_source)); }},
        {"model.hidden",
         [](ExperimentConfig& c, const std::string& v) { c.hidden = to_int(v, "model.hidden"); },
         [](const ExperimentConfig& c) { return std::to_string(c.hidden); }},
        {"model.blocks",
         [](ExperimentConfig& c, const std::string& v) { c.blocks = to_int(v, "model.blocks"); },
         [](const ExperimentConfig& c) { return std::to_string(c.blocks); }},
        {"model.heads",
         [](ExperimentConfig& c, const std::string& v) { c.heads = to_int(v, "model.heads"); },
         [](const ExperimentConfig& c) { return std::to_string(c.heads); }},
        {"model.embed_l",
         [](ExperimentConfig& c, const std::string& v) { c.embed_l = to_int(v, "model.embed_l"); },
         [](const ExperimentConfig& c) { return std::to_string(c.embed_l); }},
        {"model.classes",
         [](ExperimentConfig& c, const std::string& v) { c.classes = to_int(v, "model.classes"); },
         [](const ExperimentConfig& c) { return std::to_string(c.classes); }},
        {"model.token_posenc",
         [](ExperimentConfig& c, const std::string& v) { c.token_posenc = to_bool(v, "model.token_posenc"); },
         [](const ExperimentConfig& c) { return std::string(c.token_posenc ? "true" : "false"); }},
        {"encoder.stem_width",
         [](ExperimentConfig& c, const std::string& v) { c.stem_width = to_int(v, "encoder.stem_width"); },
         [](const ExperimentConfig& c) { return std::to_string(c.stem_width); }},
        {"encoder.stage_widths",
         [](ExperimentConfig& c, const std::string& v) {
             c.stage_widths.clear();
             for (const auto& s : split_list(v)) c.stage_widths.push_back(to_int(s, "encoder.stage_widths"));
             if (c.stage_widths.empty()) throw ConfigError("encoder.stage_widths must not be empty");
         },
         [](const ExperimentConfig& c) {
             std::vector<std::string> s;
             for (int w : c.stage_widths) s.push_back(std::to_string(w));
             return join(s);
         }},
        {"data.dataset",
         [](ExperimentConfig& c, const std::string& v) { c.dataset = v; },
         [](const ExperimentConfig& c) { return c.dataset; }},
        {"data.train_count",
         [](ExperimentConfig& c, const std::string& v) { c.train_count = to_int(v, "data.train_count"); },
         [](const ExperimentConfig& c) { return std::to_string(c.train_count); }},
        {"data.val_count",
         [](ExperimentConfig& c, const std::string& v) { c.val_count = to_int(v, "data.val_count"); },
         [](const ExperimentConfig& c) { return std::to_string(c.val_count); }},
        {"data.test_count",
         [](ExperimentConfig& c, const std::string& v) { c.test_count = to_int(v, "data.test_count"); },
         [](const ExperimentConfig& c) { return std::to_string(c.test_count); }},
        {"data.image_size",
         [](ExperimentConfig& c, const std::string& v) { c.image_size = to_int(v, "data.image_size"); },
         [](const ExperimentConfig& c) { return std::to_string(c.image_size); }},
        {"data.single_image",
         [](ExperimentConfig& c, const std::string& v) { c.single_image = to_bool(v, "data.single_image"); },
         [](const ExperimentConfig& c) { return std::string(c.single_image ? "true" : "false"); }},
        {"data.tile_dir",
         [](ExperimentConfig& c, const std::string& v) { c.tile_dir = v; },
         [](const ExperimentConfig& c) { return c.tile_dir; }},
        {"data.train_tiles",
         [](ExperimentConfig& c, const std::string& v) { c.train_tiles = split_list(v); },
         [](const ExperimentConfig& c) { return join(c.train_tiles); }},
        {"data.val_tiles",
         [](ExperimentConfig& c, const std::string& v) { c.val_tiles = split_list(v); },
         [](const ExperimentConfig& c) { return join(c.val_tiles); }},
        {"data.test_tiles",
         [](ExperimentConfig& c, const std::string& v) { c.test_tiles = split_list(v); },
         [](const ExperimentConfig& c) { return join(c.test_tiles); }},
        {"train.lr",
         [](ExperimentConfig& c, const std::string& v) { c.lr = to_double(v, "train.lr"); },
         [](const ExperimentConfig& c) { return fmt_double(c.lr); }},
        {"train.batch_size",
         [](ExperimentConfig& c, const std::string& v) { c.batch_size = to_int(v, "train.batch_size"); },
         [](const ExperimentConfig& c) { return std::to_string(c.batch_size); }},
        {"train.points",
         [](ExperimentConfig& c, const std::string& v) { c.points = to_int(v, "train.points"); },
         [](const ExperimentConfig& c) { return std::to_string(c.points); }},
        {"train.max_epochs",
         [](ExperimentConfig& c, const std::string& v) { c.max_epochs = to_int(v, "train.max_epochs"); },
         [](const ExperimentConfig& c) { return std::to_string(c.max_epochs); }},
        {"train.patience",
         [](ExperimentConfig& c, const std::string& v) { c.patience = to_int(v, "train.patience"); },
         [](const ExperimentConfig& c) { return std::to_string(c.patience); }},
        {"train.val_every",
         [](ExperimentConfig& c, const std::string& v) { c.val_every = to_int(v, "train.val_every"); },
         [](const ExperimentConfig& c) { return std::to_string(c.val_every); }},
        {"train.target_iou",
         [](ExperimentConfig& c, const std::string& v) { c.target_iou = to_double(v, "train.target_iou"); },
         [](const ExperimentConfig& c) { return fmt_double(c.target_iou); }},
        {"train.val_subset",
         [](ExperimentConfig& c, const std::string& v) { c.val_subset = to_int(v, "train.val_subset"); },
         [](const ExperimentConfig& c) { return std::to_string(c.val_subset); }},
        {"train.seed",
         [](ExperimentConfig& c, const std::string& v) { c.seed = std::stoull(v); },
         [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
        {"train.deterministic",
         [](ExperimentConfig& c, const std::string& v) { c.deterministic = to_bool(v, "train.deterministic"); },
         [](const ExperimentConfig& c) { return std::string(c.deterministic ? "true" : "false"); }},
    };
    return b;
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "profile") {
        if (value == "desk") return;
        if (value == "paper") {
            apply_paper_profile(cfg);
            return;
        }
        throw ConfigError("unknown profile '" + value + "'");
    }
    for (const auto& b : bindings())
        if (b.key == key) {
            b.set(cfg, value);
            return;
        }
    throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("malformed section header at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        set_key(cfg, section.empty() ? key : section + "." + key, value);
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& args) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        std::string key = args[i];
        if (key.rfind("--", 0) != 0)
            throw ConfigError("expected --section.key, got '" + key + "'");
        key = key.substr(2);
        if (i + 1 >= args.size()) throw ConfigError("missing value for --" + key);
        set_key(cfg, key, args[++i]);
    }
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& b : bindings()) {
        const auto dot = b.key.find('.');
        const std::string sec = b.key.substr(0, dot);
        if (sec != section) {
            if (!out.empty()) out += "\n";
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += b.key.substr(dot + 1) + " = " + b.get(cfg) + "\n";
    }
    return out;
}

}  // namespace nfseg
