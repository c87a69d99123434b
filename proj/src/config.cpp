#include "restolab/config.hpp"

#include "restolab/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace restolab {

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "run.seed", "run.output_dir",
        "data.clean_dir", "data.eval_dir", "data.patch_size",
        "train.steps", "train.batch_size", "train.lr_initial", "train.lr_final",
        "train.lambda", "train.grad_clip_norm", "train.beta1", "train.beta2",
        "model.levels", "model.blocks_per_level", "model.base_channels",
        "model.guidance", "model.fusion_points", "model.block_kind",
        "backbone.kind", "backbone.patch_size", "backbone.tap_indices",
        "backbone.toy_depth", "backbone.toy_width", "backbone.weights_path",
        "dpc.layer_indices", "dpc.weights", "dpc.epsilon",
        "tasks.specs",
        "probe.sigmas",
    };
    return keys;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    for (const auto& tok : split(s, ',')) out.push_back(std::stod(tok));
    return out;
}

std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    for (const auto& tok : split(s, ',')) out.push_back(std::stoi(tok));
    return out;
}

} // namespace

std::vector<DegradationSpec> parse_task_specs(const std::string& text) {
    // "noise:25; blur:15:2.0:3.1; rain:0.1:70; haze:1.0:0.9"
    std::vector<DegradationSpec> specs;
    for (const auto& entry : split(text, ';')) {
        const auto parts = split(entry, ':');
        if (parts.empty()) continue;
        DegradationSpec s;
        s.kind = degradation_kind_from_string(parts[0]);
        switch (s.kind) {
            case DegradationKind::Noise:
                if (parts.size() > 1) s.noise_sigma = std::stod(parts[1]);
                break;
            case DegradationKind::Blur:
                if (parts.size() > 1) s.blur_kernel_size = std::stoi(parts[1]);
                if (parts.size() > 2) s.blur_sigma_range[0] = std::stod(parts[2]);
                if (parts.size() > 3) s.blur_sigma_range[1] = std::stod(parts[3]);
                break;
            case DegradationKind::Rain:
                if (parts.size() > 1) s.rain_density = std::stod(parts[1]);
                if (parts.size() > 2) s.rain_angle_deg = std::stod(parts[2]);
                break;
            case DegradationKind::Haze:
                if (parts.size() > 1) s.haze_beta = std::stod(parts[1]);
                if (parts.size() > 2) s.haze_airlight = std::stod(parts[2]);
                break;
        }
        s.validate();
        specs.push_back(s);
    }
    if (specs.empty()) throw std::invalid_argument("tasks.specs: no tasks parsed");
    return specs;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return from_string(os.str());
}

RunConfig RunConfig::from_string(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: malformed line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw std::invalid_argument("config: key outside any section: " + key);
        cfg.set(section + "." + key, value);
    }
    return cfg;
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
    if (!known_keys().count(dotted_key))
        throw std::invalid_argument("config: unknown key '" + dotted_key + "'");
    values_[dotted_key] = value;
}

std::string RunConfig::get(const std::string& section, const std::string& key) const {
    const auto it = values_.find(section + "." + key);
    if (it == values_.end())
        throw std::invalid_argument("config: missing key '" + section + "." + key + "'");
    return it->second;
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
    return values_.count(section + "." + key) > 0;
}

TrainingConfig RunConfig::training() const {
    TrainingConfig c;
    auto opt = [&](const char* sec, const char* key, auto parse, auto& field) {
        if (has(sec, key)) field = parse(get(sec, key));
    };
    auto to_d = [](const std::string& s) { return std::stod(s); };
    auto to_i = [](const std::string& s) { return std::stoi(s); };
    auto to_u64 = [](const std::string& s) { return std::stoull(s); };

    opt("run", "seed", to_u64, c.seed);
    opt("data", "patch_size", to_i, c.patch_size);
    opt("train", "steps", to_i, c.steps);
    opt("train", "batch_size", to_i, c.batch_size);
    opt("train", "lr_initial", to_d, c.lr_initial);
    opt("train", "lr_final", to_d, c.lr_final);
    opt("train", "lambda", to_d, c.lambda);
    opt("train", "grad_clip_norm", to_d, c.grad_clip_norm);
    opt("train", "beta1", to_d, c.beta1);
    opt("train", "beta2", to_d, c.beta2);

    opt("model", "levels", to_i, c.net.levels);
    if (has("model", "blocks_per_level"))
        c.net.blocks_per_level = parse_ints(get("model", "blocks_per_level"));
    opt("model", "base_channels", to_i, c.net.base_channels);
    if (has("model", "guidance"))
        c.net.guidance = guidance_from_string(get("model", "guidance"));
    if (has("model", "fusion_points")) {
        const std::string fp = get("model", "fusion_points");
        if (fp == "per_level") c.net.fusion_points = FusionPoints::PerLevel;
        else if (fp == "per_block") c.net.fusion_points = FusionPoints::PerBlock;
        else throw std::invalid_argument("config: bad model.fusion_points: " + fp);
    }
    if (has("model", "block_kind")) {
        const std::string bk = get("model", "block_kind");
        if (bk == "transformer") c.net.block_kind = BlockKind::Transformer;
        else if (bk == "conv") c.net.block_kind = BlockKind::Conv;
        else throw std::invalid_argument("config: bad model.block_kind: " + bk);
    }

    if (has("backbone", "kind")) {
        const std::string k = get("backbone", "kind");
        if (k == "toy_vit") c.backbone.kind = BackboneKind::ToyVit;
        else if (k == "pretrained_vit") c.backbone.kind = BackboneKind::PretrainedVit;
        else throw std::invalid_argument("config: bad backbone.kind: " + k);
    }
    opt("backbone", "patch_size", to_i, c.backbone.patch_size);
    if (has("backbone", "tap_indices")) {
        const auto taps = parse_ints(get("backbone", "tap_indices"));
        if (taps.size() != 3)
            throw std::invalid_argument("config: backbone.tap_indices needs 3 entries");
        c.backbone.tap_indices = {taps[0], taps[1], taps[2]};
    }
    opt("backbone", "toy_depth", to_i, c.backbone.toy_depth);
    opt("backbone", "toy_width", to_i, c.backbone.toy_width);
    if (has("backbone", "weights_path"))
        c.backbone.weights_path = get("backbone", "weights_path");
    else if (const char* env = std::getenv("RESTOLAB_BACKBONE_WEIGHTS"))
        c.backbone.weights_path = env;
    c.backbone.toy_seed = derive_seed(c.seed, "backbone");

    if (has("dpc", "layer_indices")) c.dpc.layer_indices = parse_ints(get("dpc", "layer_indices"));
    if (has("dpc", "weights")) c.dpc.weights = parse_doubles(get("dpc", "weights"));
    opt("dpc", "epsilon", to_d, c.dpc.epsilon);

    if (has("tasks", "specs")) c.task_mix = parse_task_specs(get("tasks", "specs"));
    c.net.guidance_channels = c.backbone.toy_width; // fixed up after backbone load
    return c;
}

std::vector<double> RunConfig::probe_sigmas() const {
    if (!has("probe", "sigmas")) return {10, 20, 30, 40, 50};
    return parse_doubles(get("probe", "sigmas"));
}

std::string RunConfig::resolved() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    return os.str();
}

std::string RunConfig::hash() const {
    uint64_t h = 1469598103934665603ull;
    for (char c : resolved()) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace restolab
