#include "rinkkp/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>

namespace rinkkp {

namespace {

using json = nlohmann::json;

std::uint64_t parse_u64(const std::string& s) {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) {
        throw std::invalid_argument("trailing characters in integer '" + s + "'");
    }
    return static_cast<std::uint64_t>(v);
}

int parse_int(const std::string& s) {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) {
        throw std::invalid_argument("trailing characters in integer '" + s + "'");
    }
    return v;
}

double parse_double(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) {
        throw std::invalid_argument("trailing characters in number '" + s + "'");
    }
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument("expected boolean, got '" + s + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& key_table() {
    static const std::map<std::string, Setter> table = {
        {"model.input_h", [](RunConfig& c, const std::string& v) { c.model.input_h = parse_int(v); }},
        {"model.input_w", [](RunConfig& c, const std::string& v) { c.model.input_w = parse_int(v); }},
        {"model.base_channels", [](RunConfig& c, const std::string& v) { c.model.base_channels = parse_int(v); }},
        {"model.pyramid_depth", [](RunConfig& c, const std::string& v) { c.model.pyramid_depth = parse_int(v); }},
        {"train.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = parse_int(v); }},
        {"train.batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_int(v); }},
        {"train.lr", [](RunConfig& c, const std::string& v) { c.train.lr = parse_double(v); }},
        {"train.plateau_factor", [](RunConfig& c, const std::string& v) { c.train.plateau_factor = parse_double(v); }},
        {"train.plateau_patience", [](RunConfig& c, const std::string& v) { c.train.plateau_patience = parse_int(v); }},
        {"train.sigma",
         [](RunConfig& c, const std::string& v) {
             c.train.sigma = parse_double(v);
             c.model.sigma = c.train.sigma;
         }},
        {"train.p_drop",
         [](RunConfig& c, const std::string& v) {
             c.train.p_drop = parse_double(v);
             c.model.p_drop = c.train.p_drop;
         }},
        {"train.seed", [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64(v); }},
        {"train.augment.flip", [](RunConfig& c, const std::string& v) { c.train.augment.flip = parse_bool(v); }},
        {"train.augment.blur", [](RunConfig& c, const std::string& v) { c.train.augment.blur = parse_bool(v); }},
        {"train.augment.noise", [](RunConfig& c, const std::string& v) { c.train.augment.noise = parse_bool(v); }},
        {"train.augment.normalize",
         [](RunConfig& c, const std::string& v) { c.train.augment.normalize = parse_bool(v); }},
        {"scene.frame_h", [](RunConfig& c, const std::string& v) { c.scene.frame_h = parse_int(v); }},
        {"scene.frame_w", [](RunConfig& c, const std::string& v) { c.scene.frame_w = parse_int(v); }},
        {"scene.n_players_min", [](RunConfig& c, const std::string& v) { c.scene.n_players_min = parse_int(v); }},
        {"scene.n_players_max", [](RunConfig& c, const std::string& v) { c.scene.n_players_max = parse_int(v); }},
        {"scene.puck_radius_px", [](RunConfig& c, const std::string& v) { c.scene.puck_radius_px = parse_int(v); }},
        {"scene.blur_prob", [](RunConfig& c, const std::string& v) { c.scene.blur_prob = parse_double(v); }},
        {"scene.occlusion_prob", [](RunConfig& c, const std::string& v) { c.scene.occlusion_prob = parse_double(v); }},
        {"scene.cluster_bias", [](RunConfig& c, const std::string& v) { c.scene.cluster_bias = parse_double(v); }},
        {"scene.n_matches", [](RunConfig& c, const std::string& v) { c.scene.n_matches = parse_int(v); }},
        {"scene.seed", [](RunConfig& c, const std::string& v) { c.scene.seed = parse_u64(v); }},
    };
    return table;
}

std::string json_scalar_to_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw std::invalid_argument("config values must be scalars, got " + v.dump());
}

}  // namespace

RunConfig default_run_config() {
    RunConfig cfg;
    // The single sources of truth for sigma/p_drop are the train keys.
    cfg.model.sigma = cfg.train.sigma;
    cfg.model.p_drop = cfg.train.p_drop;
    return cfg;
}

void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = key_table();
    auto it = table.find(key);
    if (it == table.end()) {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
    try {
        it->second(cfg, value);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("config key '" + key + "': " + e.what());
    } catch (const std::exception& e) {
        throw std::invalid_argument("config key '" + key + "': bad value '" + value + "'");
    }
    cfg.keys_present.insert(key);
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& config_file,
                          const std::vector<std::string>& overrides) {
    RunConfig cfg = default_run_config();
    if (config_file) {
        std::ifstream in(*config_file);
        if (!in) {
            throw std::invalid_argument("cannot open config file " + config_file->string());
        }
        json j;
        try {
            j = json::parse(in);
        } catch (const std::exception& e) {
            throw std::invalid_argument("config file " + config_file->string() + ": " + e.what());
        }
        if (!j.is_object()) {
            throw std::invalid_argument("config file must hold a JSON object of flat dotted keys");
        }
        for (const auto& [key, value] : j.items()) {
            apply_config_key(cfg, key, json_scalar_to_string(value));
        }
    }
    for (const std::string& kv : overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("override '" + kv + "' is not key=value");
        }
        apply_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

}  // namespace rinkkp
