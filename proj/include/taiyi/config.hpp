#pragma once

// Flat `key = value` run configuration with '#' comments. Every key has a
// documented default; unknown keys are rejected by name so a typo can never
// silently fall back to a default.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "taiyi/error.hpp"

namespace taiyi {

class RunConfig {
public:
    RunConfig() { install_defaults(); }

    static RunConfig from_text(const std::string& text) {
        RunConfig cfg;
        std::istringstream is(text);
        std::string line;
        size_t lineno = 0;
        while (std::getline(is, line)) {
            lineno += 1;
            const std::string stripped = strip(line.substr(0, line.find('#')));
            if (stripped.empty()) continue;
            const size_t eq = stripped.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("config: line " + std::to_string(lineno) +
                                  ": expected 'key = value'");
            }
            cfg.set(strip(stripped.substr(0, eq)), strip(stripped.substr(eq + 1)));
        }
        return cfg;
    }

    static RunConfig load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot read config: " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return from_text(ss.str());
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
        it->second = value;
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
        return it->second;
    }

    int64_t get_int(const std::string& key) const {
        try {
            return std::stoll(get(key));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not an integer: " + get(key));
        }
    }

    size_t get_size(const std::string& key) const {
        const int64_t v = get_int(key);
        if (v < 0) throw ConfigError("config: key '" + key + "' must be non-negative");
        return static_cast<size_t>(v);
    }

    double get_double(const std::string& key) const {
        try {
            return std::stod(get(key));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not a number: " + get(key));
        }
    }

    bool get_bool(const std::string& key) const {
        const std::string& v = get(key);
        if (v == "true") return true;
        if (v == "false") return false;
        throw ConfigError("config: key '" + key + "' must be true or false: " + v);
    }

    std::vector<size_t> get_size_list(const std::string& key) const {
        std::vector<size_t> out;
        std::stringstream ss(get(key));
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                out.push_back(static_cast<size_t>(std::stoull(strip(item))));
            } catch (const std::exception&) {
                throw ConfigError("config: key '" + key + "' has a non-integer entry: " + item);
            }
        }
        if (out.empty()) throw ConfigError("config: key '" + key + "' is empty");
        return out;
    }

    // Canonical "key = value" text of the full effective configuration.
    std::string canonical_text() const {
        std::string out;
        for (const auto& [k, v] : values_) {
            out += k;
            out += " = ";
            out += v;
            out += '\n';
        }
        return out;
    }

    // FNV-1a over the canonical text, as 16 hex digits.
    std::string hash() const {
        uint64_t h = 1469598103934665603ull;
        for (unsigned char c : canonical_text()) {
            h ^= c;
            h *= 1099511628211ull;
        }
        static const char* hexd = "0123456789abcdef";
        std::string out(16, '0');
        for (int i = 15; i >= 0; --i) {
            out[i] = hexd[h & 0xF];
            h >>= 4;
        }
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string strip(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    void install_defaults() {
        values_ = {
            // run
            {"seed", "42"},
            // tokenizer
            {"expand_k", "1000"},
            {"char_ranges", "4E00-9FFF,3000-303F"},
            {"max_len", "32"},
            // text encoder
            {"text_dim", "32"},
            {"text_heads", "4"},
            {"text_blocks", "2"},
            {"text_context", "32"},
            {"embed_dim", "16"},
            // image encoder
            {"image_patch", "2"},
            {"image_channels", "1"},
            {"image_max_patches", "64"},
            {"image_heads", "4"},
            {"image_blocks", "2"},
            {"image_dim", "32"},
            // expansion
            {"expand_strategy", "mean-init"},
            {"expand_sigma", "0.02"},
            {"freeze_legacy_rows", "false"},
            // training (shared)
            {"batch_size", "16"},
            {"base_lr", "1e-5"},
            {"warmup_steps", "50"},
            {"total_steps", "500"},
            {"optimizer", "plain-gd"},
            // clip training
            {"temperature", "0.07"},
            {"stage", "stage1"},
            // diffusion
            {"diff_timesteps", "50"},
            {"beta_start", "1e-4"},
            {"beta_end", "0.02"},
            {"diff_base_channels", "8"},
            {"diff_context_tokens", "4"},
            {"diff_context_dim", "8"},
            {"diff_attn_dim", "16"},
            {"diff_time_dim", "16"},
            {"resolutions", "8,16"},
            {"diff_caption_source", "synthetic"},
            // sampling
            {"sampler", "ddpm"},
            {"sample_size", "8"},
            // generation eval
            {"eval_count", "16"},
            // enrichment
            {"enrich_endpoint", ""},
            {"enrich_attempts", "3"},
            {"enrich_backoff_s", "1.0"},
            {"enrich_concurrency", "1"},
            {"instruction_en", ""},
            {"instruction_zh", ""},
            // dataset assembly
            {"split_ratio", "0.8"},
            // synthetic data
            {"synth_classes", "2"},
            {"synth_per_class", "32"},
        };
    }

    std::map<std::string, std::string> values_;
};

// Every CLI run writes one of these next to its artifacts.
struct RunManifest {
    std::string command;
    std::string config_hash;
    uint64_t seed = 0;
    std::vector<std::string> artifacts;

    std::string to_json() const {
        nlohmann::json j;
        j["command"] = command;
        j["config_hash"] = config_hash;
        j["seed"] = seed;
        j["artifacts"] = artifacts;
        return j.dump(2) + "\n";
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write manifest: " + path);
        f << to_json();
    }
};

}  // namespace taiyi
