#pragma once

// Image-caption datasets on disk: JSONL with one record per line, fields
// id / image / caption / source / language. Iteration order is the file
// order; serialization is canonical (sorted keys) so identical datasets
// produce identical bytes.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "taiyi/error.hpp"
#include "taiyi/image_io.hpp"
#include "taiyi/tensor.hpp"

namespace taiyi {

struct DataRecord {
    std::string id;
    std::string image;    // path relative to the dataset's image directory
    std::string caption;
    std::string source;   // "web" or "synthetic"
    std::string language; // "zh" or "en"
};

struct Dataset {
    std::vector<DataRecord> records;

    size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    std::string to_jsonl() const {
        std::string out;
        for (const auto& r : records) {
            nlohmann::json j;
            j["id"] = r.id;
            j["image"] = r.image;
            j["caption"] = r.caption;
            j["source"] = r.source;
            j["language"] = r.language;
            out += j.dump();
            out += '\n';
        }
        return out;
    }

    static Dataset from_jsonl(const std::string& text) {
        Dataset ds;
        std::istringstream is(text);
        std::string line;
        size_t lineno = 0;
        while (std::getline(is, line)) {
            lineno += 1;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw FormatError("dataset: line " + std::to_string(lineno) + ": " + e.what());
            }
            DataRecord r;
            for (const char* key : {"id", "image", "caption", "source", "language"}) {
                if (!j.contains(key) || !j[key].is_string()) {
                    throw FormatError("dataset: line " + std::to_string(lineno) +
                                      ": missing string field '" + std::string(key) + "'");
                }
            }
            r.id = j["id"];
            r.image = j["image"];
            r.caption = j["caption"];
            r.source = j["source"];
            r.language = j["language"];
            ds.records.push_back(std::move(r));
        }
        return ds;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write dataset: " + path);
        f << to_jsonl();
    }

    static Dataset load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot read dataset: " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return from_jsonl(ss.str());
    }
};

// Loads each distinct image file once; lookups are by record image path.
class ImageStore {
public:
    explicit ImageStore(std::string base_dir) : base_(std::move(base_dir)) {}

    const Tensor& get(const std::string& image_path) {
        auto it = cache_.find(image_path);
        if (it != cache_.end()) return it->second;
        const std::filesystem::path full = std::filesystem::path(base_) / image_path;
        if (!std::filesystem::exists(full)) {
            throw IoError("image not found: " + full.string());
        }
        auto [pos, inserted] = cache_.emplace(image_path, read_image(full.string()));
        return pos->second;
    }

    const std::string& base_dir() const { return base_; }

private:
    std::string base_;
    std::map<std::string, Tensor> cache_;
};

}  // namespace taiyi
