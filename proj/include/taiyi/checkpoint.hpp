#pragma once

// Checkpoint container: "TXLC" magic, u32 little-endian format version,
// u64 little-endian header length, UTF-8 JSON header (tensor directory plus
// metadata), then a raw payload of little-endian f64 values. Round trips are
// bit-exact; every validation failure names what was wrong.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "taiyi/diffusion.hpp"
#include "taiyi/encoder.hpp"
#include "taiyi/error.hpp"
#include "taiyi/tensor.hpp"

namespace taiyi {

struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    std::string serialize() const {
        nlohmann::json dir = nlohmann::json::array();
        uint64_t offset = 0;
        for (const auto& [name, t] : tensors) {
            nlohmann::json e;
            e["name"] = name;
            e["shape"] = t.shape();
            e["offset"] = offset;
            dir.push_back(std::move(e));
            offset += t.numel() * 8;
        }
        nlohmann::json header;
        header["meta"] = meta;
        header["tensors"] = dir;
        const std::string header_bytes = header.dump();

        std::string out;
        out.reserve(16 + header_bytes.size() + offset);
        out += "TXLC";
        append_u32(out, kVersion);
        append_u64(out, header_bytes.size());
        out += header_bytes;
        for (const auto& [name, t] : tensors) {
            for (size_t i = 0; i < t.numel(); ++i) {
                append_u64(out, std::bit_cast<uint64_t>(t.at(i)));
            }
        }
        return out;
    }

    static Checkpoint deserialize(const std::string& bytes) {
        if (bytes.size() < 16 || bytes.compare(0, 4, "TXLC") != 0) {
            throw FormatError("checkpoint: bad magic");
        }
        const uint32_t version = read_u32(bytes, 4);
        if (version != kVersion) {
            throw FormatError("checkpoint: format version " + std::to_string(version) +
                              " unsupported (expected " + std::to_string(kVersion) + ")");
        }
        const uint64_t header_len = read_u64(bytes, 8);
        if (16 + header_len > bytes.size()) {
            throw FormatError("checkpoint: header length exceeds file size");
        }
        nlohmann::json header;
        try {
            header = nlohmann::json::parse(bytes.substr(16, header_len));
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(std::string("checkpoint: header is not valid JSON: ") + e.what());
        }
        const size_t payload_begin = 16 + header_len;
        const size_t payload_size = bytes.size() - payload_begin;

        if (!header.contains("tensors") || !header["tensors"].is_array()) {
            throw FormatError("checkpoint: header lacks a tensor directory");
        }
        Checkpoint ck;
        ck.meta = header.value("meta", nlohmann::json::object());
        std::map<std::string, bool> seen;
        std::vector<std::pair<uint64_t, uint64_t>> spans;  // offset, byte size
        for (const auto& e : header["tensors"]) {
            std::string name;
            Shape shape;
            uint64_t offset = 0;
            try {
                name = e.at("name").get<std::string>();
                for (const auto& d : e.at("shape")) shape.push_back(d.get<size_t>());
                offset = e.at("offset").get<uint64_t>();
            } catch (const nlohmann::json::exception& ex) {
                throw FormatError(std::string("checkpoint: malformed tensor entry: ") + ex.what());
            }
            if (seen.count(name)) throw FormatError("checkpoint: duplicate tensor '" + name + "'");
            seen[name] = true;
            const uint64_t size = shape_numel(shape) * 8;
            if (offset + size > payload_size) {
                throw FormatError("checkpoint: tensor '" + name + "' extends past end of file");
            }
            spans.emplace_back(offset, size);
            std::vector<double> data(shape_numel(shape));
            for (size_t i = 0; i < data.size(); ++i) {
                data[i] = std::bit_cast<double>(read_u64(bytes, payload_begin + offset + i * 8));
            }
            try {
                ck.tensors.emplace_back(name,
                                        Tensor::from_data(std::move(shape), std::move(data), true));
            } catch (const Error&) {
                throw FormatError("checkpoint: tensor '" + name + "' contains non-finite values");
            }
        }
        std::sort(spans.begin(), spans.end());
        for (size_t i = 1; i < spans.size(); ++i) {
            if (spans[i - 1].first + spans[i - 1].second > spans[i].first) {
                throw FormatError("checkpoint: overlapping tensor payloads");
            }
        }
        return ck;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write checkpoint: " + path);
        const std::string bytes = serialize();
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot read checkpoint: " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return deserialize(ss.str());
    }

private:
    static void append_u32(std::string& out, uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    static void append_u64(std::string& out, uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    static uint32_t read_u32(const std::string& s, size_t pos) {
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(s[pos + i]);
        return v;
    }
    static uint64_t read_u64(const std::string& s, size_t pos) {
        uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(s[pos + i]);
        return v;
    }
};

// ------------------------------------------------------- model serialization

namespace detail {

inline nlohmann::json to_json(const TextEncoderConfig& c) {
    return {{"vocab_size", c.vocab_size}, {"context", c.context},   {"dim", c.dim},
            {"heads", c.heads},           {"blocks", c.blocks},     {"embed_dim", c.embed_dim},
            {"mlp_ratio", c.mlp_ratio}};
}

inline TextEncoderConfig text_config_from(const nlohmann::json& j) {
    TextEncoderConfig c;
    c.vocab_size = j.at("vocab_size");
    c.context = j.at("context");
    c.dim = j.at("dim");
    c.heads = j.at("heads");
    c.blocks = j.at("blocks");
    c.embed_dim = j.at("embed_dim");
    c.mlp_ratio = j.at("mlp_ratio");
    return c;
}

inline nlohmann::json to_json(const ImageEncoderConfig& c) {
    return {{"patch", c.patch},   {"channels", c.channels}, {"max_patches", c.max_patches},
            {"dim", c.dim},       {"heads", c.heads},       {"blocks", c.blocks},
            {"embed_dim", c.embed_dim}, {"mlp_ratio", c.mlp_ratio}};
}

inline ImageEncoderConfig image_config_from(const nlohmann::json& j) {
    ImageEncoderConfig c;
    c.patch = j.at("patch");
    c.channels = j.at("channels");
    c.max_patches = j.at("max_patches");
    c.dim = j.at("dim");
    c.heads = j.at("heads");
    c.blocks = j.at("blocks");
    c.embed_dim = j.at("embed_dim");
    c.mlp_ratio = j.at("mlp_ratio");
    return c;
}

inline nlohmann::json to_json(const DenoiserConfig& c) {
    return {{"latent_channels", c.latent_channels}, {"base_channels", c.base_channels},
            {"text_dim", c.text_dim},               {"context_tokens", c.context_tokens},
            {"context_dim", c.context_dim},         {"attn_dim", c.attn_dim},
            {"time_dim", c.time_dim}};
}

inline DenoiserConfig denoiser_config_from(const nlohmann::json& j) {
    DenoiserConfig c;
    c.latent_channels = j.at("latent_channels");
    c.base_channels = j.at("base_channels");
    c.text_dim = j.at("text_dim");
    c.context_tokens = j.at("context_tokens");
    c.context_dim = j.at("context_dim");
    c.attn_dim = j.at("attn_dim");
    c.time_dim = j.at("time_dim");
    return c;
}

template <typename Model>
void restore_parameters(Model& model, const Checkpoint& ck, const std::string& prefix) {
    std::map<std::string, Shape> expected;
    for (const auto& [name, t] : model.named_parameters()) expected[prefix + name] = t.shape();
    size_t applied = 0;
    for (const auto& [name, t] : ck.tensors) {
        if (name.rfind(prefix, 0) != 0) continue;
        auto it = expected.find(name);
        if (it == expected.end()) {
            throw FormatError("checkpoint: unexpected tensor '" + name + "'");
        }
        if (it->second != t.shape()) {
            throw FormatError("checkpoint: tensor '" + name + "' has shape " +
                              shape_str(t.shape()) + ", expected " + shape_str(it->second));
        }
        model.set_parameter(name.substr(prefix.size()), t);
        applied += 1;
    }
    if (applied != expected.size()) {
        throw FormatError("checkpoint: missing tensors under prefix '" + prefix + "'");
    }
}

}  // namespace detail

struct ClipModel {
    TextEncoder text;
    ImageEncoder image;
};

inline Checkpoint make_clip_checkpoint(const TextEncoder& text, const ImageEncoder& image,
                                       nlohmann::json extra_meta = {}) {
    Checkpoint ck;
    ck.meta = std::move(extra_meta);
    ck.meta["kind"] = "clip";
    ck.meta["text_config"] = detail::to_json(text.config());
    ck.meta["image_config"] = detail::to_json(image.config());
    ck.meta["vocab_size"] = text.vocab_size();
    ck.meta["context_length"] = text.context_length();
    ck.meta["legacy_vocab_rows"] = text.legacy_vocab_rows();
    for (const auto& [name, t] : text.named_parameters()) ck.tensors.emplace_back("text." + name, t);
    for (const auto& [name, t] : image.named_parameters())
        ck.tensors.emplace_back("image." + name, t);
    return ck;
}

inline ClipModel clip_from_checkpoint(const Checkpoint& ck) {
    if (ck.meta.value("kind", "") != "clip") {
        throw CompatError("checkpoint: expected kind 'clip', found '" +
                          ck.meta.value("kind", "<none>") + "'");
    }
    try {
        Rng scratch(0);
        ClipModel m{TextEncoder(detail::text_config_from(ck.meta.at("text_config")), scratch),
                    ImageEncoder(detail::image_config_from(ck.meta.at("image_config")), scratch)};
        detail::restore_parameters(m.text, ck, "text.");
        detail::restore_parameters(m.image, ck, "image.");
        m.text.set_legacy_vocab_rows(ck.meta.value("legacy_vocab_rows", 0));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: malformed clip metadata: ") + e.what());
    }
}

struct DiffusionModel {
    Denoiser denoiser;
    TextEncoder text;
};

inline Checkpoint make_diffusion_checkpoint(const Denoiser& den, const TextEncoder& text,
                                            nlohmann::json extra_meta = {}) {
    Checkpoint ck;
    ck.meta = std::move(extra_meta);
    ck.meta["kind"] = "diffusion";
    ck.meta["denoiser_config"] = detail::to_json(den.config());
    ck.meta["text_config"] = detail::to_json(text.config());
    ck.meta["vocab_size"] = text.vocab_size();
    ck.meta["context_length"] = text.context_length();
    for (const auto& [name, t] : den.named_parameters())
        ck.tensors.emplace_back("denoiser." + name, t);
    for (const auto& [name, t] : text.named_parameters()) ck.tensors.emplace_back("text." + name, t);
    return ck;
}

inline DiffusionModel diffusion_from_checkpoint(const Checkpoint& ck) {
    if (ck.meta.value("kind", "") != "diffusion") {
        throw CompatError("checkpoint: expected kind 'diffusion', found '" +
                          ck.meta.value("kind", "<none>") + "'");
    }
    try {
        Rng scratch(0);
        DiffusionModel m{
            Denoiser(detail::denoiser_config_from(ck.meta.at("denoiser_config")), scratch),
            TextEncoder(detail::text_config_from(ck.meta.at("text_config")), scratch)};
        detail::restore_parameters(m.denoiser, ck, "denoiser.");
        detail::restore_parameters(m.text, ck, "text.");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: malformed diffusion metadata: ") + e.what());
    }
}

}  // namespace taiyi
