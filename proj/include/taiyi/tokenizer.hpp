#pragma once

// Byte-level tokenizer with whole-character expansion. The base vocabulary is
// fixed (3 specials + 256 byte tokens); expansion appends single characters
// as new ids without ever disturbing existing entries, so token ids are
// stable across growth.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "taiyi/error.hpp"
#include "taiyi/utf8.hpp"

namespace taiyi {

using TokenId = uint32_t;

// Code-point ranges whose characters are candidates for expansion.
struct CharRanges {
    std::vector<std::pair<uint32_t, uint32_t>> ranges;

    bool contains(uint32_t cp) const {
        for (const auto& [lo, hi] : ranges)
            if (cp >= lo && cp <= hi) return true;
        return false;
    }

    // CJK Unified Ideographs plus CJK symbols and punctuation.
    static CharRanges default_cjk() {
        return CharRanges{{{0x4E00, 0x9FFF}, {0x3000, 0x303F}}};
    }

    // Comma-separated "LO-HI" hex pairs, e.g. "4E00-9FFF,3000-303F".
    static CharRanges parse(const std::string& text) {
        CharRanges out;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto dash = item.find('-');
            if (dash == std::string::npos) throw ConfigError("char_ranges: expected LO-HI in '" + item + "'");
            try {
                out.ranges.emplace_back(std::stoul(item.substr(0, dash), nullptr, 16),
                                        std::stoul(item.substr(dash + 1), nullptr, 16));
            } catch (const std::exception&) {
                throw ConfigError("char_ranges: bad hex bounds in '" + item + "'");
            }
        }
        if (out.ranges.empty()) throw ConfigError("char_ranges: empty range list");
        return out;
    }
};

struct FreqEntry {
    uint32_t cp = 0;
    uint64_t count = 0;

    std::string text() const { return utf8_encode(cp); }
};

// Characters sorted by count descending, ties by code point ascending.
using FrequencyTable = std::vector<FreqEntry>;

inline FrequencyTable char_frequency(std::string_view corpus,
                                     const CharRanges& ranges = CharRanges::default_cjk()) {
    std::unordered_map<uint32_t, uint64_t> counts;
    size_t pos = 0;
    while (pos < corpus.size()) {
        const Utf8Char c = utf8_next(corpus, pos);
        pos += c.len;
        if (c.len > 1 && ranges.contains(c.cp)) counts[c.cp] += 1;
    }
    FrequencyTable table;
    table.reserve(counts.size());
    for (const auto& [cp, count] : counts) table.push_back({cp, count});
    std::sort(table.begin(), table.end(), [](const FreqEntry& a, const FreqEntry& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.cp < b.cp;
    });
    return table;
}

class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kBos = 1;
    static constexpr TokenId kEos = 2;
    static constexpr size_t kByteBase = 3;      // byte b maps to id b + 3
    static constexpr size_t kBaseSize = 259;    // 3 specials + 256 bytes

    size_t size() const { return kBaseSize + expanded_.size(); }
    size_t expanded_count() const { return expanded_.size(); }

    const std::vector<std::string>& expanded() const { return expanded_; }

    bool has_char(const std::string& ch) const { return lookup_.count(ch) > 0; }

    TokenId char_id(const std::string& ch) const {
        auto it = lookup_.find(ch);
        if (it == lookup_.end()) throw Error("vocabulary: character not expanded");
        return it->second;
    }

    // Appends one character; id is the current size. No-op guard lives in
    // expand_vocabulary, which skips already-present characters.
    void append_char(const std::string& ch) {
        const TokenId id = static_cast<TokenId>(size());
        expanded_.push_back(ch);
        lookup_.emplace(ch, id);
    }

    std::string id_to_string(TokenId id) const {
        if (id == kPad) return "<pad>";
        if (id == kBos) return "<bos>";
        if (id == kEos) return "<eos>";
        if (id < kBaseSize) return std::string(1, static_cast<char>(id - kByteBase));
        if (id < size()) return expanded_[id - kBaseSize];
        throw Error("vocabulary: unknown id " + std::to_string(id));
    }

    // ------------------------------------------------------------- file io
    //
    // Line format: "taiyi-vocab v1" header, then one "<id>\t<hex>" line per
    // expanded entry, where <hex> is the lowercase hex of the UTF-8 bytes.

    std::string serialize() const {
        static const char* hexd = "0123456789abcdef";
        std::string out = "taiyi-vocab v1\n";
        for (size_t i = 0; i < expanded_.size(); ++i) {
            out += std::to_string(kBaseSize + i);
            out += '\t';
            for (unsigned char b : expanded_[i]) {
                out += hexd[b >> 4];
                out += hexd[b & 0xF];
            }
            out += '\n';
        }
        return out;
    }

    static Vocabulary deserialize(std::string_view text) {
        Vocabulary vocab;
        size_t pos = 0;
        auto next_line = [&]() -> std::string_view {
            const size_t nl = text.find('\n', pos);
            if (nl == std::string_view::npos) {
                throw FormatError("vocab file: missing trailing newline");
            }
            auto line = text.substr(pos, nl - pos);
            pos = nl + 1;
            return line;
        };
        if (pos >= text.size() || next_line() != "taiyi-vocab v1") {
            throw FormatError("vocab file: bad header (expected 'taiyi-vocab v1')");
        }
        while (pos < text.size()) {
            const auto line = next_line();
            const size_t tab = line.find('\t');
            if (tab == std::string_view::npos) throw FormatError("vocab file: missing tab separator");
            unsigned long id = 0;
            try {
                id = std::stoul(std::string(line.substr(0, tab)));
            } catch (const std::exception&) {
                throw FormatError("vocab file: id is not a number");
            }
            if (id != vocab.size()) {
                throw FormatError("vocab file: expected id " + std::to_string(vocab.size()) +
                                  ", found " + std::to_string(id));
            }
            const auto hex = line.substr(tab + 1);
            if (hex.empty() || hex.size() % 2 != 0) throw FormatError("vocab file: bad hex string");
            std::string bytes;
            for (size_t i = 0; i < hex.size(); i += 2) {
                auto nib = [&](char c) -> unsigned {
                    if (c >= '0' && c <= '9') return c - '0';
                    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
                    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
                    throw FormatError("vocab file: bad hex digit");
                };
                bytes.push_back(static_cast<char>((nib(hex[i]) << 4) | nib(hex[i + 1])));
            }
            const auto chars = utf8_decode(bytes);
            if (chars.size() != 1) throw FormatError("vocab file: entry is not a single character");
            if (vocab.has_char(bytes)) throw FormatError("vocab file: duplicate entry");
            vocab.append_char(bytes);
        }
        return vocab;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write vocab file: " + path);
        f << serialize();
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot read vocab file: " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return deserialize(ss.str());
    }

private:
    std::vector<std::string> expanded_;                  // index i maps to id 259 + i
    std::unordered_map<std::string, TokenId> lookup_;
};

// Appends the top-k characters by frequency, skipping ones already present
// (the next candidate is promoted). Existing ids are never changed.
inline Vocabulary expand_vocabulary(const Vocabulary& vocab, const FrequencyTable& freq, size_t k) {
    Vocabulary out = vocab;
    size_t added = 0;
    for (const FreqEntry& e : freq) {
        if (added == k) break;
        const std::string ch = e.text();
        if (out.has_char(ch)) continue;
        out.append_char(ch);
        added += 1;
    }
    return out;
}

// BOS + body + EOS, right-truncated to max_len with EOS kept last. Each
// expanded character emits its single id; everything else falls back to its
// UTF-8 bytes as byte tokens.
inline std::vector<TokenId> encode(const Vocabulary& vocab, std::string_view text, size_t max_len) {
    if (max_len < 2) throw Error("encode: max_len must be at least 2");
    std::vector<TokenId> body;
    size_t pos = 0;
    while (pos < text.size()) {
        const Utf8Char c = utf8_next(text, pos);
        const std::string ch(text.substr(c.offset, c.len));
        if (c.len > 1 && vocab.has_char(ch)) {
            body.push_back(vocab.char_id(ch));
        } else {
            for (size_t i = 0; i < c.len; ++i) {
                body.push_back(static_cast<TokenId>(
                    static_cast<uint8_t>(text[c.offset + i]) + Vocabulary::kByteBase));
            }
        }
        pos += c.len;
    }
    if (body.size() + 2 > max_len) body.resize(max_len - 2);
    std::vector<TokenId> out;
    out.reserve(body.size() + 2);
    out.push_back(Vocabulary::kBos);
    out.insert(out.end(), body.begin(), body.end());
    out.push_back(Vocabulary::kEos);
    return out;
}

// Inverse of encode on the untruncated body; specials are dropped and byte
// runs are validated as UTF-8.
inline std::string decode(const Vocabulary& vocab, const std::vector<TokenId>& ids) {
    std::string out;
    std::string run;
    size_t run_start = 0;
    auto flush = [&]() {
        if (run.empty()) return;
        if (!utf8_valid(run)) {
            throw FormatError("decode: byte run starting at token position " +
                              std::to_string(run_start) + " is not valid UTF-8");
        }
        out += run;
        run.clear();
    };
    for (size_t i = 0; i < ids.size(); ++i) {
        const TokenId id = ids[i];
        if (id >= vocab.size()) {
            throw Error("decode: unknown id " + std::to_string(id) + " at position " +
                        std::to_string(i));
        }
        if (id <= Vocabulary::kEos) {
            flush();
            continue;
        }
        if (id < Vocabulary::kBaseSize) {
            if (run.empty()) run_start = i;
            run.push_back(static_cast<char>(id - Vocabulary::kByteBase));
        } else {
            flush();
            out += vocab.expanded()[id - Vocabulary::kBaseSize];
        }
    }
    flush();
    return out;
}

}  // namespace taiyi
