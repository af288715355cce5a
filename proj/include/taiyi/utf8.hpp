#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "taiyi/error.hpp"

namespace taiyi {

struct Utf8Char {
    uint32_t cp = 0;
    size_t offset = 0;  // byte offset in the source
    size_t len = 0;     // encoded byte length
};

// Strict UTF-8 decode of one scalar value at `pos`. Rejects overlong forms,
// surrogates, values above U+10FFFF and truncated sequences.
inline Utf8Char utf8_next(std::string_view s, size_t pos) {
    auto fail = [&](const char* why) -> Utf8Char {
        throw FormatError("invalid UTF-8 at byte offset " + std::to_string(pos) + ": " + why);
    };
    const auto b = [&](size_t i) { return static_cast<uint8_t>(s[pos + i]); };
    const uint8_t b0 = b(0);
    if (b0 < 0x80) return {b0, pos, 1};
    size_t len;
    uint32_t cp;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        return fail("bad leading byte");
    }
    if (pos + len > s.size()) return fail("truncated sequence");
    for (size_t i = 1; i < len; ++i) {
        if ((b(i) & 0xC0) != 0x80) return fail("bad continuation byte");
        cp = (cp << 6) | (b(i) & 0x3F);
    }
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) {
        return fail("overlong encoding");
    }
    if (cp >= 0xD800 && cp <= 0xDFFF) return fail("surrogate code point");
    if (cp > 0x10FFFF) return fail("code point out of range");
    return {cp, pos, len};
}

inline std::vector<Utf8Char> utf8_decode(std::string_view s) {
    std::vector<Utf8Char> out;
    size_t pos = 0;
    while (pos < s.size()) {
        out.push_back(utf8_next(s, pos));
        pos += out.back().len;
    }
    return out;
}

inline bool utf8_valid(std::string_view s) {
    try {
        utf8_decode(s);
        return true;
    } catch (const FormatError&) {
        return false;
    }
}

inline std::string utf8_encode(uint32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
}

}  // namespace taiyi
