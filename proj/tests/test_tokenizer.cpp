#include <catch2/catch.hpp>

#include <string>

#include "oracles.hpp"
#include "taiyi/rng.hpp"
#include "taiyi/tokenizer.hpp"

using namespace taiyi;

namespace {

// Random mixed ASCII/CJK string for round-trip properties.
std::string random_bilingual(Rng& rng, size_t max_chars) {
    static const std::string ascii = "abcdefghij XYZ0123,.";
    static const std::vector<uint32_t> cjk = {0x4F60, 0x597D, 0x4E16, 0x754C, 0x56FE,
                                              0x50CF, 0x751F, 0x6210, 0x6A21, 0x578B};
    std::string out;
    const size_t n = rng.below(max_chars + 1);
    for (size_t i = 0; i < n; ++i) {
        if (rng.below(2) == 0) {
            out.push_back(ascii[rng.below(ascii.size())]);
        } else {
            out += utf8_encode(cjk[rng.below(cjk.size())]);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("char_frequency counts in-range characters") {
    auto table = char_frequency("你好你");
    REQUIRE(table.size() == 2);
    CHECK(table[0].cp == 0x4F60);  // 你
    CHECK(table[0].count == 2);
    CHECK(table[1].cp == 0x597D);  // 好
    CHECK(table[1].count == 1);
}

TEST_CASE("char_frequency of pure ASCII is empty") {
    CHECK(char_frequency("hello").empty());
}

TEST_CASE("char_frequency rejects invalid UTF-8 with a byte offset") {
    std::string bad = "ab";
    bad.push_back(static_cast<char>(0xE4));
    bad.push_back('x');
    CHECK_THROWS_WITH(char_frequency(bad), Catch::Contains("byte offset 2"));
}

TEST_CASE("char_frequency ties break by code point, sorted by count") {
    // 好 (597D) and 你 (4F60) once each; 界 (754C) twice
    auto table = char_frequency("好你界界");
    REQUIRE(table.size() == 3);
    CHECK(table[0].cp == 0x754C);
    CHECK(table[1].cp == 0x4F60);
    CHECK(table[2].cp == 0x597D);
}

TEST_CASE("char_frequency matches a brute-force histogram on a mixed corpus") {
    Rng rng(1234);
    std::string corpus;
    while (corpus.size() < 1024) corpus += random_bilingual(rng, 12) + "\n";
    auto table = char_frequency(corpus);
    auto hist = oracles::histogram_in_ranges(corpus, {{0x4E00, 0x9FFF}, {0x3000, 0x303F}});
    REQUIRE(table.size() == hist.size());
    uint64_t prev = UINT64_MAX;
    for (const auto& e : table) {
        CHECK(hist.at(e.cp) == e.count);
        CHECK(e.count <= prev);
        prev = e.count;
    }
}

TEST_CASE("expand_vocabulary assigns sequential ids from 259") {
    Vocabulary base;
    auto freq = char_frequency("你好你");
    auto vocab = expand_vocabulary(base, freq, 2);
    CHECK(vocab.size() == 261);
    CHECK(vocab.char_id(utf8_encode(0x4F60)) == 259);
    CHECK(vocab.char_id(utf8_encode(0x597D)) == 260);
}

TEST_CASE("expansion with k=0 leaves serialization bytes unchanged") {
    Vocabulary base;
    auto freq = char_frequency("你好你");
    auto same = expand_vocabulary(base, freq, 0);
    CHECK(same.serialize() == base.serialize());
}

TEST_CASE("re-expansion appends only novel characters") {
    Vocabulary base;
    auto vocab = expand_vocabulary(base, char_frequency("你好你"), 2);
    auto again = expand_vocabulary(vocab, char_frequency("你界好界界"), 10);
    CHECK(again.size() == 262);
    CHECK(again.char_id(utf8_encode(0x4F60)) == 259);  // untouched
    CHECK(again.char_id(utf8_encode(0x597D)) == 260);  // untouched
    CHECK(again.char_id(utf8_encode(0x754C)) == 261);  // the one novel char
}

TEST_CASE("k larger than the table appends everything") {
    Vocabulary base;
    auto vocab = expand_vocabulary(base, char_frequency("你好"), 100);
    CHECK(vocab.size() == 261);
}

TEST_CASE("encode before expansion emits byte tokens") {
    Vocabulary base;
    // U+4F60 is E4 BD A0; byte tokens are value + 3
    auto ids = encode(base, "你", 8);
    CHECK(ids == std::vector<TokenId>({1, 231, 192, 163, 2}));
}

TEST_CASE("encode after expansion emits one id per expanded character") {
    Vocabulary base;
    auto vocab = expand_vocabulary(base, char_frequency("你"), 1);
    auto ids = encode(vocab, "你", 8);
    CHECK(ids == std::vector<TokenId>({1, 259, 2}));
}

TEST_CASE("encode of empty text is BOS EOS") {
    Vocabulary base;
    CHECK(encode(base, "", 8) == std::vector<TokenId>({1, 2}));
}

TEST_CASE("encode truncation keeps EOS last") {
    Vocabulary base;
    auto ids = encode(base, "abcdefgh", 5);
    REQUIRE(ids.size() == 5);
    CHECK(ids.front() == Vocabulary::kBos);
    CHECK(ids.back() == Vocabulary::kEos);
    CHECK(ids[1] == 'a' + 3);
    CHECK(ids[3] == 'c' + 3);
    CHECK_THROWS_AS(encode(base, "x", 1), Error);
}

TEST_CASE("decode inverts encode and drops specials") {
    Vocabulary base;
    auto vocab = expand_vocabulary(base, char_frequency("你"), 1);
    CHECK(decode(vocab, {1, 259, 2}) == "你");
    CHECK(decode(vocab, {1, 2}) == "");
    CHECK(decode(vocab, {0, 1, 'h' + 3, 'i' + 3, 2, 0}) == "hi");
}

TEST_CASE("decode rejects unknown ids and broken byte runs") {
    Vocabulary base;
    CHECK_THROWS_WITH(decode(base, {1, 999, 2}), Catch::Contains("unknown id 999"));
    // first byte of a 3-byte sequence with nothing following
    CHECK_THROWS_WITH(decode(base, {1, 231, 2}), Catch::Contains("position 1"));
}

TEST_CASE("encode rejects invalid UTF-8 input") {
    Vocabulary base;
    std::string bad = "ok";
    bad.push_back(static_cast<char>(0xFF));
    CHECK_THROWS_AS(encode(base, bad, 16), FormatError);
}

TEST_CASE("round trip holds for random bilingual strings") {
    Vocabulary base;
    auto vocab = expand_vocabulary(base, char_frequency("你好世界图像"), 6);
    Rng rng(555);
    for (int trial = 0; trial < 200; ++trial) {
        const std::string s = random_bilingual(rng, 20);
        CHECK(decode(vocab, encode(vocab, s, 256)) == s);
        CHECK(decode(base, encode(base, s, 256)) == s);
    }
}

TEST_CASE("expansion shortens token counts and never lengthens them") {
    Vocabulary base;
    auto vocab = expand_vocabulary(base, char_frequency("你好世界"), 4);
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const std::string s = random_bilingual(rng, 16);
        CHECK(encode(vocab, s, 512).size() <= encode(base, s, 512).size());
    }
    // single expanded character: 5 tokens (BOS + 3 bytes + EOS) down to 3
    CHECK(encode(base, "你", 16).size() == 5);
    CHECK(encode(vocab, "你", 16).size() == 3);
}

TEST_CASE("expanded vocab encodes unexpanded text identically to base") {
    Vocabulary base;
    auto vocab = expand_vocabulary(base, char_frequency("你好"), 2);
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        std::string s;
        const size_t n = rng.below(24);
        for (size_t i = 0; i < n; ++i) s.push_back(static_cast<char>('a' + rng.below(26)));
        CHECK(encode(vocab, s, 64) == encode(base, s, 64));
    }
}

TEST_CASE("char_frequency is deterministic across runs") {
    Rng rng(8);
    std::string corpus;
    for (int i = 0; i < 64; ++i) corpus += random_bilingual(rng, 10);
    auto a = char_frequency(corpus);
    auto b = char_frequency(corpus);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].cp == b[i].cp);
        CHECK(a[i].count == b[i].count);
    }
}

TEST_CASE("vocab file round-trips bit-exactly") {
    Vocabulary base;
    auto vocab = expand_vocabulary(base, char_frequency("你好世界"), 4);
    const std::string bytes = vocab.serialize();
    auto loaded = Vocabulary::deserialize(bytes);
    CHECK(loaded.serialize() == bytes);
    CHECK(loaded.size() == vocab.size());
    CHECK(loaded.char_id(utf8_encode(0x4F60)) == vocab.char_id(utf8_encode(0x4F60)));
}

TEST_CASE("vocab file rejects malformed input") {
    CHECK_THROWS_AS(Vocabulary::deserialize("nonsense\n"), FormatError);
    CHECK_THROWS_AS(Vocabulary::deserialize("taiyi-vocab v1\n259 e4bda0\n"), FormatError);
    CHECK_THROWS_AS(Vocabulary::deserialize("taiyi-vocab v1\n260\te4bda0\n"), FormatError);
    CHECK_THROWS_AS(Vocabulary::deserialize("taiyi-vocab v1\n259\te4bd\n"), FormatError);
    CHECK_THROWS_AS(Vocabulary::deserialize("taiyi-vocab v1\n259\te4bda0e5a5bd\n"), FormatError);
}
