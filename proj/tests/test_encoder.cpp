#include <catch2/catch.hpp>

#include <cmath>

#include "oracles.hpp"
#include "taiyi/encoder.hpp"
#include "taiyi/tokenizer.hpp"

using namespace taiyi;

namespace {

TextEncoderConfig small_text_cfg() {
    TextEncoderConfig cfg;
    cfg.vocab_size = 259;
    cfg.context = 8;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.blocks = 2;
    cfg.embed_dim = 8;
    return cfg;
}

ImageEncoderConfig small_image_cfg() {
    ImageEncoderConfig cfg;
    cfg.patch = 2;
    cfg.channels = 1;
    cfg.max_patches = 16;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.blocks = 2;
    cfg.embed_dim = 8;
    return cfg;
}

double l2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("expand_token_embeddings mean-init with zero sigma appends column means") {
    Rng rng(1);
    auto w = Tensor::from_data({2, 2}, {1, 3, 3, 5}, true);
    auto out = expand_token_embeddings(w, 1, ExpansionStrategy::parse("mean-init", 0.0), rng);
    REQUIRE(out.shape() == Shape({3, 2}));
    CHECK(out.at(4) == 2.0);
    CHECK(out.at(5) == 4.0);
    // old rows bit-identical
    for (size_t i = 0; i < 4; ++i) CHECK(out.at(i) == w.at(i));
}

TEST_CASE("expand_token_embeddings with k=0 is the identity") {
    Rng rng(2);
    auto w = Tensor::randn(rng, {5, 3});
    auto out = expand_token_embeddings(w, 0, ExpansionStrategy::parse("mean-init", 0.1), rng);
    CHECK(out.data() == w.data());
}

TEST_CASE("noisy expansion is reproducible and preserves old rows") {
    Rng rng_w(3);
    auto w = Tensor::randn(rng_w, {4, 3});
    auto strat = ExpansionStrategy::parse("mean-init", 0.01);
    Rng r1(77), r2(77);
    auto a = expand_token_embeddings(w, 5, strat, r1);
    auto b = expand_token_embeddings(w, 5, strat, r2);
    CHECK(a.data() == b.data());
    for (size_t i = 0; i < w.numel(); ++i) CHECK(a.at(i) == w.at(i));
}

TEST_CASE("expand_position_embeddings copy-last duplicates the final row") {
    Rng rng(4);
    auto p = Tensor::randn(rng, {4, 3});
    auto out = expand_position_embeddings(p, 8, ExpansionStrategy::parse("copy-last", 0.0), rng);
    REQUIRE(out.shape() == Shape({8, 3}));
    for (size_t i = 4; i < 8; ++i)
        for (size_t j = 0; j < 3; ++j) CHECK(out.at(i * 3 + j) == p.at(3 * 3 + j));
}

TEST_CASE("expand_position_embeddings mean-init appends the column mean of all rows") {
    Rng rng(5);
    auto p = Tensor::randn(rng, {4, 2});
    auto out = expand_position_embeddings(p, 6, ExpansionStrategy::parse("mean-init", 0.0), rng);
    for (size_t j = 0; j < 2; ++j) {
        double mean = 0.0;
        for (size_t i = 0; i < 4; ++i) mean += p.at(i * 2 + j);
        mean /= 4.0;
        CHECK(out.at(4 * 2 + j) == Approx(mean));
        CHECK(out.at(5 * 2 + j) == Approx(mean));
    }
}

TEST_CASE("position expansion to the same length is the identity, shrinking errors") {
    Rng rng(6);
    auto p = Tensor::randn(rng, {4, 2});
    auto same = expand_position_embeddings(p, 4, ExpansionStrategy::parse("zero", 0.0), rng);
    CHECK(same.data() == p.data());
    CHECK_THROWS_AS(expand_position_embeddings(p, 3, ExpansionStrategy::parse("zero", 0.0), rng),
                    Error);
}

TEST_CASE("zero strategy appends exact zero rows") {
    Rng rng(7);
    auto w = Tensor::randn(rng, {3, 4});
    auto out = expand_token_embeddings(w, 2, ExpansionStrategy::parse("zero", 0.5), rng);
    for (size_t i = w.numel(); i < out.numel(); ++i) CHECK(out.at(i) == 0.0);
}

TEST_CASE("encode_text returns a deterministic unit vector") {
    Rng rng(8);
    TextEncoder enc(small_text_cfg(), rng);
    std::vector<uint32_t> ids = {1, 50, 120, 2};
    auto a = enc.encode(ids);
    auto b = enc.encode(ids);
    CHECK(a.size() == 8);
    CHECK(a == b);
    CHECK(std::abs(l2(a) - 1.0) < 1e-9);
}

TEST_CASE("encode_text validates ids and length") {
    Rng rng(9);
    TextEncoder enc(small_text_cfg(), rng);
    CHECK_THROWS_AS(enc.encode({1, 259, 2}), Error);
    CHECK_THROWS_AS(enc.encode(std::vector<uint32_t>(9, 5)), Error);
    CHECK_THROWS_AS(enc.encode({}), Error);
}

TEST_CASE("expansion preserves embeddings of base-vocabulary prompts exactly") {
    Rng rng(10);
    TextEncoder enc(small_text_cfg(), rng);
    Rng prompt_rng(11);
    std::vector<std::vector<uint32_t>> prompts;
    for (int i = 0; i < 20; ++i) {
        std::vector<uint32_t> ids;
        const size_t n = 1 + prompt_rng.below(8);
        for (size_t j = 0; j < n; ++j)
            ids.push_back(static_cast<uint32_t>(prompt_rng.below(259)));
        prompts.push_back(ids);
    }
    std::vector<std::vector<double>> before;
    for (const auto& p : prompts) before.push_back(enc.encode(p));

    Rng exp_rng(12);
    enc.expand(259 + 50, 16, ExpansionStrategy::parse("mean-init", 0.02), exp_rng);
    CHECK(enc.vocab_size() == 309);
    CHECK(enc.context_length() == 16);

    for (size_t i = 0; i < prompts.size(); ++i) {
        auto after = enc.encode(prompts[i]);
        double worst = 0.0;
        for (size_t j = 0; j < after.size(); ++j)
            worst = std::max(worst, std::abs(after[j] - before[i][j]));
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("gradients reach expanded rows only when their tokens occur") {
    Rng rng(13);
    TextEncoder enc(small_text_cfg(), rng);
    Rng exp_rng(14);
    enc.expand(261, 8, ExpansionStrategy::parse("mean-init", 0.02), exp_rng);

    auto run = [&](const std::vector<uint32_t>& ids) {
        for (auto& t : enc.parameters()) t.zero_grad();
        backward(sum_all(enc.forward(ids)));
        const auto& g = enc.token_embeddings().grad();
        const size_t d = enc.token_embeddings().dim(1);
        auto row_touched = [&](size_t row) {
            for (size_t j = 0; j < d; ++j)
                if (g[row * d + j] != 0.0) return true;
            return false;
        };
        return std::make_pair(row_touched(259), row_touched(260));
    };

    auto [a1, b1] = run({1, 259, 2});
    CHECK(a1);
    CHECK_FALSE(b1);
    auto [a2, b2] = run({1, 42, 2});
    CHECK_FALSE(a2);
    CHECK_FALSE(b2);
    auto [a3, b3] = run({1, 260, 260, 2});
    CHECK_FALSE(a3);
    CHECK(b3);
}

TEST_CASE("perturbing an expanded row only affects inputs that use it") {
    Rng rng(15);
    TextEncoder enc(small_text_cfg(), rng);
    Rng exp_rng(16);
    enc.expand(260, 8, ExpansionStrategy::parse("copy-last", 0.0), exp_rng);

    std::vector<uint32_t> with = {1, 259, 2};
    std::vector<uint32_t> without = {1, 77, 2};
    auto base_with = enc.encode(with);
    auto base_without = enc.encode(without);

    auto& emb = enc.token_embeddings().values_mut();
    const size_t d = enc.token_embeddings().dim(1);
    for (size_t j = 0; j < d; ++j) emb[259 * d + j] += 0.25;

    CHECK(enc.encode(without) == base_without);
    CHECK(enc.encode(with) != base_with);
}

TEST_CASE("encode_image contract: unit norm, determinism, shape checks") {
    Rng rng(17);
    ImageEncoder enc(small_image_cfg(), rng);
    Rng img_rng(18);
    auto img = Tensor::randn(img_rng, {1, 8, 8});
    auto a = enc.encode(img);
    CHECK(a.size() == 8);
    CHECK(std::abs(l2(a) - 1.0) < 1e-9);
    CHECK(enc.encode(img) == a);
    CHECK_THROWS_AS(enc.encode(Tensor::zeros({1, 7, 8})), Error);
    CHECK_THROWS_AS(enc.encode(Tensor::zeros({2, 8, 8})), Error);
}

TEST_CASE("zero and one images embed differently") {
    Rng rng(19);
    ImageEncoder enc(small_image_cfg(), rng);
    auto z = enc.encode(Tensor::zeros({1, 8, 8}));
    auto o = enc.encode(Tensor::ones({1, 8, 8}));
    CHECK(cosine(z, o) < 1.0 - 1e-6);
}

TEST_CASE("image embeddings are pure functions of their inputs") {
    Rng rng(20);
    ImageEncoder enc(small_image_cfg(), rng);
    Rng img_rng(21);
    auto a = Tensor::randn(img_rng, {1, 8, 8});
    auto b = Tensor::randn(img_rng, {1, 8, 8});
    auto ea = enc.encode(a);
    auto eb = enc.encode(b);
    // order of evaluation carries no hidden state
    CHECK(enc.encode(b) == eb);
    CHECK(enc.encode(a) == ea);
}

TEST_CASE("tiny end-to-end gradient check through both encoders") {
    Rng rng(22);
    TextEncoderConfig tc = small_text_cfg();
    tc.dim = 8;
    tc.heads = 2;
    tc.blocks = 1;
    tc.embed_dim = 4;
    TextEncoder text(tc, rng);
    ImageEncoderConfig ic = small_image_cfg();
    ic.dim = 8;
    ic.heads = 2;
    ic.blocks = 1;
    ic.embed_dim = 4;
    ic.max_patches = 4;
    ImageEncoder image(ic, rng);
    Rng img_rng(23);
    auto img = Tensor::randn(img_rng, {1, 4, 4});
    std::vector<uint32_t> ids = {1, 10, 2};

    auto loss = [&]() { return sum_all(mul(text.forward(ids), image.forward(img))); };
    auto params = text.parameters();
    auto ip = image.parameters();
    params.insert(params.end(), ip.begin(), ip.end());
    CHECK(oracles::check_gradients(loss, params) < 1e-5);
}
