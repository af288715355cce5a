#include <catch2/catch.hpp>

#include <cmath>
#include <filesystem>
#include <set>

#include "taiyi/checkpoint.hpp"
#include "taiyi/config.hpp"
#include "taiyi/dataset.hpp"
#include "taiyi/image_io.hpp"
#include "taiyi/synthdata.hpp"

using namespace taiyi;

TEST_CASE("checkpoint round-trips a clip model bit-exactly") {
    Rng rng(1);
    TextEncoderConfig tc;
    tc.dim = 16;
    tc.heads = 2;
    tc.blocks = 1;
    tc.embed_dim = 8;
    tc.context = 8;
    ImageEncoderConfig ic;
    ic.dim = 16;
    ic.heads = 2;
    ic.blocks = 1;
    ic.embed_dim = 8;
    ic.max_patches = 16;
    TextEncoder text(tc, rng);
    ImageEncoder image(ic, rng);

    auto ck = make_clip_checkpoint(text, image, {{"seed", 42}});
    const std::string bytes = ck.serialize();
    auto back = Checkpoint::deserialize(bytes);
    CHECK(back.serialize() == bytes);

    auto model = clip_from_checkpoint(back);
    auto want = text.named_parameters();
    auto got = model.text.named_parameters();
    REQUIRE(want.size() == got.size());
    for (size_t i = 0; i < want.size(); ++i) {
        CHECK(want[i].first == got[i].first);
        CHECK(want[i].second.data() == got[i].second.data());
    }
    CHECK(model.text.encode({1, 42, 2}) == text.encode({1, 42, 2}));
    Rng ir(2);
    auto img = Tensor::randn(ir, {1, 8, 8});
    CHECK(model.image.encode(img) == image.encode(img));
    CHECK(back.meta["seed"] == 42);
}

TEST_CASE("checkpoint round-trips a diffusion model bit-exactly") {
    Rng rng(3);
    DenoiserConfig dc;
    dc.base_channels = 2;
    dc.context_tokens = 2;
    dc.context_dim = 4;
    dc.attn_dim = 4;
    dc.time_dim = 8;
    TextEncoderConfig tc;
    tc.dim = 8;
    tc.heads = 2;
    tc.blocks = 1;
    tc.embed_dim = 16;
    tc.context = 8;
    Denoiser den(dc, rng);
    TextEncoder text(tc, rng);

    auto ck = make_diffusion_checkpoint(den, text);
    auto model = diffusion_from_checkpoint(Checkpoint::deserialize(ck.serialize()));
    Rng zr(4);
    auto z = Tensor::randn(zr, {1, 4, 4});
    auto txt = text.forward({1, 5, 2});
    CHECK(model.denoiser.forward(z, 2, txt).data() == den.forward(z, 2, txt).data());
}

TEST_CASE("checkpoint kind mismatch is a compatibility error") {
    Rng rng(5);
    TextEncoderConfig tc;
    tc.dim = 8;
    tc.heads = 2;
    tc.blocks = 1;
    tc.embed_dim = 4;
    TextEncoder text(tc, rng);
    ImageEncoderConfig ic;
    ic.dim = 8;
    ic.heads = 2;
    ic.blocks = 1;
    ic.embed_dim = 4;
    ImageEncoder image(ic, rng);
    auto ck = make_clip_checkpoint(text, image);
    CHECK_THROWS_AS(diffusion_from_checkpoint(ck), CompatError);
}

TEST_CASE("checkpoint rejects corrupted containers with distinct messages") {
    Rng rng(6);
    TextEncoderConfig tc;
    tc.dim = 8;
    tc.heads = 2;
    tc.blocks = 1;
    tc.embed_dim = 4;
    ImageEncoderConfig ic;
    ic.dim = 8;
    ic.heads = 2;
    ic.blocks = 1;
    ic.embed_dim = 4;
    TextEncoder text(tc, rng);
    ImageEncoder image(ic, rng);
    const std::string good = make_clip_checkpoint(text, image).serialize();

    SECTION("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        CHECK_THROWS_WITH(Checkpoint::deserialize(bad), Catch::Contains("magic"));
    }
    SECTION("version mismatch names both versions") {
        std::string bad = good;
        bad[4] = 9;
        CHECK_THROWS_WITH(Checkpoint::deserialize(bad),
                          Catch::Contains("9") && Catch::Contains("1"));
    }
    SECTION("truncated payload") {
        std::string bad = good.substr(0, good.size() - 16);
        CHECK_THROWS_WITH(Checkpoint::deserialize(bad), Catch::Contains("past end"));
    }
    SECTION("header length past EOF") {
        std::string bad = good.substr(0, 20);
        CHECK_THROWS_WITH(Checkpoint::deserialize(bad), Catch::Contains("header length"));
    }
    SECTION("offset past EOF via crafted header") {
        Checkpoint crafted;
        crafted.meta["kind"] = "raw";
        crafted.tensors.emplace_back("w", Tensor::zeros({4}));
        std::string bytes = crafted.serialize();
        // rewrite the declared offset far past the payload
        const std::string needle = "\"offset\":0";
        const size_t pos = bytes.find(needle);
        REQUIRE(pos != std::string::npos);
        bytes.replace(pos, needle.size(), "\"offset\":9");
        // header length unchanged (same digit count), payload now too short
        CHECK_THROWS_WITH(Checkpoint::deserialize(bytes), Catch::Contains("past end"));
    }
    SECTION("duplicate tensor names") {
        Checkpoint crafted;
        crafted.tensors.emplace_back("w", Tensor::zeros({2}));
        crafted.tensors.emplace_back("w", Tensor::zeros({2}));
        CHECK_THROWS_WITH(Checkpoint::deserialize(crafted.serialize()),
                          Catch::Contains("duplicate"));
    }
    SECTION("overlapping payload spans") {
        // hand-built container: tensor b's span intrudes into a's
        const std::string header =
            R"({"meta":{},"tensors":[{"name":"a","offset":0,"shape":[2]},)"
            R"({"name":"b","offset":8,"shape":[2]}]})";
        std::string bytes = "TXLC";
        const uint32_t version = 1;
        const uint64_t hlen = header.size();
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((version >> (8 * i)) & 0xFF));
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((hlen >> (8 * i)) & 0xFF));
        bytes += header;
        bytes.append(24, '\0');  // three f64 zeros
        CHECK_THROWS_WITH(Checkpoint::deserialize(bytes), Catch::Contains("overlapping"));
    }
    SECTION("non-finite payload") {
        Checkpoint crafted;
        crafted.tensors.emplace_back("w", Tensor::zeros({1}));
        std::string bytes = crafted.serialize();
        // overwrite the payload with a NaN pattern
        for (int i = 0; i < 8; ++i) bytes[bytes.size() - 8 + i] = static_cast<char>(0xFF);
        CHECK_THROWS_WITH(Checkpoint::deserialize(bytes), Catch::Contains("non-finite"));
    }
}

TEST_CASE("config parses values, rejects unknown keys, and hashes effectively") {
    auto cfg = RunConfig::from_text("seed = 7\nbatch_size=4 # trailing comment\n\n# full line\n");
    CHECK(cfg.get_size("seed") == 7);
    CHECK(cfg.get_size("batch_size") == 4);
    CHECK(cfg.get_double("temperature") == 0.07);  // untouched default
    CHECK(cfg.get_bool("freeze_legacy_rows") == false);
    CHECK(cfg.get_size_list("resolutions") == std::vector<size_t>({8, 16}));

    CHECK_THROWS_WITH(RunConfig::from_text("unknown_key = 1\n"),
                      Catch::Contains("unknown_key"));
    CHECK_THROWS_AS(RunConfig::from_text("just some words\n"), ConfigError);
    CHECK_THROWS_AS(cfg.get_int("expand_strategy"), ConfigError);

    auto cfg2 = RunConfig::from_text("seed = 7\nbatch_size = 4\n");
    CHECK(cfg.hash() == cfg2.hash());
    auto cfg3 = RunConfig::from_text("seed = 8\nbatch_size = 4\n");
    CHECK(cfg.hash() != cfg3.hash());
    // setting a key to its default value leaves the effective config equal
    auto cfg4 = RunConfig::from_text("temperature = 0.07\nseed = 7\nbatch_size = 4\n");
    CHECK(cfg4.hash() == cfg.hash());
}

TEST_CASE("dataset JSONL round-trips and validates") {
    Dataset ds;
    ds.records.push_back({"a", "a.pgm", "a cat", "web", "en"});
    ds.records.push_back({"a", "a.pgm", "一只猫", "synthetic", "zh"});
    const std::string text = ds.to_jsonl();
    auto back = Dataset::from_jsonl(text);
    CHECK(back.to_jsonl() == text);
    REQUIRE(back.size() == 2);
    CHECK(back.records[1].caption == "一只猫");

    CHECK_THROWS_WITH(Dataset::from_jsonl("{\"id\":\"x\"}\n"), Catch::Contains("line 1"));
    CHECK_THROWS_WITH(Dataset::from_jsonl("not json\n"), Catch::Contains("line 1"));
}

TEST_CASE("pgm round-trip preserves bytes exactly") {
    Rng rng(7);
    auto img = Tensor::randn(rng, {1, 6, 4}, 0.4);
    const std::string bytes = image_to_pnm(img);
    CHECK(bytes.substr(0, 3) == "P5\n");
    auto back = image_from_pnm(bytes);
    CHECK(back.shape() == img.shape());
    CHECK(image_to_pnm(back) == bytes);  // byte-stable after one quantization
}

TEST_CASE("ppm handles three channels") {
    Rng rng(8);
    auto img = Tensor::randn(rng, {3, 4, 4}, 0.4);
    const std::string bytes = image_to_pnm(img);
    CHECK(bytes.substr(0, 3) == "P6\n");
    auto back = image_from_pnm(bytes);
    CHECK(back.dim(0) == 3);
    CHECK(image_to_pnm(back) == bytes);
}

TEST_CASE("image io rejects malformed headers") {
    CHECK_THROWS_AS(image_from_pnm("P4\n2 2\n255\nxxxx"), FormatError);
    CHECK_THROWS_AS(image_from_pnm("P5\n2 2\n65535\nxxxx"), FormatError);
    CHECK_THROWS_AS(image_from_pnm("P5\n2 2\n255\nx"), FormatError);
    CHECK_THROWS_AS(image_to_pnm(Tensor::zeros({2, 4, 4})), Error);
}

TEST_CASE("rescaled serialization covers constant and varied inputs") {
    auto flat = rescaled_to_pnm(Tensor::full({1, 2, 2}, 3.7));
    auto img = image_from_pnm(flat);
    for (size_t i = 0; i < 4; ++i) CHECK(img.at(i) == -1.0);

    auto varied = Tensor::from_data({1, 2, 2}, {-10.0, 0.0, 5.0, 10.0});
    auto rt = image_from_pnm(rescaled_to_pnm(varied));
    CHECK(rt.at(0) == -1.0);
    CHECK(rt.at(3) == 1.0);
}

TEST_CASE("synth_data produces the documented record count and determinism") {
    SynthSpec spec;
    spec.classes = 2;
    spec.per_class = 32;
    spec.resolutions = {8, 16};
    auto a = synth_data(spec, 5);
    auto b = synth_data(spec, 5);
    CHECK(a.dataset.size() == 128);  // 64 images, two caption sources each
    CHECK(a.images.size() == 64);
    CHECK(a.dataset.to_jsonl() == b.dataset.to_jsonl());
    for (size_t i = 0; i < a.images.size(); ++i) {
        CHECK(a.images[i].first == b.images[i].first);
        CHECK(a.images[i].second.data() == b.images[i].second.data());
    }
    auto c = synth_data(spec, 6);
    CHECK(a.dataset.to_jsonl() == c.dataset.to_jsonl());  // captions seed-free
    CHECK(a.images[0].second.data() != c.images[0].second.data());

    // both resolutions, both languages, both sources present
    std::set<size_t> sizes;
    for (const auto& [name, img] : a.images) sizes.insert(img.dim(1));
    CHECK(sizes == std::set<size_t>({8, 16}));
    std::set<std::string> langs, sources;
    for (const auto& r : a.dataset.records) {
        langs.insert(r.language);
        sources.insert(r.source);
    }
    CHECK(langs == std::set<std::string>({"en", "zh"}));
    CHECK(sources == std::set<std::string>({"web", "synthetic"}));
}

TEST_CASE("synth classes are separable: inter-class distance beats intra-class") {
    SynthSpec spec;
    spec.classes = 2;
    spec.per_class = 8;
    spec.resolutions = {8, 16};
    auto data = synth_data(spec, 11);

    auto l2 = [](const Tensor& x, const Tensor& y) {
        double s = 0.0;
        for (size_t i = 0; i < x.numel(); ++i) {
            const double d = x.at(i) - y.at(i);
            s += d * d;
        }
        return std::sqrt(s);
    };
    for (size_t res : {8ul, 16ul}) {
        std::vector<const Tensor*> cls0, cls1;
        for (size_t idx = 0; idx < data.images.size(); ++idx) {
            const auto& [name, img] = data.images[idx];
            if (img.dim(1) != res) continue;
            (name[1] == '0' ? cls0 : cls1).push_back(&img);
        }
        REQUIRE(!cls0.empty());
        REQUIRE(!cls1.empty());
        double max_intra = 0.0, min_inter = 1e300;
        for (auto* a : cls0)
            for (auto* b : cls0)
                if (a != b) max_intra = std::max(max_intra, l2(*a, *b));
        for (auto* a : cls1)
            for (auto* b : cls1)
                if (a != b) max_intra = std::max(max_intra, l2(*a, *b));
        for (auto* a : cls0)
            for (auto* b : cls1) min_inter = std::min(min_inter, l2(*a, *b));
        CHECK(min_inter > max_intra);
    }
}

TEST_CASE("synth_data validates its spec") {
    SynthSpec bad;
    bad.classes = 0;
    CHECK_THROWS_AS(synth_data(bad, 1), Error);
}

TEST_CASE("file round trips for vocab, checkpoint, dataset, image, log") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "taiyi_fmt_test";
    fs::create_directories(dir);

    Rng rng(9);
    auto img = Tensor::randn(rng, {1, 8, 8}, 0.3);
    write_image((dir / "x.pgm").string(), img);
    auto img_back = read_image((dir / "x.pgm").string());
    CHECK(image_to_pnm(img_back) == image_to_pnm(img));

    Dataset ds;
    ds.records.push_back({"i", "x.pgm", "cap", "web", "en"});
    ds.save((dir / "d.jsonl").string());
    CHECK(Dataset::load((dir / "d.jsonl").string()).to_jsonl() == ds.to_jsonl());

    CHECK_THROWS_AS(Dataset::load((dir / "missing.jsonl").string()), IoError);
    CHECK_THROWS_AS(read_image((dir / "missing.pgm").string()), IoError);
    CHECK_THROWS_AS(Checkpoint::load((dir / "missing.ckpt").string()), IoError);

    fs::remove_all(dir);
}
