#include <catch2/catch.hpp>

#include <filesystem>

#include <json.hpp>

#include "cli_helpers.hpp"
#include "taiyi/checkpoint.hpp"
#include "taiyi/dataset.hpp"
#include "taiyi/tokenizer.hpp"

namespace fs = std::filesystem;

namespace {

// One shared workspace: the fixture steps build on each other in order.
const fs::path kWork = fs::temp_directory_path() / "taiyi_cli_test";

// Tiny but trainable settings so the whole CLI flow stays around a second.
const char* kSmallConfig =
    "seed = 11\n"
    "synth_classes = 2\n"
    "synth_per_class = 4\n"
    "resolutions = 8,16\n"
    "text_dim = 16\n"
    "text_heads = 2\n"
    "text_blocks = 1\n"
    "text_context = 32\n"
    "embed_dim = 8\n"
    "image_dim = 16\n"
    "image_heads = 2\n"
    "image_blocks = 1\n"
    "image_max_patches = 64\n"
    "batch_size = 4\n"
    "total_steps = 3\n"
    "warmup_steps = 1\n"
    "optimizer = adam\n"
    "base_lr = 1e-3\n"
    "diff_base_channels = 4\n"
    "diff_context_tokens = 2\n"
    "diff_context_dim = 4\n"
    "diff_attn_dim = 8\n"
    "diff_time_dim = 8\n"
    "diff_timesteps = 10\n"
    "eval_count = 4\n";

std::string cfg_path() {
    const auto path = kWork / "config.txt";
    if (!fs::exists(path)) cli::spit(path, kSmallConfig);
    return path.string();
}

std::string corpus_path() {
    const auto path = kWork / "corpus.txt";
    if (!fs::exists(path)) {
        cli::spit(path, "图像生成模型，图像与文字对齐。样本样本图案清晰。\n");
    }
    return path.string();
}

}  // namespace

TEST_CASE("cli synth-data writes a manifest and loadable artifacts") {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    const auto out = kWork / "synth";
    auto r = cli::run("synth-data --config " + cfg_path() + " --out " + out.string(), kWork);
    REQUIRE(r.exit_code == 0);

    auto ds = taiyi::Dataset::load((out / "data.jsonl").string());
    CHECK(ds.size() == 16);  // 2 classes x 4 images x 2 caption sources
    auto manifest = nlohmann::json::parse(cli::slurp(out / "manifest.json"));
    CHECK(manifest["command"] == "synth-data");
    CHECK(manifest["seed"] == 11);
    CHECK(manifest["artifacts"].size() >= 9);  // 8 images + data.jsonl
    for (const auto& a : manifest["artifacts"]) {
        CHECK(fs::exists(out / a.get<std::string>()));
    }
}

TEST_CASE("cli tokenizer analyze and expand") {
    const auto aout = kWork / "analyze";
    auto r = cli::run("tokenizer analyze --corpus " + corpus_path() + " --config " + cfg_path() +
                          " --out " + aout.string(),
                      kWork);
    REQUIRE(r.exit_code == 0);
    const std::string tsv = cli::slurp(aout / "frequency.tsv");
    CHECK(tsv.find("图\t56FE\t") != std::string::npos);

    const auto eout = kWork / "vocab";
    r = cli::run("tokenizer expand --corpus " + corpus_path() + " --k 5 --config " + cfg_path() +
                     " --out " + eout.string(),
                 kWork);
    REQUIRE(r.exit_code == 0);
    auto vocab = taiyi::Vocabulary::load((eout / "vocab.txt").string());
    CHECK(vocab.size() == 264);
    // most frequent characters of the corpus got ids first
    CHECK(vocab.has_char("图"));
    CHECK(vocab.has_char("样"));

    // extending an existing vocab keeps prior ids
    const auto eout2 = kWork / "vocab2";
    r = cli::run("tokenizer expand --corpus " + corpus_path() + " --k 50 --vocab " +
                     (eout / "vocab.txt").string() + " --config " + cfg_path() + " --out " +
                     eout2.string(),
                 kWork);
    REQUIRE(r.exit_code == 0);
    auto vocab2 = taiyi::Vocabulary::load((eout2 / "vocab.txt").string());
    CHECK(vocab2.size() > vocab.size());
    CHECK(vocab2.char_id("图") == vocab.char_id("图"));
}

TEST_CASE("cli trains clip, expands the model, and evaluates retrieval") {
    const auto synth = kWork / "synth";
    const auto vocab = kWork / "vocab" / "vocab.txt";
    const auto train_out = kWork / "clip";
    auto r = cli::run("train clip --config " + cfg_path() + " --data " +
                          (synth / "data.jsonl").string() + " --images " +
                          (synth / "images").string() + " --vocab " + vocab.string() + " --out " +
                          train_out.string(),
                      kWork);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(train_out / "clip.ckpt"));
    const std::string log = cli::slurp(train_out / "train_log.csv");
    CHECK(log.rfind("step,lr,loss\n", 0) == 0);

    // model expand onto a larger vocabulary
    const auto vocab2 = kWork / "vocab2" / "vocab.txt";
    const auto expand_out = kWork / "clip_expanded";
    r = cli::run("model expand --checkpoint " + (train_out / "clip.ckpt").string() + " --vocab " +
                     vocab2.string() + " --config " + cfg_path() + " --out " +
                     expand_out.string(),
                 kWork);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    auto expanded = taiyi::clip_from_checkpoint(
        taiyi::Checkpoint::load((expand_out / "clip.ckpt").string()));
    auto v2 = taiyi::Vocabulary::load(vocab2.string());
    CHECK(expanded.text.vocab_size() == v2.size());
    CHECK(expanded.text.legacy_vocab_rows() == 264);

    // retrieval report on the training checkpoint
    const auto eval_out = kWork / "eval_retr";
    r = cli::run("eval retrieval --checkpoint " + (train_out / "clip.ckpt").string() +
                     " --vocab " + vocab.string() + " --data " + (synth / "data.jsonl").string() +
                     " --images " + (synth / "images").string() + " --config " + cfg_path() +
                     " --out " + eval_out.string(),
                 kWork);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const std::string report = cli::slurp(eval_out / "report.txt");
    CHECK(report.find("Image -> Text") != std::string::npos);
    CHECK(report.find("Text -> Image") != std::string::npos);
    CHECK(cli::slurp(eval_out / "report.csv").find("i2t_r@1") != std::string::npos);
}

TEST_CASE("cli trains diffusion, samples deterministically, and evaluates generation") {
    const auto synth = kWork / "synth";
    const auto vocab = kWork / "vocab" / "vocab.txt";
    const auto clip_ckpt = kWork / "clip" / "clip.ckpt";
    const auto diff_out = kWork / "diff";
    auto r = cli::run("train diffusion --config " + cfg_path() + " --data " +
                          (synth / "data.jsonl").string() + " --images " +
                          (synth / "images").string() + " --vocab " + vocab.string() + " --clip " +
                          clip_ckpt.string() + " --out " + diff_out.string(),
                      kWork);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const std::string log = cli::slurp(diff_out / "train_log.csv");
    CHECK(log.rfind("step,lr,loss,tag\n", 0) == 0);
    CHECK(log.find("8x8") != std::string::npos);
    CHECK(log.find("16x16") != std::string::npos);

    // sampling twice with the same seed gives byte-identical images
    const auto s1 = kWork / "sample1";
    const auto s2 = kWork / "sample2";
    const std::string sample_args = "sample --checkpoint " + (diff_out / "diffusion.ckpt").string() +
                                    " --vocab " + vocab.string() + " --prompt 图案0号1 --config " +
                                    cfg_path() + " --seed 7 --out ";
    REQUIRE(cli::run(sample_args + s1.string(), kWork).exit_code == 0);
    REQUIRE(cli::run(sample_args + s2.string(), kWork).exit_code == 0);
    CHECK(cli::slurp(s1 / "sample.pgm") == cli::slurp(s2 / "sample.pgm"));
    CHECK(cli::slurp(s1 / "sample.pgm").substr(0, 2) == "P5");

    // a different seed changes the image
    const auto s3 = kWork / "sample3";
    REQUIRE(cli::run("sample --checkpoint " + (diff_out / "diffusion.ckpt").string() +
                         " --vocab " + vocab.string() + " --prompt 图案0号1 --config " +
                         cfg_path() + " --seed 8 --out " + s3.string(),
                     kWork)
                .exit_code == 0);
    CHECK(cli::slurp(s1 / "sample.pgm") != cli::slurp(s3 / "sample.pgm"));

    // the subtraction sampler is selectable through the config
    const auto sub_cfg = kWork / "sub_config.txt";
    cli::spit(sub_cfg, std::string(kSmallConfig) + "sampler = subtractive\n");
    const auto s4 = kWork / "sample4";
    auto rsub = cli::run("sample --checkpoint " + (diff_out / "diffusion.ckpt").string() +
                             " --vocab " + vocab.string() + " --prompt 图案0号1 --config " +
                             sub_cfg.string() + " --seed 8 --out " + s4.string(),
                         kWork);
    REQUIRE(rsub.exit_code == 0);
    CHECK(rsub.output.find("subtractive") != std::string::npos);
    CHECK(cli::slurp(s4 / "sample.pgm").substr(0, 2) == "P5");

    const auto gen_out = kWork / "eval_gen";
    r = cli::run("eval generation --clip " + clip_ckpt.string() + " --diffusion " +
                     (diff_out / "diffusion.ckpt").string() + " --vocab " + vocab.string() +
                     " --data " + (synth / "data.jsonl").string() + " --images " +
                     (synth / "images").string() + " --config " + cfg_path() + " --out " +
                     gen_out.string(),
                 kWork);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    const std::string csv = cli::slurp(gen_out / "report.csv");
    CHECK(csv.find("CLIP Sim") != std::string::npos);
    CHECK(csv.find("FID") != std::string::npos);
    CHECK(csv.find("IS") != std::string::npos);
}

TEST_CASE("cli enrich with the mock client keeps both caption sources") {
    const auto synth = kWork / "synth";
    const auto out = kWork / "enriched";
    // backoff-free config so injected retries cost no wall time
    const auto cfg = kWork / "enrich_config.txt";
    cli::spit(cfg, std::string(kSmallConfig) + "enrich_backoff_s = 0\nsplit_ratio = 0.75\n");
    auto r = cli::run("enrich --data " + (synth / "data.jsonl").string() + " --images " +
                          (synth / "images").string() + " --mock --config " + cfg.string() +
                          " --out " + out.string(),
                      kWork);
    INFO(r.output);
    REQUIRE(r.exit_code == 0);
    auto enriched = taiyi::Dataset::load((out / "enriched.jsonl").string());
    CHECK(enriched.size() == 16);  // 8 images, web + synthetic each
    size_t synthetic = 0;
    for (const auto& rec : enriched.records) {
        if (rec.source == "synthetic") {
            synthetic += 1;
            CHECK(rec.caption.rfind("desc:", 0) == 0);
        }
    }
    CHECK(synthetic == 8);
    auto train = taiyi::Dataset::load((out / "train.jsonl").string());
    auto val = taiyi::Dataset::load((out / "val.jsonl").string());
    CHECK(train.size() + val.size() == 16);
    CHECK(cli::slurp(out / "report.txt").find("succeeded 8") != std::string::npos);

    // the enriched output feeds stage-2 training directly
    const auto stage2_cfg = kWork / "stage2_config.txt";
    cli::spit(stage2_cfg, std::string(kSmallConfig) + "stage = stage2\n");
    auto r2 = cli::run("train clip --config " + stage2_cfg.string() + " --data " +
                           (out / "enriched.jsonl").string() + " --images " +
                           (kWork / "synth" / "images").string() + " --vocab " +
                           (kWork / "vocab" / "vocab.txt").string() + " --out " +
                           (kWork / "clip_stage2").string(),
                       kWork);
    INFO(r2.output);
    REQUIRE(r2.exit_code == 0);
    CHECK(fs::exists(kWork / "clip_stage2" / "clip.ckpt"));
}

TEST_CASE("cli reports distinct exit codes per failure class") {
    // missing data file -> io error (3)
    auto r = cli::run("train clip --data /nonexistent.jsonl --images . --config " + cfg_path() +
                          " --out " + (kWork / "e1").string(),
                      kWork);
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("error: io:") != std::string::npos);

    // unknown config key -> config error (2)
    const auto bad_cfg = kWork / "bad_config.txt";
    cli::spit(bad_cfg, "definitely_not_a_key = 1\n");
    r = cli::run("synth-data --config " + bad_cfg.string() + " --out " + (kWork / "e2").string(),
                 kWork);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("definitely_not_a_key") != std::string::npos);

    // vocab/checkpoint mismatch -> incompatibility (4)
    const auto base_vocab = kWork / "base_vocab.txt";
    cli::spit(base_vocab, "taiyi-vocab v1\n");
    r = cli::run("eval retrieval --checkpoint " + (kWork / "clip" / "clip.ckpt").string() +
                     " --vocab " + base_vocab.string() + " --data " +
                     (kWork / "synth" / "data.jsonl").string() + " --images " +
                     (kWork / "synth" / "images").string() + " --config " + cfg_path() +
                     " --out " + (kWork / "e3").string(),
                 kWork);
    CHECK(r.exit_code == 4);

    // corrupt checkpoint -> format error (5)
    const auto corrupt = kWork / "corrupt.ckpt";
    cli::spit(corrupt, "XXXXnotacheckpoint");
    r = cli::run("sample --checkpoint " + corrupt.string() + " --prompt hi --config " +
                     cfg_path() + " --out " + (kWork / "e4").string(),
                 kWork);
    CHECK(r.exit_code == 5);
    CHECK(r.output.find("magic") != std::string::npos);
}

TEST_CASE("cli runs are byte-reproducible per (config, seed)") {
    const auto a = kWork / "repro_a";
    const auto b = kWork / "repro_b";
    for (const auto& out : {a, b}) {
        auto r = cli::run("synth-data --config " + cfg_path() + " --out " + out.string(), kWork);
        REQUIRE(r.exit_code == 0);
    }
    CHECK(cli::dirs_identical(a, b));

    // a different seed changes artifact bytes but not the file set
    const auto c = kWork / "repro_c";
    REQUIRE(cli::run("synth-data --config " + cfg_path() + " --seed 999 --out " + c.string(),
                     kWork)
                .exit_code == 0);
    CHECK_FALSE(cli::dirs_identical(a, c));
}
