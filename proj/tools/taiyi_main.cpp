// Command-line surface for the bilingual text-to-image pipeline: tokenizer
// analysis/expansion, embedding surgery, contrastive and diffusion training,
// sampling, caption enrichment, metric evaluation, and synthetic data. Every
// run is reproducible from (config, seed) and writes a manifest naming its
// artifacts.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "taiyi/checkpoint.hpp"
#include "taiyi/cliptrain.hpp"
#include "taiyi/config.hpp"
#include "taiyi/dataset.hpp"
#include "taiyi/diffusion.hpp"
#include "taiyi/encoder.hpp"
#include "taiyi/enrich.hpp"
#include "taiyi/enrich_http.hpp"
#include "taiyi/evalkit.hpp"
#include "taiyi/image_io.hpp"
#include "taiyi/pipeline.hpp"
#include "taiyi/synthdata.hpp"
#include "taiyi/tokenizer.hpp"

namespace fs = std::filesystem;
using namespace taiyi;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    int64_t seed_override = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration file");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed_override, "override the configured seed");
}

RunConfig load_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig() : RunConfig::load(args.config_path);
    if (args.seed_override >= 0) cfg.set("seed", std::to_string(args.seed_override));
    return cfg;
}

// Collects artifact paths (relative to the out dir) and writes the manifest.
class Run {
public:
    Run(std::string command, const CommonArgs& args)
        : command_(std::move(command)), cfg_(load_config(args)), out_(args.out_dir) {
        fs::create_directories(out_);
    }

    const RunConfig& cfg() const { return cfg_; }
    uint64_t seed() const { return static_cast<uint64_t>(cfg_.get_size("seed")); }
    const fs::path& dir() const { return out_; }

    std::string path_of(const std::string& name) {
        artifacts_.push_back(name);
        return (out_ / name).string();
    }

    void write_text(const std::string& name, const std::string& text) {
        std::ofstream f(path_of(name), std::ios::binary);
        if (!f) throw IoError("cannot write " + name);
        f << text;
    }

    void finish() {
        RunManifest manifest;
        manifest.command = command_;
        manifest.config_hash = cfg_.hash();
        manifest.seed = seed();
        manifest.artifacts = artifacts_;
        manifest.save((out_ / "manifest.json").string());
    }

private:
    std::string command_;
    RunConfig cfg_;
    fs::path out_;
    std::vector<std::string> artifacts_;
};

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Vocabulary load_vocab_or_base(const std::string& path) {
    return path.empty() ? Vocabulary() : Vocabulary::load(path);
}

TextEncoderConfig text_config_from(const RunConfig& cfg, size_t vocab_size) {
    TextEncoderConfig tc;
    tc.vocab_size = vocab_size;
    tc.context = cfg.get_size("text_context");
    tc.dim = cfg.get_size("text_dim");
    tc.heads = cfg.get_size("text_heads");
    tc.blocks = cfg.get_size("text_blocks");
    tc.embed_dim = cfg.get_size("embed_dim");
    return tc;
}

ImageEncoderConfig image_config_from(const RunConfig& cfg) {
    ImageEncoderConfig ic;
    ic.patch = cfg.get_size("image_patch");
    ic.channels = cfg.get_size("image_channels");
    ic.max_patches = cfg.get_size("image_max_patches");
    ic.dim = cfg.get_size("image_dim");
    ic.heads = cfg.get_size("image_heads");
    ic.blocks = cfg.get_size("image_blocks");
    ic.embed_dim = cfg.get_size("embed_dim");
    return ic;
}

DenoiserConfig denoiser_config_from(const RunConfig& cfg) {
    DenoiserConfig dc;
    dc.latent_channels = cfg.get_size("image_channels");
    dc.base_channels = cfg.get_size("diff_base_channels");
    dc.text_dim = cfg.get_size("embed_dim");
    dc.context_tokens = cfg.get_size("diff_context_tokens");
    dc.context_dim = cfg.get_size("diff_context_dim");
    dc.attn_dim = cfg.get_size("diff_attn_dim");
    dc.time_dim = cfg.get_size("diff_time_dim");
    return dc;
}

ContrastiveConfig contrastive_config_from(const RunConfig& cfg) {
    ContrastiveConfig cc;
    cc.batch_size = cfg.get_size("batch_size");
    cc.temperature = cfg.get_double("temperature");
    cc.base_lr = cfg.get_double("base_lr");
    cc.warmup_steps = cfg.get_size("warmup_steps");
    cc.total_steps = cfg.get_size("total_steps");
    cc.stage = parse_stage(cfg.get("stage"));
    cc.optimizer = parse_optimizer(cfg.get("optimizer"));
    cc.freeze_legacy_rows = cfg.get_bool("freeze_legacy_rows");
    return cc;
}

DiffusionConfig diffusion_config_from(const RunConfig& cfg) {
    DiffusionConfig dc;
    dc.batch_size = cfg.get_size("batch_size");
    dc.base_lr = cfg.get_double("base_lr");
    dc.warmup_steps = cfg.get_size("warmup_steps");
    dc.total_steps = cfg.get_size("total_steps");
    dc.optimizer = parse_optimizer(cfg.get("optimizer"));
    dc.resolutions.clear();
    for (size_t r : cfg.get_size_list("resolutions")) dc.resolutions.emplace_back(r, r);
    return dc;
}

NoiseSchedule schedule_from(const RunConfig& cfg) {
    return NoiseSchedule::linear(cfg.get_size("diff_timesteps"), cfg.get_double("beta_start"),
                                 cfg.get_double("beta_end"));
}

void check_vocab_compat(const TextEncoder& enc, const Vocabulary& vocab) {
    if (enc.vocab_size() != vocab.size()) {
        throw CompatError("vocab has " + std::to_string(vocab.size()) +
                          " entries but the checkpoint expects " +
                          std::to_string(enc.vocab_size()));
    }
}

InstructionTemplates templates_from(const RunConfig& cfg) {
    InstructionTemplates t;
    if (!cfg.get("instruction_en").empty()) t.en = cfg.get("instruction_en");
    if (!cfg.get("instruction_zh").empty()) t.zh = cfg.get("instruction_zh");
    return t;
}

// ----------------------------------------------------------------- commands

void cmd_synth_data(const CommonArgs& args) {
    Run run("synth-data", args);
    SynthSpec spec;
    spec.classes = run.cfg().get_size("synth_classes");
    spec.per_class = run.cfg().get_size("synth_per_class");
    spec.resolutions = run.cfg().get_size_list("resolutions");
    auto data = synth_data(spec, run.seed());
    fs::create_directories(run.dir() / "images");
    for (const auto& [name, image] : data.images) {
        write_image(run.path_of("images/" + name), image);
    }
    data.dataset.save(run.path_of("data.jsonl"));
    run.finish();
    std::cout << "wrote " << data.dataset.size() << " records over " << data.images.size()
              << " images\n";
}

void cmd_tokenizer_analyze(const CommonArgs& args, const std::string& corpus_path) {
    Run run("tokenizer analyze", args);
    const auto ranges = CharRanges::parse(run.cfg().get("char_ranges"));
    const auto table = char_frequency(read_file(corpus_path), ranges);
    std::ostringstream os;
    for (const auto& e : table) {
        os << e.text() << '\t' << std::hex << std::uppercase << e.cp << std::dec << '\t'
           << e.count << '\n';
    }
    run.write_text("frequency.tsv", os.str());
    run.finish();
    std::cout << "counted " << table.size() << " distinct characters\n";
}

void cmd_tokenizer_expand(const CommonArgs& args, const std::string& corpus_path,
                          const std::string& vocab_path, int64_t k_flag) {
    Run run("tokenizer expand", args);
    const auto ranges = CharRanges::parse(run.cfg().get("char_ranges"));
    const auto table = char_frequency(read_file(corpus_path), ranges);
    const Vocabulary base = load_vocab_or_base(vocab_path);
    const size_t k = k_flag >= 0 ? static_cast<size_t>(k_flag) : run.cfg().get_size("expand_k");
    const Vocabulary vocab = expand_vocabulary(base, table, k);
    vocab.save(run.path_of("vocab.txt"));
    run.finish();
    std::cout << "vocabulary size " << vocab.size() << " (" << vocab.expanded_count()
              << " expanded)\n";
}

void cmd_model_expand(const CommonArgs& args, const std::string& checkpoint_path,
                      const std::string& vocab_path) {
    Run run("model expand", args);
    auto model = clip_from_checkpoint(Checkpoint::load(checkpoint_path));
    const Vocabulary vocab = Vocabulary::load(vocab_path);
    if (vocab.size() < model.text.vocab_size()) {
        throw CompatError("vocab has " + std::to_string(vocab.size()) +
                          " entries, smaller than the checkpoint's " +
                          std::to_string(model.text.vocab_size()));
    }
    const size_t new_context = run.cfg().get_size("text_context");
    const auto strategy = ExpansionStrategy::parse(run.cfg().get("expand_strategy"),
                                                   run.cfg().get_double("expand_sigma"));
    Rng rng(run.seed());
    model.text.expand(vocab.size(), new_context, strategy, rng);
    make_clip_checkpoint(model.text, model.image, {{"seed", run.seed()}})
        .save(run.path_of("clip.ckpt"));
    run.finish();
    std::cout << "expanded to vocab " << model.text.vocab_size() << ", context "
              << model.text.context_length() << "\n";
}

void cmd_train_clip(const CommonArgs& args, const std::string& data_path,
                    const std::string& images_dir, const std::string& vocab_path,
                    const std::string& init_checkpoint) {
    Run run("train clip", args);
    const Vocabulary vocab = load_vocab_or_base(vocab_path);
    const Dataset ds = Dataset::load(data_path);
    ImageStore store(images_dir);
    const ContrastiveConfig cc = contrastive_config_from(run.cfg());
    const size_t max_len = run.cfg().get_size("max_len");

    Rng rng(run.seed());
    TextEncoder text;
    ImageEncoder image;
    if (init_checkpoint.empty()) {
        text = TextEncoder(text_config_from(run.cfg(), vocab.size()), rng);
        image = ImageEncoder(image_config_from(run.cfg()), rng);
    } else {
        auto model = clip_from_checkpoint(Checkpoint::load(init_checkpoint));
        text = model.text;
        image = model.image;
    }
    check_vocab_compat(text, vocab);
    if (max_len > text.context_length()) {
        throw CompatError("max_len " + std::to_string(max_len) + " exceeds text context " +
                          std::to_string(text.context_length()));
    }

    auto examples = build_clip_examples(ds, store, vocab, max_len, cc.stage);
    Rng train_rng = rng.fork(1);
    const TrainLog log = train_clip(examples, cc, text, image, train_rng);
    make_clip_checkpoint(text, image, {{"seed", run.seed()}}).save(run.path_of("clip.ckpt"));
    log.save(run.path_of("train_log.csv"));
    run.finish();
    std::cout << "trained " << log.steps.size() << " steps, final loss "
              << (log.steps.empty() ? 0.0 : log.steps.back().loss) << "\n";
}

void cmd_train_diffusion(const CommonArgs& args, const std::string& data_path,
                         const std::string& images_dir, const std::string& vocab_path,
                         const std::string& clip_checkpoint,
                         const std::string& init_checkpoint) {
    Run run("train diffusion", args);
    const Vocabulary vocab = load_vocab_or_base(vocab_path);
    const Dataset ds = Dataset::load(data_path);
    ImageStore store(images_dir);
    const DiffusionConfig dc = diffusion_config_from(run.cfg());
    const NoiseSchedule sched = schedule_from(run.cfg());
    const size_t max_len = run.cfg().get_size("max_len");

    Rng rng(run.seed());
    Denoiser den;
    TextEncoder text;
    if (!init_checkpoint.empty()) {
        auto model = diffusion_from_checkpoint(Checkpoint::load(init_checkpoint));
        den = model.denoiser;
        text = model.text;
    } else {
        if (clip_checkpoint.empty()) {
            throw ConfigError("train diffusion needs --clip or --init");
        }
        auto clip = clip_from_checkpoint(Checkpoint::load(clip_checkpoint));
        text = clip.text;
        den = Denoiser(denoiser_config_from(run.cfg()), rng);
    }
    check_vocab_compat(text, vocab);

    auto items = build_diffusion_items(ds, store, vocab, max_len,
                                       run.cfg().get("diff_caption_source"));
    Rng train_rng = rng.fork(2);
    const TrainLog log = train_diffusion(items, dc, den, text, sched, train_rng);
    make_diffusion_checkpoint(den, text, {{"seed", run.seed()}})
        .save(run.path_of("diffusion.ckpt"));
    log.save(run.path_of("train_log.csv"));
    run.finish();
    std::cout << "trained " << log.steps.size() << " steps, final loss "
              << (log.steps.empty() ? 0.0 : log.steps.back().loss) << "\n";
}

void cmd_sample(const CommonArgs& args, const std::string& checkpoint_path,
                const std::string& vocab_path, const std::string& prompt) {
    Run run("sample", args);
    auto model = diffusion_from_checkpoint(Checkpoint::load(checkpoint_path));
    const Vocabulary vocab = load_vocab_or_base(vocab_path);
    check_vocab_compat(model.text, vocab);
    const size_t max_len = run.cfg().get_size("max_len");
    const size_t size = run.cfg().get_size("sample_size");
    if (size % 2 != 0 || size < 4) throw ConfigError("sample_size must be even and at least 4");
    const NoiseSchedule sched = schedule_from(run.cfg());
    const auto ids = encode(vocab, prompt, max_len);
    const Tensor txt = model.text.forward(ids);
    const Shape latent = {model.denoiser.config().latent_channels, size / 2, size / 2};
    const std::string sampler = run.cfg().get("sampler");
    Rng rng(run.seed());
    Tensor image;
    if (sampler == "ddpm") {
        image = sample_ddpm(as_predictor(model.denoiser), txt, latent, sched, rng);
    } else if (sampler == "subtractive") {
        image = sample_subtractive(as_predictor(model.denoiser), txt, latent, sched.steps(), rng);
    } else {
        throw ConfigError("sampler must be 'ddpm' or 'subtractive', got '" + sampler + "'");
    }
    run.write_text(image.dim(0) == 3 ? "sample.ppm" : "sample.pgm", rescaled_to_pnm(image));
    run.finish();
    std::cout << "sampled " << size << "x" << size << " image with " << sampler << " sampler\n";
}

void cmd_enrich(const CommonArgs& args, const std::string& data_path,
                const std::string& images_dir, bool mock) {
    Run run("enrich", args);
    const Dataset ds = Dataset::load(data_path);
    const auto records = raw_records_from(ds);
    RetryPolicy policy;
    policy.attempts = run.cfg().get_size("enrich_attempts");
    policy.backoff_start_s = run.cfg().get_double("enrich_backoff_s");
    const size_t concurrency = run.cfg().get_size("enrich_concurrency");

    MockCaptionClient mock_client;
    std::unique_ptr<HttpCaptionClient> http_client;
    CaptionClient* client = &mock_client;
    if (!mock) {
        const std::string endpoint = run.cfg().get("enrich_endpoint");
        if (endpoint.empty()) {
            throw ConfigError("enrich: set enrich_endpoint in the config or pass --mock");
        }
        http_client = std::make_unique<HttpCaptionClient>(endpoint);
        client = http_client.get();
    }
    auto result = enrich_captions(records, *client, policy, file_image_loader(images_dir),
                                  templates_from(run.cfg()), std::max<size_t>(1, concurrency));

    Dataset enriched;
    enriched.records = result.pairs;
    enriched.save(run.path_of("enriched.jsonl"));
    auto split = assemble_dataset(result.pairs, run.cfg().get_double("split_ratio"), run.seed());
    split.train.save(run.path_of("train.jsonl"));
    split.val.save(run.path_of("val.jsonl"));
    run.write_text("report.txt", result.report.to_text());
    run.finish();
    std::cout << result.report.to_text();
}

void cmd_eval_retrieval(const CommonArgs& args, const std::string& checkpoint_path,
                        const std::string& vocab_path, const std::string& data_path,
                        const std::string& images_dir) {
    Run run("eval retrieval", args);
    auto model = clip_from_checkpoint(Checkpoint::load(checkpoint_path));
    const Vocabulary vocab = load_vocab_or_base(vocab_path);
    check_vocab_compat(model.text, vocab);
    const Dataset ds = Dataset::load(data_path);
    ImageStore store(images_dir);
    const std::string source =
        parse_stage(run.cfg().get("stage")) == TrainStage::stage1 ? "web" : "synthetic";
    auto items = build_retrieval_items(ds, store, vocab, run.cfg().get_size("max_len"), source);
    const MetricReport report = evaluate_retrieval(model.text, model.image, items);
    run.write_text("report.txt", retrieval_table_text(report));
    run.write_text("report.csv", report.to_csv());
    run.finish();
    std::cout << retrieval_table_text(report);
}

void cmd_eval_generation(const CommonArgs& args, const std::string& clip_path,
                         const std::string& diffusion_path, const std::string& vocab_path,
                         const std::string& data_path, const std::string& images_dir) {
    Run run("eval generation", args);
    auto clip = clip_from_checkpoint(Checkpoint::load(clip_path));
    auto diff = diffusion_from_checkpoint(Checkpoint::load(diffusion_path));
    const Vocabulary vocab = load_vocab_or_base(vocab_path);
    check_vocab_compat(clip.text, vocab);
    check_vocab_compat(diff.text, vocab);
    const Dataset ds = Dataset::load(data_path);
    ImageStore store(images_dir);
    const size_t max_len = run.cfg().get_size("max_len");
    const NoiseSchedule sched = schedule_from(run.cfg());
    const std::string source = run.cfg().get("diff_caption_source");
    auto items = build_retrieval_items(ds, store, vocab, max_len, source);
    const size_t count = std::min(run.cfg().get_size("eval_count"), items.size());
    if (count < 2) throw CompatError("eval generation needs at least 2 items");

    // generate one image per prompt with a per-index seed
    const size_t size = run.cfg().get_size("sample_size");
    const Shape latent = {diff.denoiser.config().latent_channels, size / 2, size / 2};
    std::vector<Tensor> generated;
    Rng base_rng(run.seed());
    for (size_t i = 0; i < count; ++i) {
        Rng rng = base_rng.fork(i);
        const Tensor txt = diff.text.forward(items[i].caption_ids);
        generated.push_back(sample_ddpm(as_predictor(diff.denoiser), txt, latent, sched, rng));
    }

    // CLIP Sim between generated images and their prompts, via the clip model
    Mat gen_emb(count, clip.image.embed_dim());
    Mat txt_emb(count, clip.text.embed_dim());
    for (size_t i = 0; i < count; ++i) {
        const auto ge = clip.image.encode(generated[i]);
        const auto te = clip.text.encode(items[i].caption_ids);
        std::copy(ge.begin(), ge.end(), gen_emb.v.begin() + static_cast<long>(i * gen_emb.cols));
        std::copy(te.begin(), te.end(), txt_emb.v.begin() + static_cast<long>(i * txt_emb.cols));
    }

    // IS from zero-shot class probabilities against the distinct prompts
    std::vector<std::vector<uint32_t>> class_prompts;
    for (size_t i = 0; i < count; ++i) class_prompts.push_back(items[i].caption_ids);
    const Mat probs = zero_shot_probs(clip.image, clip.text, generated, class_prompts,
                                      run.cfg().get_double("temperature"));

    // FID between clip-feature Gaussians of real and generated images
    Mat real_emb(count, clip.image.embed_dim());
    for (size_t i = 0; i < count; ++i) {
        const auto re = clip.image.encode(items[i].image);
        std::copy(re.begin(), re.end(), real_emb.v.begin() + static_cast<long>(i * real_emb.cols));
    }
    MetricReport report;
    report.metrics.push_back({"CLIP Sim", clip_sim(gen_emb, txt_emb), true, 3});
    report.metrics.push_back(
        {"FID", fid(gaussian_stats(real_emb), gaussian_stats(gen_emb)), false, 3});
    report.metrics.push_back({"IS", inception_score(probs), true, 3});
    run.write_text("report.txt", report.to_text());
    run.write_text("report.csv", report.to_csv());
    run.finish();
    std::cout << report.to_text();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bilingual CLIP + latent diffusion desk-scale pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string corpus, vocab_path, data_path, images_dir, checkpoint, clip_ckpt, init_ckpt,
        prompt;
    int64_t k_flag = -1;
    bool mock = false;

    auto* synth = app.add_subcommand("synth-data", "generate the deterministic toy dataset");
    add_common(synth, args);

    auto* tokenizer = app.add_subcommand("tokenizer", "tokenizer operations");
    tokenizer->require_subcommand(1);
    auto* analyze = tokenizer->add_subcommand("analyze", "character frequency table");
    add_common(analyze, args);
    analyze->add_option("--corpus", corpus, "text corpus")->required();
    auto* expand = tokenizer->add_subcommand("expand", "append frequent characters to the vocab");
    add_common(expand, args);
    expand->add_option("--corpus", corpus, "text corpus")->required();
    expand->add_option("--vocab", vocab_path, "existing vocabulary to extend");
    expand->add_option("--k", k_flag, "number of characters to append");

    auto* model = app.add_subcommand("model", "model surgery");
    model->require_subcommand(1);
    auto* mexpand = model->add_subcommand("expand", "grow token and position tables");
    add_common(mexpand, args);
    mexpand->add_option("--checkpoint", checkpoint, "clip checkpoint")->required();
    mexpand->add_option("--vocab", vocab_path, "expanded vocabulary file")->required();

    auto* train = app.add_subcommand("train", "training runs");
    train->require_subcommand(1);
    auto* tclip = train->add_subcommand("clip", "contrastive dual-encoder training");
    add_common(tclip, args);
    tclip->add_option("--data", data_path, "dataset JSONL")->required();
    tclip->add_option("--images", images_dir, "image directory")->required();
    tclip->add_option("--vocab", vocab_path, "vocabulary file");
    tclip->add_option("--init", init_ckpt, "initial clip checkpoint");
    auto* tdiff = train->add_subcommand("diffusion", "latent diffusion training");
    add_common(tdiff, args);
    tdiff->add_option("--data", data_path, "dataset JSONL")->required();
    tdiff->add_option("--images", images_dir, "image directory")->required();
    tdiff->add_option("--vocab", vocab_path, "vocabulary file");
    tdiff->add_option("--clip", clip_ckpt, "clip checkpoint supplying the text tower");
    tdiff->add_option("--init", init_ckpt, "diffusion checkpoint to continue from");

    auto* sample = app.add_subcommand("sample", "text-to-image sampling");
    add_common(sample, args);
    sample->add_option("--checkpoint", checkpoint, "diffusion checkpoint")->required();
    sample->add_option("--vocab", vocab_path, "vocabulary file");
    sample->add_option("--prompt", prompt, "text prompt")->required();

    auto* enrich = app.add_subcommand("enrich", "caption enrichment");
    add_common(enrich, args);
    enrich->add_option("--data", data_path, "dataset JSONL with web captions")->required();
    enrich->add_option("--images", images_dir, "image directory")->required();
    enrich->add_flag("--mock", mock, "use the deterministic mock client");

    auto* eval = app.add_subcommand("eval", "evaluation reports");
    eval->require_subcommand(1);
    auto* eretr = eval->add_subcommand("retrieval", "bidirectional R@K");
    add_common(eretr, args);
    eretr->add_option("--checkpoint", checkpoint, "clip checkpoint")->required();
    eretr->add_option("--vocab", vocab_path, "vocabulary file");
    eretr->add_option("--data", data_path, "dataset JSONL")->required();
    eretr->add_option("--images", images_dir, "image directory")->required();
    auto* egen = eval->add_subcommand("generation", "CLIP Sim / FID / IS");
    add_common(egen, args);
    egen->add_option("--clip", clip_ckpt, "clip checkpoint")->required();
    egen->add_option("--diffusion", checkpoint, "diffusion checkpoint")->required();
    egen->add_option("--vocab", vocab_path, "vocabulary file");
    egen->add_option("--data", data_path, "dataset JSONL")->required();
    egen->add_option("--images", images_dir, "image directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            cmd_synth_data(args);
        } else if (analyze->parsed()) {
            cmd_tokenizer_analyze(args, corpus);
        } else if (expand->parsed()) {
            cmd_tokenizer_expand(args, corpus, vocab_path, k_flag);
        } else if (mexpand->parsed()) {
            cmd_model_expand(args, checkpoint, vocab_path);
        } else if (tclip->parsed()) {
            cmd_train_clip(args, data_path, images_dir, vocab_path, init_ckpt);
        } else if (tdiff->parsed()) {
            cmd_train_diffusion(args, data_path, images_dir, vocab_path, clip_ckpt, init_ckpt);
        } else if (sample->parsed()) {
            cmd_sample(args, checkpoint, vocab_path, prompt);
        } else if (enrich->parsed()) {
            cmd_enrich(args, data_path, images_dir, mock);
        } else if (eretr->parsed()) {
            cmd_eval_retrieval(args, checkpoint, vocab_path, data_path, images_dir);
        } else if (egen->parsed()) {
            cmd_eval_generation(args, clip_ckpt, checkpoint, vocab_path, data_path, images_dir);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return 3;
    } catch (const CompatError& e) {
        std::cerr << "error: incompatible: " << e.what() << "\n";
        return 4;
    } catch (const FormatError& e) {
        std::cerr << "error: format: " << e.what() << "\n";
        return 5;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
