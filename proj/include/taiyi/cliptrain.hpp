#pragma once

// Contrastive training of the dual encoder: symmetric InfoNCE over cosine
// logits, warmup+cosine learning rate, and the two-stage regimen that
// switches the text tower between web and synthetic captions.

#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "taiyi/encoder.hpp"
#include "taiyi/error.hpp"
#include "taiyi/optim.hpp"
#include "taiyi/parallel.hpp"
#include "taiyi/rng.hpp"
#include "taiyi/schedule.hpp"
#include "taiyi/tensor.hpp"

namespace taiyi {

enum class TrainStage { stage1, stage2 };

inline TrainStage parse_stage(const std::string& name) {
    if (name == "stage1") return TrainStage::stage1;
    if (name == "stage2") return TrainStage::stage2;
    throw Error("stage: unknown stage '" + name + "'");
}

struct ContrastiveConfig {
    size_t batch_size = 16;
    double temperature = 0.07;
    double base_lr = 1e-5;
    size_t warmup_steps = 50;
    size_t total_steps = 500;
    TrainStage stage = TrainStage::stage1;
    OptimizerKind optimizer = OptimizerKind::plain_gd;
    bool freeze_legacy_rows = false;

    void validate() const {
        if (temperature <= 0.0) throw Error("config: temperature must be positive");
        if (base_lr <= 0.0) throw Error("config: base_lr must be positive");
        if (warmup_steps > total_steps) throw Error("config: warmup_steps exceeds total_steps");
        if (batch_size < 2) throw Error("config: batch_size must be at least 2");
    }
};

struct TrainLog {
    struct Step {
        size_t step = 0;
        double lr = 0.0;
        double loss = 0.0;
        std::string tag;  // batch resolution for diffusion runs, empty otherwise
    };
    struct Snapshot {
        size_t epoch = 0;
        size_t step = 0;
        double r1_image_to_text = 0.0;
        double r1_text_to_image = 0.0;
    };

    std::vector<Step> steps;
    std::vector<Snapshot> snapshots;

    // Step table first; epoch snapshots follow as a second table after a
    // blank line.
    std::string to_csv() const {
        std::ostringstream os;
        bool tagged = false;
        for (const auto& s : steps) tagged = tagged || !s.tag.empty();
        os << (tagged ? "step,lr,loss,tag\n" : "step,lr,loss\n");
        os.precision(17);
        for (const auto& s : steps) {
            os << s.step << ',' << s.lr << ',' << s.loss;
            if (tagged) os << ',' << s.tag;
            os << '\n';
        }
        if (!snapshots.empty()) {
            os << "\nepoch,step,r1_image_to_text,r1_text_to_image\n";
            for (const auto& s : snapshots) {
                os << s.epoch << ',' << s.step << ',' << s.r1_image_to_text << ','
                   << s.r1_text_to_image << '\n';
            }
        }
        return os.str();
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write train log: " + path);
        f << to_csv();
    }
};

// Symmetric InfoNCE. Rows of both matrices must be unit-norm; logits are
// scaled similarities, targets the diagonal.
inline Tensor contrastive_loss(const Tensor& img_embs, const Tensor& txt_embs,
                               double temperature) {
    if (img_embs.shape().size() != 2 || txt_embs.shape().size() != 2 ||
        img_embs.shape() != txt_embs.shape()) {
        throw Error("contrastive_loss: embedding matrices must share an [n, p] shape");
    }
    const size_t n = img_embs.dim(0), p = img_embs.dim(1);
    if (n < 2) throw Error("contrastive_loss: need at least 2 pairs");
    if (temperature <= 0.0) throw Error("contrastive_loss: temperature must be positive");
    for (const Tensor* m : {&img_embs, &txt_embs}) {
        for (size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (size_t j = 0; j < p; ++j) s += m->at(i * p + j) * m->at(i * p + j);
            if (std::abs(std::sqrt(s) - 1.0) > 1e-6) {
                throw Error("contrastive_loss: row " + std::to_string(i) + " is not unit-norm");
            }
        }
    }
    std::vector<size_t> diag(n);
    for (size_t i = 0; i < n; ++i) diag[i] = i;
    const Tensor logits = scale(matmul(img_embs, transpose(txt_embs)), 1.0 / temperature);
    const Tensor li = cross_entropy_rows(logits, diag);
    const Tensor lt = cross_entropy_rows(transpose(logits), diag);
    return scale(add(li, lt), 0.5);
}

// One training example: an image tensor and the caption token ids for each
// stage's caption source.
struct ClipExample {
    Tensor image;
    std::vector<uint32_t> web_tokens;
    std::vector<uint32_t> synthetic_tokens;

    const std::vector<uint32_t>& tokens(TrainStage stage) const {
        return stage == TrainStage::stage1 ? web_tokens : synthetic_tokens;
    }
};

namespace detail {

// Train-set R@1 for both directions on current weights, used for the
// per-epoch snapshot. Plain value-level math, no graph.
inline std::pair<double, double> train_recall_at_1(const TextEncoder& text,
                                                   const ImageEncoder& image,
                                                   const std::vector<ClipExample>& examples,
                                                   TrainStage stage) {
    const size_t n = examples.size();
    std::vector<std::vector<double>> ie(n), te(n);
    parallel_for(n, [&](size_t i) {
        ie[i] = image.encode(examples[i].image);
        te[i] = text.encode(examples[i].tokens(stage));
    });
    size_t hits_i2t = 0, hits_t2i = 0;
    for (size_t q = 0; q < n; ++q) {
        size_t best_t = 0, best_i = 0;
        double top_t = -std::numeric_limits<double>::infinity();
        double top_i = -std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < n; ++c) {
            double st = 0.0, si = 0.0;
            for (size_t j = 0; j < ie[q].size(); ++j) {
                st += ie[q][j] * te[c][j];
                si += te[q][j] * ie[c][j];
            }
            if (st > top_t) {
                top_t = st;
                best_t = c;
            }
            if (si > top_i) {
                top_i = si;
                best_i = c;
            }
        }
        hits_i2t += best_t == q;
        hits_t2i += best_i == q;
    }
    return {100.0 * static_cast<double>(hits_i2t) / static_cast<double>(n),
            100.0 * static_cast<double>(hits_t2i) / static_cast<double>(n)};
}

}  // namespace detail

// Minibatch contrastive training over a seeded shuffle, sequential epochs
// without replacement. Mutates both encoders in place and returns the log.
inline TrainLog train_clip(const std::vector<ClipExample>& examples,
                           const ContrastiveConfig& cfg, TextEncoder& text, ImageEncoder& image,
                           Rng& rng) {
    cfg.validate();
    if (examples.empty()) throw Error("train_clip: empty dataset");
    for (const auto& ex : examples) {
        for (uint32_t id : ex.tokens(cfg.stage)) {
            if (id >= text.vocab_size()) {
                throw Error("train_clip: dataset token id " + std::to_string(id) +
                            " exceeds encoder vocab " + std::to_string(text.vocab_size()));
            }
        }
    }
    auto params = text.parameters();
    {
        auto ip = image.parameters();
        params.insert(params.end(), ip.begin(), ip.end());
    }
    Adam adam;
    TrainLog log;

    std::vector<size_t> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t cursor = 0;
    size_t epoch = 0;
    rng.shuffle(order);

    const size_t batch = std::min(cfg.batch_size, examples.size());
    for (size_t step = 0; step < cfg.total_steps; ++step) {
        std::vector<const ClipExample*> chosen;
        chosen.reserve(batch);
        for (size_t b = 0; b < batch; ++b) {
            if (cursor == order.size()) {
                cursor = 0;
                epoch += 1;
                rng.shuffle(order);
                auto [r1_i2t, r1_t2i] =
                    detail::train_recall_at_1(text, image, examples, cfg.stage);
                log.snapshots.push_back({epoch, step, r1_i2t, r1_t2i});
            }
            chosen.push_back(&examples[order[cursor++]]);
        }
        std::vector<Tensor> img_rows(batch), txt_rows(batch);
        parallel_for(batch, [&](size_t b) {
            img_rows[b] = image.forward(chosen[b]->image);
            txt_rows[b] = text.forward(chosen[b]->tokens(cfg.stage));
        });
        const Tensor loss =
            contrastive_loss(concat_rows(img_rows), concat_rows(txt_rows), cfg.temperature);
        const double lr = lr_schedule(step, cfg.warmup_steps, cfg.total_steps, cfg.base_lr);
        backward(loss);
        if (cfg.freeze_legacy_rows && text.legacy_vocab_rows() > 0) {
            auto& grad = text.token_embeddings().grad_mut();
            const size_t d = text.token_embeddings().dim(1);
            std::fill(grad.begin(), grad.begin() + text.legacy_vocab_rows() * d, 0.0);
        }
        if (cfg.optimizer == OptimizerKind::adam) {
            adam.step(params, lr);
        } else {
            gd_step(params, lr);
        }
        log.steps.push_back({step, lr, loss.item(), ""});
    }
    return log;
}

}  // namespace taiyi
