#pragma once

// Dual text/image encoders in the CLIP mold, plus the embedding-surgery
// operations that grow the token table and the absolute position table
// while preserving every existing row bit-for-bit.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "taiyi/error.hpp"
#include "taiyi/rng.hpp"
#include "taiyi/tensor.hpp"

namespace taiyi {

// ------------------------------------------------------------------ expansion

struct ExpansionStrategy {
    enum class Kind { mean_init, copy_last, zero };

    Kind kind = Kind::mean_init;
    double noise_sigma = 0.02;

    static ExpansionStrategy parse(const std::string& name, double sigma) {
        if (sigma < 0.0) throw Error("expansion: noise sigma must be non-negative");
        ExpansionStrategy s;
        s.noise_sigma = sigma;
        if (name == "mean-init") {
            s.kind = Kind::mean_init;
        } else if (name == "copy-last") {
            s.kind = Kind::copy_last;
        } else if (name == "zero") {
            s.kind = Kind::zero;
        } else {
            throw Error("expansion: unknown strategy '" + name + "'");
        }
        return s;
    }
};

namespace detail {

inline std::vector<double> expansion_template(const Tensor& w, const ExpansionStrategy& strategy) {
    const size_t rows = w.dim(0), d = w.dim(1);
    std::vector<double> base(d, 0.0);
    switch (strategy.kind) {
        case ExpansionStrategy::Kind::mean_init:
            for (size_t i = 0; i < rows; ++i)
                for (size_t j = 0; j < d; ++j) base[j] += w.at(i * d + j);
            for (double& x : base) x /= static_cast<double>(rows);
            break;
        case ExpansionStrategy::Kind::copy_last:
            for (size_t j = 0; j < d; ++j) base[j] = w.at((rows - 1) * d + j);
            break;
        case ExpansionStrategy::Kind::zero:
            break;
    }
    return base;
}

inline Tensor expand_rows(const Tensor& w, size_t new_rows, const ExpansionStrategy& strategy,
                          Rng& rng, const char* what) {
    if (w.shape().size() != 2) throw Error(std::string(what) + ": table must be 2-d");
    const size_t rows = w.dim(0), d = w.dim(1);
    if (new_rows < rows) {
        throw Error(std::string(what) + ": cannot shrink from " + std::to_string(rows) + " to " +
                    std::to_string(new_rows) + " rows");
    }
    std::vector<double> data(new_rows * d);
    std::copy(w.data().begin(), w.data().end(), data.begin());
    if (new_rows > rows) {
        const std::vector<double> base = expansion_template(w, strategy);
        for (size_t i = rows; i < new_rows; ++i) {
            for (size_t j = 0; j < d; ++j) {
                double x = base[j];
                if (strategy.kind != ExpansionStrategy::Kind::zero && strategy.noise_sigma > 0.0) {
                    x += strategy.noise_sigma * rng.normal();
                }
                data[i * d + j] = x;
            }
        }
    }
    return Tensor::from_data({new_rows, d}, std::move(data), w.requires_grad());
}

}  // namespace detail

// New rows appended after V, initialized per strategy; rows 0..V-1 copied
// bit-identically.
inline Tensor expand_token_embeddings(const Tensor& w, size_t k, const ExpansionStrategy& strategy,
                                      Rng& rng) {
    return detail::expand_rows(w, w.dim(0) + k, strategy, rng, "expand_token_embeddings");
}

// Same semantics over position rows; shrinking is rejected.
inline Tensor expand_position_embeddings(const Tensor& p, size_t new_len,
                                         const ExpansionStrategy& strategy, Rng& rng) {
    return detail::expand_rows(p, new_len, strategy, rng, "expand_position_embeddings");
}

// ------------------------------------------------------------------- blocks

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

namespace detail {

struct TransformerBlock {
    size_t dim = 0;
    size_t heads = 0;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    Tensor w1, b1, w2, b2;

    void init(size_t d, size_t n_heads, size_t mlp_ratio, Rng& rng) {
        if (d % n_heads != 0) throw Error("encoder: dim must be divisible by heads");
        dim = d;
        heads = n_heads;
        // width-scaled init keeps activations O(1) at the small dims used here
        const double sigma = 1.0 / std::sqrt(static_cast<double>(d));
        auto mat = [&](size_t r, size_t c) { return Tensor::randn(rng, {r, c}, sigma, true); };
        wq = mat(d, d);
        bq = Tensor::zeros({d}, true);
        wk = mat(d, d);
        bk = Tensor::zeros({d}, true);
        wv = mat(d, d);
        bv = Tensor::zeros({d}, true);
        wo = mat(d, d);
        bo = Tensor::zeros({d}, true);
        ln1_g = Tensor::ones({d}, true);
        ln1_b = Tensor::zeros({d}, true);
        ln2_g = Tensor::ones({d}, true);
        ln2_b = Tensor::zeros({d}, true);
        w1 = mat(d, mlp_ratio * d);
        b1 = Tensor::zeros({mlp_ratio * d}, true);
        w2 = mat(mlp_ratio * d, d);
        b2 = Tensor::zeros({d}, true);
    }

    Tensor attention(const Tensor& x) const {
        const size_t dh = dim / heads;
        const Tensor q = add_rowvec(matmul(x, wq), bq);
        const Tensor k = add_rowvec(matmul(x, wk), bk);
        const Tensor v = add_rowvec(matmul(x, wv), bv);
        std::vector<Tensor> outs;
        outs.reserve(heads);
        const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (size_t h = 0; h < heads; ++h) {
            const Tensor qh = slice_cols(q, h * dh, dh);
            const Tensor kh = slice_cols(k, h * dh, dh);
            const Tensor vh = slice_cols(v, h * dh, dh);
            const Tensor scores = scale(matmul(qh, transpose(kh)), inv_scale);
            outs.push_back(matmul(softmax_rows(scores), vh));
        }
        return add_rowvec(matmul(concat_cols(outs), wo), bo);
    }

    Tensor forward(const Tensor& x) const {
        Tensor h = add(x, attention(layer_norm_rows(x, ln1_g, ln1_b)));
        Tensor m = add_rowvec(matmul(gelu(add_rowvec(matmul(layer_norm_rows(h, ln2_g, ln2_b), w1), b1)), w2), b2);
        return add(h, m);
    }

    void collect(NamedParams& out, const std::string& prefix) const {
        out.emplace_back(prefix + ".wq", wq);
        out.emplace_back(prefix + ".bq", bq);
        out.emplace_back(prefix + ".wk", wk);
        out.emplace_back(prefix + ".bk", bk);
        out.emplace_back(prefix + ".wv", wv);
        out.emplace_back(prefix + ".bv", bv);
        out.emplace_back(prefix + ".wo", wo);
        out.emplace_back(prefix + ".bo", bo);
        out.emplace_back(prefix + ".ln1_g", ln1_g);
        out.emplace_back(prefix + ".ln1_b", ln1_b);
        out.emplace_back(prefix + ".ln2_g", ln2_g);
        out.emplace_back(prefix + ".ln2_b", ln2_b);
        out.emplace_back(prefix + ".w1", w1);
        out.emplace_back(prefix + ".b1", b1);
        out.emplace_back(prefix + ".w2", w2);
        out.emplace_back(prefix + ".b2", b2);
    }

    void set_field(const std::string& f, Tensor v) {
        if (f == "wq") wq = std::move(v);
        else if (f == "bq") bq = std::move(v);
        else if (f == "wk") wk = std::move(v);
        else if (f == "bk") bk = std::move(v);
        else if (f == "wv") wv = std::move(v);
        else if (f == "bv") bv = std::move(v);
        else if (f == "wo") wo = std::move(v);
        else if (f == "bo") bo = std::move(v);
        else if (f == "ln1_g") ln1_g = std::move(v);
        else if (f == "ln1_b") ln1_b = std::move(v);
        else if (f == "ln2_g") ln2_g = std::move(v);
        else if (f == "ln2_b") ln2_b = std::move(v);
        else if (f == "w1") w1 = std::move(v);
        else if (f == "b1") b1 = std::move(v);
        else if (f == "w2") w2 = std::move(v);
        else if (f == "b2") b2 = std::move(v);
        else throw Error("set_parameter: unknown block field '" + f + "'");
    }
};

inline std::vector<size_t> iota_ids(size_t n) {
    std::vector<size_t> ids(n);
    for (size_t i = 0; i < n; ++i) ids[i] = i;
    return ids;
}

}  // namespace detail

// --------------------------------------------------------------- text encoder

struct TextEncoderConfig {
    size_t vocab_size = 259;
    size_t context = 16;
    size_t dim = 32;
    size_t heads = 4;
    size_t blocks = 2;
    size_t embed_dim = 16;  // joint embedding width
    size_t mlp_ratio = 4;
};

class TextEncoder {
public:
    TextEncoder() = default;

    TextEncoder(const TextEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
        token_emb_ = Tensor::randn(rng, {cfg.vocab_size, cfg.dim}, 0.1, true);
        pos_emb_ = Tensor::randn(rng, {cfg.context, cfg.dim}, 0.02, true);
        blocks_.resize(cfg.blocks);
        for (auto& b : blocks_) b.init(cfg.dim, cfg.heads, cfg.mlp_ratio, rng);
        lnf_g_ = Tensor::ones({cfg.dim}, true);
        lnf_b_ = Tensor::zeros({cfg.dim}, true);
        proj_ = Tensor::randn(rng, {cfg.dim, cfg.embed_dim},
                              1.0 / std::sqrt(static_cast<double>(cfg.dim)), true);
    }

    const TextEncoderConfig& config() const { return cfg_; }
    size_t vocab_size() const { return cfg_.vocab_size; }
    size_t context_length() const { return cfg_.context; }
    size_t embed_dim() const { return cfg_.embed_dim; }

    // Mean-pooled over positions, projected and unit-normalized.
    // Differentiable.
    Tensor forward(const std::vector<uint32_t>& ids) const {
        if (ids.empty()) throw Error("encode_text: empty token sequence");
        if (ids.size() > cfg_.context) {
            throw Error("encode_text: sequence length " + std::to_string(ids.size()) +
                        " exceeds context " + std::to_string(cfg_.context));
        }
        std::vector<size_t> rows(ids.size());
        for (size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] >= cfg_.vocab_size) {
                throw Error("encode_text: token id " + std::to_string(ids[i]) +
                            " out of range for vocab " + std::to_string(cfg_.vocab_size));
            }
            rows[i] = ids[i];
        }
        Tensor x = add(gather_rows(token_emb_, rows),
                       gather_rows(pos_emb_, detail::iota_ids(ids.size())));
        for (const auto& b : blocks_) x = b.forward(x);
        x = layer_norm_rows(x, lnf_g_, lnf_b_);
        const Tensor pool =
            Tensor::full({1, ids.size()}, 1.0 / static_cast<double>(ids.size()));
        return l2_normalize_rows(matmul(matmul(pool, x), proj_));  // [1, embed_dim]
    }

    std::vector<double> encode(const std::vector<uint32_t>& ids) const {
        return forward(ids).data();
    }

    // Grows the token table and/or the position table in place. All other
    // weights are untouched; preserved rows stay bit-identical.
    void expand(size_t new_vocab, size_t new_context, const ExpansionStrategy& strategy,
                Rng& rng) {
        if (new_vocab < cfg_.vocab_size) throw Error("expand: vocab cannot shrink");
        token_emb_ = expand_token_embeddings(token_emb_, new_vocab - cfg_.vocab_size, strategy, rng);
        pos_emb_ = expand_position_embeddings(pos_emb_, new_context, strategy, rng);
        legacy_vocab_rows_ = cfg_.vocab_size;
        cfg_.vocab_size = new_vocab;
        cfg_.context = new_context;
    }

    // Boundary below which token-embedding rows predate the last expansion;
    // 0 when the encoder was never expanded.
    size_t legacy_vocab_rows() const { return legacy_vocab_rows_; }
    void set_legacy_vocab_rows(size_t n) { legacy_vocab_rows_ = n; }

    const Tensor& token_embeddings() const { return token_emb_; }
    const Tensor& position_embeddings() const { return pos_emb_; }

    NamedParams named_parameters() const {
        NamedParams out;
        out.emplace_back("tok_emb", token_emb_);
        out.emplace_back("pos_emb", pos_emb_);
        for (size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].collect(out, "block" + std::to_string(i));
        out.emplace_back("lnf_g", lnf_g_);
        out.emplace_back("lnf_b", lnf_b_);
        out.emplace_back("proj", proj_);
        return out;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }

    void set_parameter(const std::string& name, Tensor value) {
        if (name == "tok_emb") {
            cfg_.vocab_size = value.dim(0);
            token_emb_ = std::move(value);
            return;
        }
        if (name == "pos_emb") {
            cfg_.context = value.dim(0);
            pos_emb_ = std::move(value);
            return;
        }
        if (name == "lnf_g") { lnf_g_ = std::move(value); return; }
        if (name == "lnf_b") { lnf_b_ = std::move(value); return; }
        if (name == "proj") { proj_ = std::move(value); return; }
        if (name.rfind("block", 0) == 0) {
            const size_t dot = name.find('.');
            const size_t idx = std::stoul(name.substr(5, dot - 5));
            if (idx >= blocks_.size()) throw Error("set_parameter: no block " + name);
            blocks_[idx].set_field(name.substr(dot + 1), std::move(value));
            return;
        }
        throw Error("set_parameter: unknown parameter '" + name + "'");
    }

private:
    TextEncoderConfig cfg_;
    Tensor token_emb_, pos_emb_;
    std::vector<detail::TransformerBlock> blocks_;
    Tensor lnf_g_, lnf_b_, proj_;
    size_t legacy_vocab_rows_ = 0;
};

// -------------------------------------------------------------- image encoder

struct ImageEncoderConfig {
    size_t patch = 2;
    size_t channels = 1;
    size_t max_patches = 64;
    size_t dim = 32;
    size_t heads = 4;
    size_t blocks = 2;
    size_t embed_dim = 16;
    size_t mlp_ratio = 4;
};

class ImageEncoder {
public:
    ImageEncoder() = default;

    ImageEncoder(const ImageEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
        const size_t pd = cfg.patch * cfg.patch * cfg.channels;
        patch_proj_ = Tensor::randn(rng, {pd, cfg.dim},
                                    1.0 / std::sqrt(static_cast<double>(pd)), true);
        patch_bias_ = Tensor::zeros({cfg.dim}, true);
        pos_emb_ = Tensor::randn(rng, {cfg.max_patches, cfg.dim}, 0.02, true);
        blocks_.resize(cfg.blocks);
        for (auto& b : blocks_) b.init(cfg.dim, cfg.heads, cfg.mlp_ratio, rng);
        lnf_g_ = Tensor::ones({cfg.dim}, true);
        lnf_b_ = Tensor::zeros({cfg.dim}, true);
        proj_ = Tensor::randn(rng, {cfg.dim, cfg.embed_dim},
                              1.0 / std::sqrt(static_cast<double>(cfg.dim)), true);
    }

    const ImageEncoderConfig& config() const { return cfg_; }
    size_t embed_dim() const { return cfg_.embed_dim; }

    // image: [C, H, W], mean-pooled over patches. Differentiable.
    Tensor forward(const Tensor& image) const {
        if (image.shape().size() != 3 || image.dim(0) != cfg_.channels) {
            throw Error("encode_image: expected [" + std::to_string(cfg_.channels) +
                        ", H, W] image, got " + shape_str(image.shape()));
        }
        const size_t h = image.dim(1), w = image.dim(2), ps = cfg_.patch;
        if (h % ps != 0 || w % ps != 0) {
            throw Error("encode_image: image extent not divisible by patch size");
        }
        const size_t n = (h / ps) * (w / ps);
        if (n > cfg_.max_patches) throw Error("encode_image: too many patches");

        // non-overlapping patch flattening via index gather
        std::vector<long> idx;
        idx.reserve(n * ps * ps * cfg_.channels);
        for (size_t py = 0; py < h / ps; ++py)
            for (size_t px = 0; px < w / ps; ++px)
                for (size_t c = 0; c < cfg_.channels; ++c)
                    for (size_t iy = 0; iy < ps; ++iy)
                        for (size_t ix = 0; ix < ps; ++ix)
                            idx.push_back(static_cast<long>(
                                c * h * w + (py * ps + iy) * w + px * ps + ix));
        Tensor patches = gather_pad(image, idx, {n, ps * ps * cfg_.channels});
        Tensor x = add(add_rowvec(matmul(patches, patch_proj_), patch_bias_),
                       gather_rows(pos_emb_, detail::iota_ids(n)));
        for (const auto& b : blocks_) x = b.forward(x);
        x = layer_norm_rows(x, lnf_g_, lnf_b_);
        Tensor pool = Tensor::full({1, n}, 1.0 / static_cast<double>(n));
        return l2_normalize_rows(matmul(matmul(pool, x), proj_));  // [1, embed_dim]
    }

    std::vector<double> encode(const Tensor& image) const { return forward(image).data(); }

    NamedParams named_parameters() const {
        NamedParams out;
        out.emplace_back("patch_proj", patch_proj_);
        out.emplace_back("patch_bias", patch_bias_);
        out.emplace_back("pos_emb", pos_emb_);
        for (size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].collect(out, "block" + std::to_string(i));
        out.emplace_back("lnf_g", lnf_g_);
        out.emplace_back("lnf_b", lnf_b_);
        out.emplace_back("proj", proj_);
        return out;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }

    void set_parameter(const std::string& name, Tensor value) {
        if (name == "patch_proj") { patch_proj_ = std::move(value); return; }
        if (name == "patch_bias") { patch_bias_ = std::move(value); return; }
        if (name == "pos_emb") {
            cfg_.max_patches = value.dim(0);
            pos_emb_ = std::move(value);
            return;
        }
        if (name == "lnf_g") { lnf_g_ = std::move(value); return; }
        if (name == "lnf_b") { lnf_b_ = std::move(value); return; }
        if (name == "proj") { proj_ = std::move(value); return; }
        if (name.rfind("block", 0) == 0) {
            const size_t dot = name.find('.');
            const size_t idx = std::stoul(name.substr(5, dot - 5));
            if (idx >= blocks_.size()) throw Error("set_parameter: no block " + name);
            blocks_[idx].set_field(name.substr(dot + 1), std::move(value));
            return;
        }
        throw Error("set_parameter: unknown parameter '" + name + "'");
    }

private:
    ImageEncoderConfig cfg_;
    Tensor patch_proj_, patch_bias_, pos_emb_;
    std::vector<detail::TransformerBlock> blocks_;
    Tensor lnf_g_, lnf_b_, proj_;
};

}  // namespace taiyi
