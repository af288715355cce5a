#pragma once

// Desk-scale latent diffusion: variance-preserving forward corruption, a
// small time/text-conditioned U-Net epsilon predictor, the denoising MSE
// objective, and two samplers (the literal subtraction iteration and a
// standard ancestral one). The latent codec is a deterministic 2x2
// patch-average / nearest-upsample pair, exactly invertible on
// block-constant images.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "taiyi/cliptrain.hpp"
#include "taiyi/encoder.hpp"
#include "taiyi/error.hpp"
#include "taiyi/optim.hpp"
#include "taiyi/rng.hpp"
#include "taiyi/schedule.hpp"
#include "taiyi/tensor.hpp"

namespace taiyi {

// -------------------------------------------------------------- noise schedule

class NoiseSchedule {
public:
    NoiseSchedule() = default;

    NoiseSchedule(size_t steps, std::vector<double> betas) : betas_(std::move(betas)) {
        if (betas_.size() != steps) throw Error("noise schedule: beta count mismatch");
        if (steps == 0) throw Error("noise schedule: needs at least one step");
        alpha_bars_.resize(steps + 1);
        alpha_bars_[0] = 1.0;
        for (size_t t = 1; t <= steps; ++t) {
            const double beta = betas_[t - 1];
            if (beta <= 0.0 || beta >= 1.0) {
                throw Error("noise schedule: beta out of (0,1) at step " + std::to_string(t));
            }
            alpha_bars_[t] = alpha_bars_[t - 1] * (1.0 - beta);
            if (alpha_bars_[t] >= alpha_bars_[t - 1]) {
                throw Error("noise schedule: alpha_bar not strictly decreasing");
            }
        }
    }

    static NoiseSchedule linear(size_t steps, double beta_start = 1e-4, double beta_end = 0.02) {
        std::vector<double> betas(steps);
        for (size_t t = 0; t < steps; ++t) {
            betas[t] = steps == 1 ? beta_start
                                  : beta_start + (beta_end - beta_start) * static_cast<double>(t) /
                                                     static_cast<double>(steps - 1);
        }
        return NoiseSchedule(steps, std::move(betas));
    }

    size_t steps() const { return betas_.size(); }

    double beta(size_t t) const {
        check_step(t);
        return betas_[t - 1];
    }
    double alpha(size_t t) const { return 1.0 - beta(t); }
    double alpha_bar(size_t t) const {
        if (t > steps()) throw Error("noise schedule: step out of range");
        return alpha_bars_[t];
    }

private:
    void check_step(size_t t) const {
        if (t < 1 || t > steps()) {
            throw Error("noise schedule: step " + std::to_string(t) + " outside 1.." +
                        std::to_string(steps()));
        }
    }

    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
};

// Forward corruption at a given cumulative signal level.
inline Tensor add_noise_with(double alpha_bar, const Tensor& z0, const Tensor& eps) {
    if (z0.shape() != eps.shape()) throw Error("add_noise: noise shape mismatch");
    if (alpha_bar < 0.0 || alpha_bar > 1.0) throw Error("add_noise: alpha_bar out of [0,1]");
    const double sa = std::sqrt(alpha_bar);
    const double sn = std::sqrt(1.0 - alpha_bar);
    std::vector<double> d(z0.numel());
    for (size_t i = 0; i < d.size(); ++i) d[i] = sa * z0.at(i) + sn * eps.at(i);
    return Tensor::from_data(z0.shape(), std::move(d));
}

inline Tensor add_noise(const Tensor& z0, size_t t, const Tensor& eps, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.steps()) {
        throw Error("add_noise: step " + std::to_string(t) + " outside 1.." +
                    std::to_string(sched.steps()));
    }
    return add_noise_with(sched.alpha_bar(t), z0, eps);
}

// --------------------------------------------------------------- latent codec

// encode: per-channel 2x2 non-overlapping average, halving each extent.
// decode: nearest-neighbor 2x upsample, a left inverse on block-constant
// images.
struct LatentCodec {
    static Tensor encode(const Tensor& image) {
        if (image.shape().size() != 3) throw Error("codec: expected [C, H, W] image");
        const size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
        if (h % 2 != 0 || w % 2 != 0) throw Error("codec: extents must be even");
        const size_t lh = h / 2, lw = w / 2;
        std::vector<double> out(c * lh * lw);
        for (size_t ch = 0; ch < c; ++ch)
            for (size_t y = 0; y < lh; ++y)
                for (size_t x = 0; x < lw; ++x) {
                    const size_t base = ch * h * w + 2 * y * w + 2 * x;
                    out[ch * lh * lw + y * lw + x] =
                        0.25 * (image.at(base) + image.at(base + 1) + image.at(base + w) +
                                image.at(base + w + 1));
                }
        return Tensor::from_data({c, lh, lw}, std::move(out));
    }

    static Tensor decode(const Tensor& latent) {
        if (latent.shape().size() != 3) throw Error("codec: expected [C, H, W] latent");
        const size_t c = latent.dim(0), lh = latent.dim(1), lw = latent.dim(2);
        const size_t h = lh * 2, w = lw * 2;
        std::vector<double> out(c * h * w);
        for (size_t ch = 0; ch < c; ++ch)
            for (size_t y = 0; y < h; ++y)
                for (size_t x = 0; x < w; ++x)
                    out[ch * h * w + y * w + x] = latent.at(ch * lh * lw + (y / 2) * lw + x / 2);
        return Tensor::from_data({c, h, w}, std::move(out));
    }
};

// ------------------------------------------------------------------- denoiser

struct DenoiserConfig {
    size_t latent_channels = 1;
    size_t base_channels = 8;
    size_t text_dim = 16;        // matches the text encoder embedding width
    size_t context_tokens = 4;   // learned reshuffle of the text embedding
    size_t context_dim = 8;
    size_t attn_dim = 16;
    size_t time_dim = 16;
};

namespace detail {

// im2col indices for a 3x3 same-padding convolution over a [Cin, H, W] map.
inline std::vector<long> conv3x3_indices(size_t cin, size_t h, size_t w) {
    std::vector<long> idx;
    idx.reserve(cin * 9 * h * w);
    for (size_t c = 0; c < cin; ++c)
        for (int ky = -1; ky <= 1; ++ky)
            for (int kx = -1; kx <= 1; ++kx)
                for (size_t y = 0; y < h; ++y)
                    for (size_t x = 0; x < w; ++x) {
                        const long yy = static_cast<long>(y) + ky;
                        const long xx = static_cast<long>(x) + kx;
                        if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) ||
                            xx >= static_cast<long>(w)) {
                            idx.push_back(-1);
                        } else {
                            idx.push_back(static_cast<long>(c * h * w) + yy * static_cast<long>(w) +
                                          xx);
                        }
                    }
    return idx;
}

inline std::vector<long> avgpool2_indices(size_t c, size_t h, size_t w, size_t dy, size_t dx) {
    std::vector<long> idx;
    idx.reserve(c * (h / 2) * (w / 2));
    for (size_t ch = 0; ch < c; ++ch)
        for (size_t y = 0; y < h / 2; ++y)
            for (size_t x = 0; x < w / 2; ++x)
                idx.push_back(static_cast<long>(ch * h * w + (2 * y + dy) * w + 2 * x + dx));
    return idx;
}

inline std::vector<long> upsample2_indices(size_t c, size_t h, size_t w) {
    std::vector<long> idx;
    idx.reserve(c * 4 * h * w);
    for (size_t ch = 0; ch < c; ++ch)
        for (size_t y = 0; y < 2 * h; ++y)
            for (size_t x = 0; x < 2 * w; ++x)
                idx.push_back(static_cast<long>(ch * h * w + (y / 2) * w + x / 2));
    return idx;
}

}  // namespace detail

// Small U-shaped epsilon predictor on [C, H, W] latents: one conv+pool
// down stage, a cross-attention bottleneck over tokens derived from the
// text embedding, and a skip-connected conv up stage. Sinusoidal time
// features enter each stage as per-channel biases.
class Denoiser {
public:
    Denoiser() = default;

    Denoiser(const DenoiserConfig& cfg, Rng& rng) : cfg_(cfg) {
        const double sigma = 0.05;
        auto mat = [&](size_t r, size_t c) { return Tensor::randn(rng, {r, c}, sigma, true); };
        conv_in_w_ = mat(cfg.base_channels, 9 * cfg.latent_channels);
        conv_in_b_ = Tensor::zeros({cfg.base_channels}, true);
        conv_down_w_ = mat(2 * cfg.base_channels, 9 * cfg.base_channels);
        conv_down_b_ = Tensor::zeros({2 * cfg.base_channels}, true);
        ctx_proj_ = mat(cfg.context_tokens * cfg.context_dim, cfg.text_dim);
        attn_q_ = mat(2 * cfg.base_channels, cfg.attn_dim);
        attn_k_ = mat(cfg.context_dim, cfg.attn_dim);
        attn_v_ = mat(cfg.context_dim, cfg.attn_dim);
        attn_o_ = mat(cfg.attn_dim, 2 * cfg.base_channels);
        conv_up_w_ = mat(cfg.base_channels, 9 * 3 * cfg.base_channels);
        conv_up_b_ = Tensor::zeros({cfg.base_channels}, true);
        conv_out_w_ = mat(cfg.latent_channels, 9 * cfg.base_channels);
        conv_out_b_ = Tensor::zeros({cfg.latent_channels}, true);
        time_w1_ = mat(cfg.time_dim, cfg.base_channels);
        time_w2_ = mat(cfg.time_dim, 2 * cfg.base_channels);
        time_w3_ = mat(cfg.time_dim, cfg.base_channels);
        txt_w1_ = mat(cfg.text_dim, cfg.base_channels);
        txt_w2_ = mat(cfg.text_dim, 2 * cfg.base_channels);
        txt_w3_ = mat(cfg.text_dim, cfg.base_channels);
    }

    const DenoiserConfig& config() const { return cfg_; }

    // z: [C, H, W] latent; t: timestep; txt: [1, text_dim] or [text_dim]
    // text embedding. Returns the epsilon prediction, same shape as z.
    Tensor forward(const Tensor& z, size_t t, const Tensor& txt) const {
        if (z.shape().size() != 3 || z.dim(0) != cfg_.latent_channels) {
            throw Error("denoiser: expected [" + std::to_string(cfg_.latent_channels) +
                        ", H, W] latent, got " + shape_str(z.shape()));
        }
        const size_t h = z.dim(1), w = z.dim(2);
        if (h % 2 != 0 || w % 2 != 0 || h < 2 || w < 2) {
            throw Error("denoiser: latent extents must be even and at least 2");
        }
        if (txt.numel() != cfg_.text_dim) throw Error("denoiser: text embedding width mismatch");
        const Tensor temb = reshape(time_embedding(t), {1, cfg_.time_dim});
        const Tensor trow = reshape(txt, {1, cfg_.text_dim});

        // down stage at full resolution; time and text enter as channel biases
        Tensor x1 = conv3x3(z, conv_in_w_, conv_in_b_, cfg_.latent_channels, h, w);
        x1 = add_colvec(x1, reshape(matmul(temb, time_w1_), {cfg_.base_channels}));
        x1 = add_colvec(x1, reshape(matmul(trow, txt_w1_), {cfg_.base_channels}));
        x1 = gelu(x1);  // [base, h*w]

        // pooled stage at half resolution
        Tensor x2 = avgpool2(x1, cfg_.base_channels, h, w);
        x2 = conv3x3_flat(x2, conv_down_w_, conv_down_b_, cfg_.base_channels, h / 2, w / 2);
        x2 = add_colvec(x2, reshape(matmul(temb, time_w2_), {2 * cfg_.base_channels}));
        x2 = add_colvec(x2, reshape(matmul(trow, txt_w2_), {2 * cfg_.base_channels}));
        x2 = gelu(x2);  // [2*base, (h/2)*(w/2)]

        // cross-attention bottleneck over learned context tokens
        const Tensor ctx = reshape(matmul(ctx_proj_, reshape(txt, {cfg_.text_dim, 1})),
                                   {cfg_.context_tokens, cfg_.context_dim});
        Tensor tokens = transpose(x2);  // [(h/2)*(w/2), 2*base]
        const Tensor q = matmul(tokens, attn_q_);
        const Tensor k = matmul(ctx, attn_k_);
        const Tensor v = matmul(ctx, attn_v_);
        const double inv_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.attn_dim));
        const Tensor attn = softmax_rows(scale(matmul(q, transpose(k)), inv_scale));
        tokens = add(tokens, matmul(matmul(attn, v), attn_o_));
        x2 = transpose(tokens);  // [2*base, (h/2)*(w/2)]

        // up stage: upsample, concat skip, fuse, project out
        Tensor up = upsample2(x2, 2 * cfg_.base_channels, h / 2, w / 2);
        Tensor cat = concat_rows({up, x1});  // [3*base, h*w]
        Tensor x3 = conv3x3_flat(cat, conv_up_w_, conv_up_b_, 3 * cfg_.base_channels, h, w);
        x3 = add_colvec(x3, reshape(matmul(temb, time_w3_), {cfg_.base_channels}));
        x3 = add_colvec(x3, reshape(matmul(trow, txt_w3_), {cfg_.base_channels}));
        x3 = gelu(x3);
        Tensor out = conv3x3_flat(x3, conv_out_w_, conv_out_b_, cfg_.base_channels, h, w);
        return reshape(out, {cfg_.latent_channels, h, w});
    }

    NamedParams named_parameters() const {
        return {
            {"conv_in_w", conv_in_w_},   {"conv_in_b", conv_in_b_},
            {"conv_down_w", conv_down_w_}, {"conv_down_b", conv_down_b_},
            {"ctx_proj", ctx_proj_},     {"attn_q", attn_q_},
            {"attn_k", attn_k_},         {"attn_v", attn_v_},
            {"attn_o", attn_o_},         {"conv_up_w", conv_up_w_},
            {"conv_up_b", conv_up_b_},   {"conv_out_w", conv_out_w_},
            {"conv_out_b", conv_out_b_}, {"time_w1", time_w1_},
            {"time_w2", time_w2_},       {"time_w3", time_w3_},
            {"txt_w1", txt_w1_},         {"txt_w2", txt_w2_},
            {"txt_w3", txt_w3_},
        };
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }

    void set_parameter(const std::string& name, Tensor value) {
        static const std::map<std::string, Tensor Denoiser::*> fields = {
            {"conv_in_w", &Denoiser::conv_in_w_},   {"conv_in_b", &Denoiser::conv_in_b_},
            {"conv_down_w", &Denoiser::conv_down_w_}, {"conv_down_b", &Denoiser::conv_down_b_},
            {"ctx_proj", &Denoiser::ctx_proj_},     {"attn_q", &Denoiser::attn_q_},
            {"attn_k", &Denoiser::attn_k_},         {"attn_v", &Denoiser::attn_v_},
            {"attn_o", &Denoiser::attn_o_},         {"conv_up_w", &Denoiser::conv_up_w_},
            {"conv_up_b", &Denoiser::conv_up_b_},   {"conv_out_w", &Denoiser::conv_out_w_},
            {"conv_out_b", &Denoiser::conv_out_b_}, {"time_w1", &Denoiser::time_w1_},
            {"time_w2", &Denoiser::time_w2_},       {"time_w3", &Denoiser::time_w3_},
            {"txt_w1", &Denoiser::txt_w1_},         {"txt_w2", &Denoiser::txt_w2_},
            {"txt_w3", &Denoiser::txt_w3_},
        };
        auto it = fields.find(name);
        if (it == fields.end()) throw Error("set_parameter: unknown parameter '" + name + "'");
        this->*(it->second) = std::move(value);
    }

private:
    Tensor time_embedding(size_t t) const {
        std::vector<double> e(cfg_.time_dim);
        const size_t half = cfg_.time_dim / 2;
        for (size_t i = 0; i < half; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
            e[i] = std::sin(static_cast<double>(t) * freq);
            e[half + i] = std::cos(static_cast<double>(t) * freq);
        }
        return Tensor::from_data({cfg_.time_dim}, std::move(e));
    }

    // 3x3 conv over a [C, H, W] tensor. weight: [Cout, 9*Cin], bias [Cout].
    Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias, size_t cin,
                   size_t h, size_t w) const {
        const Tensor patches = gather_pad(x, detail::conv3x3_indices(cin, h, w), {9 * cin, h * w});
        return add_colvec(matmul(weight, patches), bias);  // [Cout, h*w]
    }

    // Same, but x is already a flat [Cin, H*W] map.
    Tensor conv3x3_flat(const Tensor& x, const Tensor& weight, const Tensor& bias, size_t cin,
                        size_t h, size_t w) const {
        const Tensor patches = gather_pad(x, detail::conv3x3_indices(cin, h, w), {9 * cin, h * w});
        return add_colvec(matmul(weight, patches), bias);
    }

    Tensor avgpool2(const Tensor& x, size_t c, size_t h, size_t w) const {
        const Shape out_shape = {c, (h / 2) * (w / 2)};
        Tensor acc = gather_pad(x, detail::avgpool2_indices(c, h, w, 0, 0), out_shape);
        acc = add(acc, gather_pad(x, detail::avgpool2_indices(c, h, w, 0, 1), out_shape));
        acc = add(acc, gather_pad(x, detail::avgpool2_indices(c, h, w, 1, 0), out_shape));
        acc = add(acc, gather_pad(x, detail::avgpool2_indices(c, h, w, 1, 1), out_shape));
        return scale(acc, 0.25);
    }

    Tensor upsample2(const Tensor& x, size_t c, size_t h, size_t w) const {
        return gather_pad(x, detail::upsample2_indices(c, h, w), {c, 4 * h * w});
    }

    DenoiserConfig cfg_;
    Tensor conv_in_w_, conv_in_b_;
    Tensor conv_down_w_, conv_down_b_;
    Tensor ctx_proj_, attn_q_, attn_k_, attn_v_, attn_o_;
    Tensor conv_up_w_, conv_up_b_;
    Tensor conv_out_w_, conv_out_b_;
    Tensor time_w1_, time_w2_, time_w3_;
    Tensor txt_w1_, txt_w2_, txt_w3_;
};

// A noise predictor signature shared by the trained denoiser and the test
// stubs: (z_t, t, text embedding) -> epsilon estimate.
using Predictor = std::function<Tensor(const Tensor&, size_t, const Tensor&)>;

inline Predictor as_predictor(const Denoiser& den) {
    return [&den](const Tensor& z, size_t t, const Tensor& txt) { return den.forward(z, t, txt); };
}

// ---------------------------------------------------------------------- loss

struct DiffusionBatchItem {
    Tensor image;                       // [C, H, W] pixel tensor
    std::vector<uint32_t> caption_ids;  // tokenized caption
};

// Per item: encode to latent, draw t uniform on 1..T then eps ~ N(0,1) in
// element order, corrupt, predict, accumulate mean squared error over
// elements; final loss is the batch mean. Differentiable through the
// predictor and the text encoder.
inline Tensor denoise_loss(const Predictor& predict, const TextEncoder& text,
                           const std::vector<DiffusionBatchItem>& batch,
                           const NoiseSchedule& sched, Rng& rng) {
    if (batch.empty()) throw Error("denoise_loss: empty batch");
    for (const auto& item : batch) {
        if (item.image.shape() != batch.front().image.shape()) {
            throw Error("denoise_loss: mixed resolutions in one batch");
        }
    }
    // rng draws happen sequentially in item order (t, then eps per element);
    // only the graph construction fans out
    std::vector<size_t> ts(batch.size());
    std::vector<Tensor> z0s(batch.size()), epss(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        z0s[i] = LatentCodec::encode(batch[i].image);
        ts[i] = 1 + static_cast<size_t>(rng.below(sched.steps()));
        epss[i] = Tensor::randn(rng, z0s[i].shape());
    }
    std::vector<Tensor> item_losses(batch.size());
    parallel_for(batch.size(), [&](size_t i) {
        const Tensor zt = add_noise(z0s[i], ts[i], epss[i], sched);
        const Tensor txt = text.forward(batch[i].caption_ids);
        const Tensor pred = predict(zt, ts[i], txt);
        item_losses[i] = mse_loss(pred, epss[i]);
    });
    Tensor total = item_losses[0];
    for (size_t i = 1; i < batch.size(); ++i) total = add(total, item_losses[i]);
    return scale(total, 1.0 / static_cast<double>(batch.size()));
}

inline Tensor denoise_loss(const Denoiser& den, const TextEncoder& text,
                           const std::vector<DiffusionBatchItem>& batch,
                           const NoiseSchedule& sched, Rng& rng) {
    return denoise_loss(as_predictor(den), text, batch, sched, rng);
}

// ------------------------------------------------------------------ samplers

// Literal subtraction iteration: x_{t-1} = x_t - eps_theta(x_t, t, txt),
// from x_T ~ N(0,1) down to x_0. Returns the final latent.
inline Tensor sample_subtractive_latent(const Predictor& predict, const Tensor& txt,
                                        const Shape& latent_shape, size_t steps, Rng& rng) {
    if (steps < 1) throw Error("sample: need at least one step");
    Tensor x = Tensor::randn(rng, latent_shape);
    for (size_t t = steps; t >= 1; --t) {
        x = sub(x, predict(x, t, txt));
    }
    return x;
}

// Standard ancestral epsilon-prediction update with per-step Gaussian noise,
// none at t=1. Returns the final latent.
inline Tensor sample_ancestral_latent(const Predictor& predict, const Tensor& txt,
                                      const Shape& latent_shape, const NoiseSchedule& sched,
                                      Rng& rng) {
    Tensor x = Tensor::randn(rng, latent_shape);
    for (size_t t = sched.steps(); t >= 1; --t) {
        const Tensor eps_hat = predict(x, t, txt);
        const double beta = sched.beta(t);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(t));
        const double coef = beta / std::sqrt(1.0 - sched.alpha_bar(t));
        std::vector<double> next(x.numel());
        for (size_t i = 0; i < next.size(); ++i) {
            next[i] = inv_sqrt_alpha * (x.at(i) - coef * eps_hat.at(i));
        }
        if (t > 1) {
            // posterior variance beta_tilde = beta * (1 - abar_{t-1}) / (1 - abar_t)
            const double var =
                beta * (1.0 - sched.alpha_bar(t - 1)) / (1.0 - sched.alpha_bar(t));
            const double sd = std::sqrt(var);
            for (double& v : next) v += sd * rng.normal();
        }
        x = Tensor::from_data(x.shape(), std::move(next));
    }
    return x;
}

// Image-space wrappers around the two samplers.
inline Tensor sample_subtractive(const Predictor& predict, const Tensor& txt, const Shape& latent_shape,
                           size_t steps, Rng& rng) {
    return LatentCodec::decode(sample_subtractive_latent(predict, txt, latent_shape, steps, rng));
}

inline Tensor sample_ddpm(const Predictor& predict, const Tensor& txt, const Shape& latent_shape,
                          const NoiseSchedule& sched, Rng& rng) {
    return LatentCodec::decode(sample_ancestral_latent(predict, txt, latent_shape, sched, rng));
}

// ------------------------------------------------------------------ training

struct DiffusionConfig {
    size_t batch_size = 8;
    double base_lr = 1e-5;
    size_t warmup_steps = 100;
    size_t total_steps = 2000;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::vector<std::pair<size_t, size_t>> resolutions = {{8, 8}, {16, 16}};

    void validate() const {
        if (base_lr <= 0.0) throw Error("config: base_lr must be positive");
        if (warmup_steps > total_steps) throw Error("config: warmup_steps exceeds total_steps");
        if (resolutions.empty()) throw Error("config: no resolutions configured");
    }
};

// Strict alternation over the configured resolutions, one homogeneous batch
// per step; the text encoder trains jointly with the denoiser.
inline TrainLog train_diffusion(const std::vector<DiffusionBatchItem>& items,
                                const DiffusionConfig& cfg, Denoiser& den, TextEncoder& text,
                                const NoiseSchedule& sched, Rng& rng) {
    cfg.validate();
    if (items.empty()) throw Error("train_diffusion: empty dataset");

    std::vector<std::vector<size_t>> pools(cfg.resolutions.size());
    for (size_t i = 0; i < items.size(); ++i) {
        const auto& shape = items[i].image.shape();
        for (size_t r = 0; r < cfg.resolutions.size(); ++r) {
            if (shape.size() == 3 && shape[1] == cfg.resolutions[r].first &&
                shape[2] == cfg.resolutions[r].second) {
                pools[r].push_back(i);
            }
        }
    }
    for (size_t r = 0; r < cfg.resolutions.size(); ++r) {
        if (pools[r].empty()) {
            throw Error("train_diffusion: dataset has no images at " +
                        std::to_string(cfg.resolutions[r].first) + "x" +
                        std::to_string(cfg.resolutions[r].second));
        }
    }

    auto params = den.parameters();
    {
        auto tp = text.parameters();
        params.insert(params.end(), tp.begin(), tp.end());
    }
    Adam adam;
    TrainLog log;
    const Predictor predict = as_predictor(den);

    std::vector<size_t> cursors(pools.size(), 0);
    for (auto& pool : pools) rng.shuffle(pool);

    for (size_t step = 0; step < cfg.total_steps; ++step) {
        const size_t r = step % pools.size();
        auto& pool = pools[r];
        std::vector<DiffusionBatchItem> batch;
        const size_t batch_n = std::min(cfg.batch_size, pool.size());
        for (size_t b = 0; b < batch_n; ++b) {
            if (cursors[r] == pool.size()) {
                cursors[r] = 0;
                rng.shuffle(pool);
            }
            batch.push_back(items[pool[cursors[r]++]]);
        }
        const Tensor loss = denoise_loss(predict, text, batch, sched, rng);
        const double lr = lr_schedule(step, cfg.warmup_steps, cfg.total_steps, cfg.base_lr);
        backward(loss);
        if (cfg.optimizer == OptimizerKind::adam) {
            adam.step(params, lr);
        } else {
            gd_step(params, lr);
        }
        log.steps.push_back({step, lr, loss.item(),
                             std::to_string(cfg.resolutions[r].first) + "x" +
                                 std::to_string(cfg.resolutions[r].second)});
    }
    return log;
}

}  // namespace taiyi
