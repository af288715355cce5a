#pragma once

// Deterministic paired toy dataset: each class has a distinct geometric
// pattern and bilingual captions; every image carries a per-image variant
// index in its captions so retrieval ground truth is unambiguous. Each image
// yields two records: the short noisy web caption and the detailed synthetic
// one.

#include <string>
#include <vector>

#include "taiyi/dataset.hpp"
#include "taiyi/error.hpp"
#include "taiyi/rng.hpp"
#include "taiyi/tensor.hpp"

namespace taiyi {

struct SynthSpec {
    size_t classes = 2;
    size_t per_class = 32;
    std::vector<size_t> resolutions = {8, 16};
    // per-image variation, constant on 2x2 blocks so it survives both patch
    // embedding and the latent codec; small enough that classes stay apart
    double noise = 0.1;
};

struct SynthData {
    Dataset dataset;
    std::vector<std::pair<std::string, Tensor>> images;  // file name -> [1, H, W]
};

namespace detail {

inline const char* pattern_name_en(size_t cls) {
    static const char* names[] = {"checker", "stripe", "grid", "diagonal"};
    return names[cls % 4];
}

inline const char* pattern_name_zh(size_t cls) {
    static const char* names[] = {"棋盘", "条纹", "网格", "斜纹"};
    return names[cls % 4];
}

// Distinct per-image marker words keep every caption identifiable, which is
// what makes train-set retrieval ground truth unambiguous.
inline std::string variant_word_en(size_t i) {
    static const char* words[] = {"maple", "river", "stone", "cloud", "amber", "pearl",
                                  "cedar", "frost", "ember", "tulip", "raven", "coral",
                                  "slate", "birch", "plume", "quill", "delta", "fjord",
                                  "glade", "heron", "inlet", "jade",  "karst", "lotus",
                                  "mesa",  "njord", "oasis", "prism", "quartz", "reef",
                                  "sage",  "thyme"};
    constexpr size_t n = sizeof(words) / sizeof(words[0]);
    std::string w = words[i % n];
    for (size_t rep = i / n; rep > 0; rep /= n) w += std::string("-") + words[rep % n];
    return w;
}

inline std::string variant_word_zh(size_t i) {
    static const char* chars[] = {"梅", "兰", "竹", "菊", "山", "水", "云", "石",
                                  "松", "柏", "枫", "荷", "雪", "雨", "风", "霜",
                                  "星", "月", "泉", "溪", "谷", "峰", "林", "田",
                                  "舟", "桥", "灯", "塔", "琴", "棋", "书", "画"};
    constexpr size_t n = sizeof(chars) / sizeof(chars[0]);
    std::string w = chars[i % n];
    for (size_t rep = i / n; rep > 0; rep /= n) w += chars[rep % n];
    return w;
}

inline double pattern_value(size_t cls, size_t y, size_t x, size_t h, size_t w) {
    const size_t cells = 4 * (1 + cls / 4);
    const size_t u = y * cells / h;
    const size_t v = x * cells / w;
    bool on = false;
    switch (cls % 4) {
        case 0: on = (u + v) % 2 == 0; break;
        case 1: on = u % 2 == 0; break;
        case 2: on = v % 2 == 0; break;
        case 3: on = (u + v) % 4 < 2; break;
    }
    return on ? 0.9 : -0.9;
}

}  // namespace detail

// Clean class pattern at a given resolution, without per-image noise.
inline Tensor synth_pattern(size_t cls, size_t resolution) {
    std::vector<double> data(resolution * resolution);
    for (size_t y = 0; y < resolution; ++y)
        for (size_t x = 0; x < resolution; ++x)
            data[y * resolution + x] = detail::pattern_value(cls, y, x, resolution, resolution);
    return Tensor::from_data({1, resolution, resolution}, std::move(data));
}

inline SynthData synth_data(const SynthSpec& spec, uint64_t seed) {
    if (spec.classes == 0) throw Error("synth_data: need at least one class");
    if (spec.per_class == 0) throw Error("synth_data: need at least one image per class");
    if (spec.resolutions.empty()) throw Error("synth_data: no resolutions");
    Rng rng(seed);
    SynthData out;
    for (size_t cls = 0; cls < spec.classes; ++cls) {
        for (size_t i = 0; i < spec.per_class; ++i) {
            const size_t res = spec.resolutions[i % spec.resolutions.size()];
            const size_t bw = res / 2;  // block grid width
            std::vector<double> block(bw * bw);
            for (double& b : block) b = rng.uniform(-spec.noise, spec.noise);
            std::vector<double> img(res * res);
            for (size_t y = 0; y < res; ++y)
                for (size_t x = 0; x < res; ++x) {
                    img[y * res + x] = detail::pattern_value(cls, y, x, res, res) +
                                       block[(y / 2) * bw + x / 2];
                }
            // identity marks: the first blocks carry the variant index in
            // binary at moderate contrast, so every image is recognizable
            // while classes stay far apart
            for (size_t bit = 0; bit < 5 && bit < bw * bw; ++bit) {
                const double mark = ((i >> bit) & 1) ? 0.6 : -0.6;
                const size_t by = bit / bw, bx = bit % bw;
                for (size_t dy = 0; dy < 2; ++dy)
                    for (size_t dx = 0; dx < 2; ++dx)
                        img[(2 * by + dy) * res + 2 * bx + dx] = mark;
            }
            const std::string id = "c" + std::to_string(cls) + "-i" + std::to_string(i);
            const std::string file = id + ".pgm";
            out.images.emplace_back(file, Tensor::from_data({1, res, res}, std::move(img)));

            const bool en = i % 2 == 0;
            DataRecord web, syn;
            web.id = id;
            web.image = file;
            web.source = "web";
            syn.id = id;
            syn.image = file;
            syn.source = "synthetic";
            if (en) {
                const std::string word = detail::variant_word_en(i);
                web.language = "en";
                syn.language = "en";
                web.caption = word + " " + detail::pattern_name_en(cls) + " img";
                syn.caption = word + " marker, a detailed " + detail::pattern_name_en(cls) +
                              " texture photo";
            } else {
                const std::string word = detail::variant_word_zh(i);
                web.language = "zh";
                syn.language = "zh";
                web.caption = word + "号" + detail::pattern_name_zh(cls) + "图";
                syn.caption = word + "号标记，一张清晰的" + detail::pattern_name_zh(cls) +
                              "纹理照片。";
            }
            out.dataset.records.push_back(std::move(web));
            out.dataset.records.push_back(std::move(syn));
        }
    }
    return out;
}

}  // namespace taiyi
