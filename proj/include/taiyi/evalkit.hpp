#pragma once

// Machine evaluation metrics: bidirectional retrieval recall, mean paired
// cosine (CLIP Sim), Inception Score, and FID, plus plain-text / CSV report
// rendering in the two familiar table layouts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "taiyi/encoder.hpp"
#include "taiyi/error.hpp"
#include "taiyi/linalg.hpp"
#include "taiyi/parallel.hpp"

namespace taiyi {

struct SimilarityMatrix {
    Mat sim;                    // queries x candidates
    std::vector<size_t> truth;  // truth[q] = ground-truth candidate index

    void validate() const {
        if (truth.size() != sim.rows) throw Error("similarity: truth size mismatch");
        for (size_t t : truth) {
            if (t >= sim.cols) throw Error("similarity: truth index out of range");
        }
    }
};

// Percentage of queries whose ground-truth candidate ranks in the top k.
// Ties resolve in favor of the lower candidate index.
inline double recall_at_k(const SimilarityMatrix& s, size_t k) {
    s.validate();
    if (k < 1 || k > s.sim.cols) {
        throw Error("recall_at_k: k=" + std::to_string(k) + " outside 1.." +
                    std::to_string(s.sim.cols));
    }
    size_t hits = 0;
    for (size_t q = 0; q < s.sim.rows; ++q) {
        const size_t t = s.truth[q];
        const double st = s.sim.at(q, t);
        size_t rank = 1;
        for (size_t c = 0; c < s.sim.cols; ++c) {
            if (c == t) continue;
            if (s.sim.at(q, c) > st || (s.sim.at(q, c) == st && c < t)) rank += 1;
        }
        hits += rank <= k;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(s.sim.rows);
}

// Mean cosine between matched rows; both matrices must be unit-row.
inline double clip_sim(const Mat& img_embs, const Mat& txt_embs) {
    if (img_embs.rows != txt_embs.rows || img_embs.cols != txt_embs.cols) {
        throw Error("clip_sim: embedding matrices must match in shape");
    }
    if (img_embs.rows == 0) throw Error("clip_sim: empty embeddings");
    for (const Mat* m : {&img_embs, &txt_embs}) {
        for (size_t i = 0; i < m->rows; ++i) {
            double s = 0.0;
            for (size_t j = 0; j < m->cols; ++j) s += m->at(i, j) * m->at(i, j);
            if (std::abs(std::sqrt(s) - 1.0) > 1e-6) {
                throw Error("clip_sim: row " + std::to_string(i) + " is not unit-norm");
            }
        }
    }
    double total = 0.0;
    for (size_t i = 0; i < img_embs.rows; ++i) {
        for (size_t j = 0; j < img_embs.cols; ++j) total += img_embs.at(i, j) * txt_embs.at(i, j);
    }
    return total / static_cast<double>(img_embs.rows);
}

// exp of the mean KL between per-sample class distributions and their
// marginal, with 0 log 0 taken as 0.
inline double inception_score(const Mat& probs) {
    if (probs.rows == 0 || probs.cols == 0) throw Error("inception_score: empty input");
    std::vector<double> marginal(probs.cols, 0.0);
    for (size_t i = 0; i < probs.rows; ++i) {
        double sum = 0.0;
        for (size_t j = 0; j < probs.cols; ++j) {
            const double p = probs.at(i, j);
            if (p < 0.0) throw Error("inception_score: negative probability in row " +
                                     std::to_string(i));
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw Error("inception_score: row " + std::to_string(i) + " sums to " +
                        std::to_string(sum));
        }
        for (size_t j = 0; j < probs.cols; ++j)
            marginal[j] += probs.at(i, j) / static_cast<double>(probs.rows);
    }
    double mean_kl = 0.0;
    for (size_t i = 0; i < probs.rows; ++i) {
        double kl = 0.0;
        for (size_t j = 0; j < probs.cols; ++j) {
            const double p = probs.at(i, j);
            if (p > 0.0) kl += p * std::log(p / marginal[j]);
        }
        mean_kl += kl / static_cast<double>(probs.rows);
    }
    return std::exp(mean_kl);
}

// Frechet distance between Gaussian fits. The cross term uses
// sqrtm(S_a^1/2 S_b S_a^1/2), whose trace equals trace((S_a S_b)^1/2) while
// staying in symmetric PSD territory.
inline double fid(const GaussianStats& a, const GaussianStats& b) {
    if (a.dim() != b.dim()) {
        throw Error("fid: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                    std::to_string(b.dim()));
    }
    double mean_sq = 0.0;
    for (size_t i = 0; i < a.dim(); ++i) {
        const double d = a.mean[i] - b.mean[i];
        mean_sq += d * d;
    }
    const Mat root_a = sqrtm_psd(a.cov);
    Mat inner = matmul(matmul(root_a, b.cov), root_a);
    // symmetrize away the matmul roundoff before the second root
    for (size_t i = 0; i < inner.rows; ++i)
        for (size_t j = i + 1; j < inner.cols; ++j) {
            const double m = 0.5 * (inner.at(i, j) + inner.at(j, i));
            inner.at(i, j) = m;
            inner.at(j, i) = m;
        }
    const double cross = trace(sqrtm_psd(inner));
    double result = mean_sq + trace(a.cov) + trace(b.cov) - 2.0 * cross;
    if (result < 0.0) {
        if (result < -1e-8) {
            throw Error("fid: distance " + std::to_string(result) + " below zero tolerance");
        }
        result = 0.0;
    }
    return result;
}

// ------------------------------------------------------------------- reports

struct Metric {
    std::string name;
    double value = 0.0;
    bool higher_is_better = true;
    int decimals = 3;
};

struct MetricReport {
    std::vector<Metric> metrics;

    double get(const std::string& name) const {
        for (const auto& m : metrics) {
            if (m.name == name) return m.value;
        }
        throw Error("report: no metric named '" + name + "'");
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "metric,value,direction\n";
        for (const auto& m : metrics) {
            os << m.name << ',' << std::fixed << std::setprecision(m.decimals) << m.value << ','
               << (m.higher_is_better ? "up" : "down") << '\n';
        }
        return os.str();
    }

    // Generic aligned listing (the layout used for CLIP Sim / FID / IS).
    std::string to_text() const {
        size_t width = 0;
        for (const auto& m : metrics) width = std::max(width, m.name.size());
        std::ostringstream os;
        for (const auto& m : metrics) {
            os << std::left << std::setw(static_cast<int>(width) + 2) << m.name << std::right
               << std::setw(10) << std::fixed << std::setprecision(m.decimals) << m.value << "  "
               << (m.higher_is_better ? "↑" : "↓") << '\n';
        }
        return os.str();
    }
};

// Two-direction retrieval grid in the usual R@1/5/10 layout.
inline std::string retrieval_table_text(const MetricReport& report) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "direction";
    for (const char* k : {"R@1", "R@5", "R@10"}) os << std::right << std::setw(8) << k;
    os << '\n';
    const char* rows[2] = {"Image -> Text", "Text -> Image"};
    const char* keys[2] = {"i2t", "t2i"};
    for (int r = 0; r < 2; ++r) {
        os << std::left << std::setw(16) << rows[r];
        for (const char* k : {"1", "5", "10"}) {
            os << std::right << std::setw(8) << std::fixed << std::setprecision(1)
               << report.get(std::string(keys[r]) + "_r@" + k);
        }
        os << '\n';
    }
    return os.str();
}

// ----------------------------------------------------------- model embedding

struct RetrievalItem {
    Tensor image;
    std::vector<uint32_t> caption_ids;
};

// Item embedding fans out across threads; rows land at their index so the
// gather order is deterministic.
inline Mat embed_images(const ImageEncoder& enc, const std::vector<RetrievalItem>& items) {
    Mat out(items.size(), enc.embed_dim());
    parallel_for(items.size(), [&](size_t i) {
        const auto e = enc.encode(items[i].image);
        std::copy(e.begin(), e.end(), out.v.begin() + static_cast<long>(i * out.cols));
    });
    return out;
}

inline Mat embed_texts(const TextEncoder& enc, const std::vector<RetrievalItem>& items) {
    Mat out(items.size(), enc.embed_dim());
    parallel_for(items.size(), [&](size_t i) {
        const auto e = enc.encode(items[i].caption_ids);
        std::copy(e.begin(), e.end(), out.v.begin() + static_cast<long>(i * out.cols));
    });
    return out;
}

// Embeds every item and reports R@1/5/10 for both directions (k capped at
// the candidate count so tiny datasets still report all columns).
inline MetricReport evaluate_retrieval(const TextEncoder& text, const ImageEncoder& image,
                                       const std::vector<RetrievalItem>& items) {
    if (items.empty()) throw Error("evaluate_retrieval: empty dataset");
    const Mat img = embed_images(image, items);
    const Mat txt = embed_texts(text, items);
    const size_t n = items.size();
    SimilarityMatrix i2t{Mat(n, n), {}};
    SimilarityMatrix t2i{Mat(n, n), {}};
    for (size_t q = 0; q < n; ++q) {
        i2t.truth.push_back(q);
        t2i.truth.push_back(q);
        for (size_t c = 0; c < n; ++c) {
            double s = 0.0;
            for (size_t j = 0; j < img.cols; ++j) s += img.at(q, j) * txt.at(c, j);
            i2t.sim.at(q, c) = s;
            double s2 = 0.0;
            for (size_t j = 0; j < img.cols; ++j) s2 += txt.at(q, j) * img.at(c, j);
            t2i.sim.at(q, c) = s2;
        }
    }
    MetricReport report;
    for (size_t k : {1ul, 5ul, 10ul}) {
        const size_t kk = std::min(k, n);
        report.metrics.push_back({"i2t_r@" + std::to_string(k), recall_at_k(i2t, kk), true, 1});
        report.metrics.push_back({"t2i_r@" + std::to_string(k), recall_at_k(t2i, kk), true, 1});
    }
    return report;
}

// Zero-shot class distribution of each image against a set of class prompt
// embeddings: softmax over scaled cosines. Feeds the Inception Score at desk
// scale, where the trained dual encoder stands in for the reference
// classifier.
inline Mat zero_shot_probs(const ImageEncoder& image, const TextEncoder& text,
                           const std::vector<Tensor>& images,
                           const std::vector<std::vector<uint32_t>>& class_prompts,
                           double temperature = 0.07) {
    if (class_prompts.empty()) throw Error("zero_shot_probs: no class prompts");
    if (temperature <= 0.0) throw Error("zero_shot_probs: temperature must be positive");
    Mat probs(images.size(), class_prompts.size());
    std::vector<std::vector<double>> cls;
    cls.reserve(class_prompts.size());
    for (const auto& prompt : class_prompts) cls.push_back(text.encode(prompt));
    for (size_t i = 0; i < images.size(); ++i) {
        const auto e = image.encode(images[i]);
        double mx = -1e300;
        std::vector<double> logits(cls.size());
        for (size_t c = 0; c < cls.size(); ++c) {
            double s = 0.0;
            for (size_t j = 0; j < e.size(); ++j) s += e[j] * cls[c][j];
            logits[c] = s / temperature;
            mx = std::max(mx, logits[c]);
        }
        double z = 0.0;
        for (size_t c = 0; c < cls.size(); ++c) {
            probs.at(i, c) = std::exp(logits[c] - mx);
            z += probs.at(i, c);
        }
        for (size_t c = 0; c < cls.size(); ++c) probs.at(i, c) /= z;
    }
    return probs;
}

}  // namespace taiyi
