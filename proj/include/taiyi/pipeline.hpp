#pragma once

// Glue between on-disk datasets and the training/evaluation entry points:
// grouping caption rows by image, tokenizing, and materializing image
// tensors. Iteration order always follows first appearance in the dataset.

#include <map>
#include <string>
#include <vector>

#include "taiyi/cliptrain.hpp"
#include "taiyi/dataset.hpp"
#include "taiyi/diffusion.hpp"
#include "taiyi/error.hpp"
#include "taiyi/evalkit.hpp"
#include "taiyi/tokenizer.hpp"

namespace taiyi {

namespace detail {

struct GroupedRecord {
    std::string id;
    std::string image;
    std::string web_caption;
    std::string synthetic_caption;
    bool has_web = false;
    bool has_synthetic = false;
};

inline std::vector<GroupedRecord> group_by_image(const Dataset& ds) {
    std::vector<GroupedRecord> groups;
    std::map<std::string, size_t> index;
    for (const auto& r : ds.records) {
        auto it = index.find(r.id);
        if (it == index.end()) {
            index.emplace(r.id, groups.size());
            groups.push_back({r.id, r.image, "", "", false, false});
            it = index.find(r.id);
        }
        GroupedRecord& g = groups[it->second];
        if (r.source == "web") {
            g.web_caption = r.caption;
            g.has_web = true;
        } else if (r.source == "synthetic") {
            g.synthetic_caption = r.caption;
            g.has_synthetic = true;
        } else {
            throw FormatError("dataset: record " + r.id + " has unknown source '" + r.source + "'");
        }
    }
    return groups;
}

}  // namespace detail

// One contrastive example per image that carries the caption required by
// `stage`; the other caption field is filled when present.
inline std::vector<ClipExample> build_clip_examples(const Dataset& ds, ImageStore& store,
                                                    const Vocabulary& vocab, size_t max_len,
                                                    TrainStage stage) {
    std::vector<ClipExample> out;
    for (const auto& g : detail::group_by_image(ds)) {
        const bool needed = stage == TrainStage::stage1 ? g.has_web : g.has_synthetic;
        if (!needed) continue;
        ClipExample ex;
        ex.image = store.get(g.image);
        if (g.has_web) ex.web_tokens = encode(vocab, g.web_caption, max_len);
        if (g.has_synthetic) ex.synthetic_tokens = encode(vocab, g.synthetic_caption, max_len);
        if (!g.has_web) ex.web_tokens = ex.synthetic_tokens;
        if (!g.has_synthetic) ex.synthetic_tokens = ex.web_tokens;
        out.push_back(std::move(ex));
    }
    if (out.empty()) {
        throw CompatError(std::string("dataset: no image carries a ") +
                          (stage == TrainStage::stage1 ? "web" : "synthetic") + " caption");
    }
    return out;
}

inline std::vector<RetrievalItem> build_retrieval_items(const Dataset& ds, ImageStore& store,
                                                        const Vocabulary& vocab, size_t max_len,
                                                        const std::string& source) {
    std::vector<RetrievalItem> out;
    for (const auto& g : detail::group_by_image(ds)) {
        if (source == "web" && g.has_web) {
            out.push_back({store.get(g.image), encode(vocab, g.web_caption, max_len)});
        } else if (source == "synthetic" && g.has_synthetic) {
            out.push_back({store.get(g.image), encode(vocab, g.synthetic_caption, max_len)});
        }
    }
    if (out.empty()) {
        throw CompatError("dataset: no image carries a " + source + " caption");
    }
    return out;
}

// Diffusion training rows prefer the requested caption source and fall back
// to the other one, so partially enriched datasets still train.
inline std::vector<DiffusionBatchItem> build_diffusion_items(const Dataset& ds, ImageStore& store,
                                                             const Vocabulary& vocab,
                                                             size_t max_len,
                                                             const std::string& prefer) {
    std::vector<DiffusionBatchItem> out;
    for (const auto& g : detail::group_by_image(ds)) {
        const std::string* caption = nullptr;
        if (prefer == "synthetic") {
            caption = g.has_synthetic ? &g.synthetic_caption : (g.has_web ? &g.web_caption : nullptr);
        } else {
            caption = g.has_web ? &g.web_caption : (g.has_synthetic ? &g.synthetic_caption : nullptr);
        }
        if (!caption) continue;
        out.push_back({store.get(g.image), encode(vocab, *caption, max_len)});
    }
    if (out.empty()) throw CompatError("dataset: no captioned images");
    return out;
}

}  // namespace taiyi
