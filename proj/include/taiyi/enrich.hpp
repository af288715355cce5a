#pragma once

// Caption enrichment: build instruction-driven requests from raw web-crawled
// records, obtain synthetic captions from a pluggable vision-language-model
// client (HTTP or deterministic mock), and assemble leakage-free train/val
// splits in which every image keeps both its web and synthetic captions.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "taiyi/dataset.hpp"
#include "taiyi/error.hpp"
#include "taiyi/rng.hpp"

namespace taiyi {

struct RawRecord {
    std::string id;
    std::string image;        // resolvable image reference
    std::string web_caption;  // possibly noisy or empty
    std::string language;     // "zh" or "en"
};

struct InstructionTemplates {
    std::string en = "Write a detailed description of the given image.";
    std::string zh = "请详细描述图片内容。";
};

struct EnrichmentRequest {
    std::string image_b64;
    std::string web_caption;
    std::string instruction;
};

inline EnrichmentRequest build_enrichment_request(const RawRecord& rec, std::string image_b64,
                                                  const InstructionTemplates& templates = {}) {
    EnrichmentRequest req;
    req.image_b64 = std::move(image_b64);
    req.web_caption = rec.web_caption;
    if (rec.language == "en") {
        req.instruction = templates.en;
    } else if (rec.language == "zh") {
        req.instruction = templates.zh;
    } else {
        throw Error("enrich: unknown language tag '" + rec.language + "' for record " + rec.id);
    }
    return req;
}

// ------------------------------------------------------------------- clients

class CaptionClient {
public:
    virtual ~CaptionClient() = default;
    // Returns the synthetic caption; throws Error on any failure. Must be
    // safe to call from several threads at once.
    virtual std::string complete(const EnrichmentRequest& req) = 0;
};

class MockCaptionClient : public CaptionClient {
public:
    MockCaptionClient() = default;

    explicit MockCaptionClient(std::function<std::string(const EnrichmentRequest&)> fn)
        : fn_(std::move(fn)) {}

    void fail_when(std::function<bool(const EnrichmentRequest&)> pred) {
        fail_ = std::move(pred);
    }

    std::string complete(const EnrichmentRequest& req) override {
        if (fail_ && fail_(req)) throw Error("mock client: injected failure");
        if (fn_) return fn_(req);
        return "desc:" + req.web_caption;
    }

private:
    std::function<std::string(const EnrichmentRequest&)> fn_;
    std::function<bool(const EnrichmentRequest&)> fail_;
};

struct RetryPolicy {
    size_t attempts = 3;
    double backoff_start_s = 1.0;  // doubles per retry
};

struct EnrichSkip {
    std::string id;
    std::string reason;
};

struct EnrichReport {
    size_t processed = 0;
    size_t succeeded = 0;
    std::vector<EnrichSkip> skipped;

    std::string to_text() const {
        std::ostringstream os;
        os << "processed " << processed << ", succeeded " << succeeded << ", skipped "
           << skipped.size() << "\n";
        for (const auto& s : skipped) os << "skip " << s.id << ": " << s.reason << "\n";
        return os.str();
    }
};

struct EnrichResult {
    std::vector<DataRecord> pairs;
    EnrichReport report;
};

using ImageLoader = std::function<std::string(const RawRecord&)>;

inline std::string base64_encode(const std::string& bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (size_t i = 0; i < bytes.size(); i += 3) {
        uint32_t chunk = static_cast<uint8_t>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) chunk |= static_cast<uint8_t>(bytes[i + 1]) << 8;
        if (i + 2 < bytes.size()) chunk |= static_cast<uint8_t>(bytes[i + 2]);
        out.push_back(alphabet[(chunk >> 18) & 0x3F]);
        out.push_back(alphabet[(chunk >> 12) & 0x3F]);
        out.push_back(i + 1 < bytes.size() ? alphabet[(chunk >> 6) & 0x3F] : '=');
        out.push_back(i + 2 < bytes.size() ? alphabet[chunk & 0x3F] : '=');
    }
    return out;
}

inline ImageLoader file_image_loader(const std::string& base_dir) {
    return [base_dir](const RawRecord& rec) {
        const std::string path = base_dir + "/" + rec.image;
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("enrich: cannot read image " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
}

// One synthetic pair per record plus the retained web pair, in input order.
// A record whose client calls all fail contributes only a skip entry. Every
// record failing is a run-level error.
inline EnrichResult enrich_captions(const std::vector<RawRecord>& records, CaptionClient& client,
                                    const RetryPolicy& policy, const ImageLoader& load_image,
                                    const InstructionTemplates& templates = {},
                                    size_t concurrency = 1) {
    if (policy.attempts == 0) throw Error("enrich: retry policy needs at least one attempt");
    EnrichResult result;
    result.report.processed = records.size();
    if (records.empty()) return result;

    struct Slot {
        bool ok = false;
        std::string caption;
        std::string error;
    };
    std::vector<Slot> slots(records.size());

    auto work = [&](size_t idx) {
        const RawRecord& rec = records[idx];
        try {
            const EnrichmentRequest req =
                build_enrichment_request(rec, base64_encode(load_image(rec)), templates);
            std::string last_error;
            for (size_t attempt = 0; attempt < policy.attempts; ++attempt) {
                if (attempt > 0 && policy.backoff_start_s > 0.0) {
                    const double delay =
                        policy.backoff_start_s * static_cast<double>(1ull << (attempt - 1));
                    std::this_thread::sleep_for(std::chrono::duration<double>(delay));
                }
                try {
                    slots[idx].caption = client.complete(req);
                    slots[idx].ok = true;
                    return;
                } catch (const std::exception& e) {
                    last_error = e.what();
                }
            }
            slots[idx].error = last_error;
        } catch (const std::exception& e) {
            slots[idx].error = e.what();
        }
    };

    if (concurrency <= 1) {
        for (size_t i = 0; i < records.size(); ++i) work(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> workers;
        const size_t n_threads = std::min(concurrency, records.size());
        for (size_t t = 0; t < n_threads; ++t) {
            workers.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < records.size(); i = next.fetch_add(1)) {
                    work(i);
                }
            });
        }
        for (auto& w : workers) w.join();
    }

    for (size_t i = 0; i < records.size(); ++i) {
        const RawRecord& rec = records[i];
        if (!slots[i].ok) {
            result.report.skipped.push_back({rec.id, slots[i].error});
            continue;
        }
        result.report.succeeded += 1;
        if (!rec.web_caption.empty()) {
            result.pairs.push_back({rec.id, rec.image, rec.web_caption, "web", rec.language});
        }
        result.pairs.push_back({rec.id, rec.image, slots[i].caption, "synthetic", rec.language});
    }
    if (result.report.succeeded == 0) {
        throw Error("enrich: every record failed; first error: " +
                    result.report.skipped.front().reason);
    }
    return result;
}

// ------------------------------------------------------------ dataset splits

struct SplitDatasets {
    Dataset train;
    Dataset val;
};

// Seeded shuffle of distinct image ids, then a ratio split. All captions of
// an image land in the same side, so no image spans the splits.
inline SplitDatasets assemble_dataset(const std::vector<DataRecord>& pairs, double split_ratio,
                                      uint64_t seed) {
    if (pairs.empty()) throw Error("assemble_dataset: no pairs");
    if (split_ratio <= 0.0 || split_ratio >= 1.0) {
        throw Error("assemble_dataset: split ratio must lie strictly between 0 and 1");
    }
    std::vector<std::string> ids;
    for (const auto& p : pairs) {
        if (std::find(ids.begin(), ids.end(), p.id) == ids.end()) ids.push_back(p.id);
    }
    Rng rng(seed);
    rng.shuffle(ids);
    const size_t n_train = static_cast<size_t>(split_ratio * static_cast<double>(ids.size()));
    std::vector<std::string> train_ids(ids.begin(), ids.begin() + n_train);

    SplitDatasets out;
    for (const auto& p : pairs) {
        const bool in_train =
            std::find(train_ids.begin(), train_ids.end(), p.id) != train_ids.end();
        (in_train ? out.train : out.val).records.push_back(p);
    }
    return out;
}

// Raw inputs for enrichment from a dataset's web rows.
inline std::vector<RawRecord> raw_records_from(const Dataset& ds) {
    std::vector<RawRecord> out;
    for (const auto& r : ds.records) {
        if (r.source == "web") out.push_back({r.id, r.image, r.caption, r.language});
    }
    return out;
}

}  // namespace taiyi
