#pragma once

// HTTP caption client: POST {image_b64, web_caption, instruction} as JSON,
// expect {caption} back. Any non-200 status or malformed body throws, which
// the retry loop in enrich_captions treats as retryable.

#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "taiyi/enrich.hpp"
#include "taiyi/error.hpp"

namespace taiyi {

class HttpCaptionClient : public CaptionClient {
public:
    // endpoint: "http://host:port/path"
    explicit HttpCaptionClient(const std::string& endpoint) {
        const std::string scheme = "http://";
        if (endpoint.rfind(scheme, 0) != 0) {
            throw ConfigError("enrich: endpoint must start with http:// : " + endpoint);
        }
        const std::string rest = endpoint.substr(scheme.size());
        const size_t slash = rest.find('/');
        host_port_ = rest.substr(0, slash);
        path_ = slash == std::string::npos ? "/" : rest.substr(slash);
        if (host_port_.empty()) throw ConfigError("enrich: endpoint has no host: " + endpoint);
    }

    std::string complete(const EnrichmentRequest& req) override {
        httplib::Client client(host_port_);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(30, 0);
        nlohmann::json body;
        body["image_b64"] = req.image_b64;
        body["web_caption"] = req.web_caption;
        body["instruction"] = req.instruction;
        auto res = client.Post(path_, body.dump(), "application/json");
        if (!res) {
            throw Error("enrich: request to " + host_port_ + path_ + " failed: " +
                        httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            throw Error("enrich: endpoint returned status " + std::to_string(res->status));
        }
        nlohmann::json reply;
        try {
            reply = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(std::string("enrich: response is not valid JSON: ") + e.what());
        }
        if (!reply.contains("caption") || !reply["caption"].is_string()) {
            throw Error("enrich: response missing string field 'caption'");
        }
        return reply["caption"];
    }

private:
    std::string host_port_;
    std::string path_;
};

}  // namespace taiyi
