#include "adloop/adapters.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <stdexcept>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace adloop::adapters {

namespace {

using nlohmann::json;

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

const char* to_string(ApiStyle s) {
    return s == ApiStyle::chat_completion ? "chat_completion" : "raw_text";
}

std::optional<ApiStyle> api_style_from_string(const std::string& s) {
    if (s == "chat_completion") return ApiStyle::chat_completion;
    if (s == "raw_text") return ApiStyle::raw_text;
    return std::nullopt;
}

void EndpointSpec::validate() const {
    if (url.empty()) throw std::invalid_argument("endpoint: empty url");
    if (!(deadline_s > 0.0)) throw std::invalid_argument("endpoint: deadline must be > 0");
    if (max_retries < 0) throw std::invalid_argument("endpoint: max_retries must be >= 0");
}

const char* to_string(CallStatus s) {
    switch (s) {
        case CallStatus::ok: return "ok";
        case CallStatus::timeout: return "timeout";
        case CallStatus::transport_error: return "transport_error";
        case CallStatus::remote_error: return "remote_error";
    }
    return "?";
}

std::optional<CallStatus> call_status_from_string(const std::string& s) {
    for (CallStatus c : {CallStatus::ok, CallStatus::timeout, CallStatus::transport_error,
                         CallStatus::remote_error}) {
        if (s == to_string(c)) return c;
    }
    return std::nullopt;
}

ModelResponse ModelResponse::failure(CallStatus s, std::string detail) {
    ModelResponse r;
    r.status = s;
    r.text = std::move(detail);
    return r;
}

std::string base64_encode(const std::uint8_t* data, std::size_t len) {
    static const char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        std::uint32_t chunk = static_cast<std::uint32_t>(data[i]) << 16;
        if (i + 1 < len) chunk |= static_cast<std::uint32_t>(data[i + 1]) << 8;
        if (i + 2 < len) chunk |= data[i + 2];
        out.push_back(table[(chunk >> 18) & 0x3f]);
        out.push_back(table[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < len ? table[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < len ? table[chunk & 0x3f] : '=');
    }
    return out;
}

namespace {

struct ParsedUrl {
    std::string scheme_host_port;  // e.g. "http://127.0.0.1:8080"
    std::string path;              // e.g. "/v1/completions"
};

std::optional<ParsedUrl> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return std::nullopt;
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return ParsedUrl{url, "/"};
    return ParsedUrl{url.substr(0, path_start), url.substr(path_start)};
}

std::string build_body(const EndpointSpec& spec, const ModelRequest& req, std::string& content_type) {
    if (spec.api_style == ApiStyle::raw_text) {
        content_type = "text/plain";
        return req.prompt;
    }
    // Single-turn chat message; images ride along as base64 data URLs.
    json content = json::array();
    content.push_back(json{{"type", "text"}, {"text", req.prompt}});
    for (const ImagePayload& img : req.images) {
        content.push_back(json{
            {"type", "image_url"},
            {"image_url",
             json{{"url", "data:image/" + img.encoding + ";base64," +
                              base64_encode(img.bytes.data(), img.bytes.size())}}}});
    }
    json body{{"model", "default"},
              {"messages", json::array({json{{"role", "user"}, {"content", std::move(content)}}})}};
    content_type = "application/json";
    return body.dump();
}

std::optional<std::string> extract_text(const EndpointSpec& spec, const std::string& body) {
    if (spec.api_style == ApiStyle::raw_text) return body;
    try {
        const json j = json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

ModelResponse attempt_call(const EndpointSpec& spec, const ModelRequest& req) {
    const auto parsed = split_url(spec.url);
    if (!parsed) return ModelResponse::failure(CallStatus::transport_error, "bad url: " + spec.url);

    httplib::Client client(parsed->scheme_host_port);
    const auto whole = std::chrono::duration<double>(spec.deadline_s);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(whole);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(whole - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (spec.auth_token) headers.emplace("Authorization", "Bearer " + *spec.auth_token);

    std::string content_type;
    const std::string body = build_body(spec, req, content_type);
    auto res = client.Post(parsed->path, headers, body, content_type);

    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
            err == httplib::Error::Write) {
            return ModelResponse::failure(CallStatus::timeout, httplib::to_string(err));
        }
        return ModelResponse::failure(CallStatus::transport_error, httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300) {
        return ModelResponse::failure(CallStatus::remote_error,
                                      "http " + std::to_string(res->status));
    }
    const auto text = extract_text(spec, res->body);
    if (!text || text->empty()) {
        return ModelResponse::failure(CallStatus::remote_error, "empty or unparsable body");
    }
    ModelResponse r;
    r.status = CallStatus::ok;
    r.text = *text;
    return r;
}

}  // namespace

ModelResponse call_endpoint(const EndpointSpec& spec, const ModelRequest& req) {
    spec.validate();
    const auto start = std::chrono::steady_clock::now();
    ModelResponse last = ModelResponse::failure(CallStatus::remote_error, "no attempt made");
    for (int attempt = 0; attempt <= spec.max_retries; ++attempt) {
        last = attempt_call(spec, req);
        last.latency_s = seconds_since(start);
        if (last.ok()) return last;
        // Stay within the (max_retries+1) * deadline budget.
        if (seconds_since(start) >= (attempt + 1) * spec.deadline_s) continue;
    }
    return last;
}

EndpointAdapter::EndpointAdapter(EndpointSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
}

ModelResponse EndpointAdapter::complete(const ModelRequest& req) {
    return call_endpoint(spec_, req);
}

ScriptedAdapter::ScriptedAdapter(std::vector<ScriptRule> rules) : rules_(std::move(rules)) {}

ModelResponse ScriptedAdapter::complete(const ModelRequest& req) {
    for (const ScriptRule& rule : rules_) {
        if (rule.match.empty() || req.prompt.find(rule.match) != std::string::npos) {
            if (rule.status == CallStatus::ok && rule.response.empty()) {
                return ModelResponse::failure(CallStatus::remote_error,
                                              "scripted rule has an empty ok response");
            }
            ModelResponse r;
            r.status = rule.status;
            r.text = rule.response;
            return r;
        }
    }
    return ModelResponse::failure(CallStatus::remote_error, "no scripted rule matched");
}

AdapterPtr scripted_adapter(std::vector<ScriptRule> rules) {
    return std::make_shared<ScriptedAdapter>(std::move(rules));
}

std::string request_digest(const ModelRequest& req) {
    std::uint64_t h = fnv1a64(req.prompt.data(), req.prompt.size());
    for (const ImagePayload& img : req.images) {
        const std::uint64_t img_h = fnv1a64(img.bytes.data(), img.bytes.size(),
                                            fnv1a64(img.encoding.data(), img.encoding.size()));
        h = fnv1a64(&img_h, sizeof(img_h), h);
    }
    return hex64(h);
}

RecordReplayAdapter::RecordReplayAdapter(AdapterPtr inner, std::string cassette_path,
                                         CassetteMode mode)
    : inner_(std::move(inner)), path_(std::move(cassette_path)), mode_(mode) {
    if (mode_ == CassetteMode::replay || std::ifstream(path_).good()) {
        std::ifstream in(path_);
        if (!in) throw std::runtime_error("replay cassette missing: " + path_);
        const json j = json::parse(in);
        for (auto it = j.begin(); it != j.end(); ++it) {
            auto status = call_status_from_string(it.value().at("status").get<std::string>());
            if (!status) throw std::runtime_error("cassette has unknown status: " + path_);
            entries_[it.key()] = Entry{it.value().at("text").get<std::string>(), *status};
        }
    }
    if (mode_ == CassetteMode::record && !inner_) {
        throw std::invalid_argument("record mode needs an inner adapter");
    }
}

void RecordReplayAdapter::persist_locked() {
    json j = json::object();
    for (const auto& [digest, entry] : entries_) {
        j[digest] = json{{"text", entry.text}, {"status", to_string(entry.status)}};
    }
    std::ofstream out(path_);
    out << j.dump(2) << "\n";
}

ModelResponse RecordReplayAdapter::complete(const ModelRequest& req) {
    const std::string digest = request_digest(req);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = entries_.find(digest);
        if (it != entries_.end()) {
            ModelResponse r;
            r.text = it->second.text;
            r.status = it->second.status;
            return r;
        }
    }
    if (mode_ == CassetteMode::replay) {
        return ModelResponse::failure(CallStatus::remote_error,
                                      "cassette miss for digest " + digest);
    }
    ModelResponse r = inner_->complete(req);
    std::lock_guard<std::mutex> lock(mutex_);
    entries_[digest] = Entry{r.text, r.status};
    persist_locked();
    return r;
}

AdapterPtr record_replay(AdapterPtr inner, const std::string& cassette_path, CassetteMode mode) {
    return std::make_shared<RecordReplayAdapter>(std::move(inner), cassette_path, mode);
}

std::vector<ScriptRule> load_script_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open script file: " + path);
    const json j = json::parse(in);
    std::vector<ScriptRule> rules;
    for (const json& r : j.at("rules")) {
        ScriptRule rule;
        rule.match = r.value("match", "");
        rule.response = r.value("response", "");
        if (r.contains("status")) {
            auto status = call_status_from_string(r.at("status").get<std::string>());
            if (!status) throw std::runtime_error("script rule has unknown status");
            rule.status = *status;
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

}  // namespace adloop::adapters
