#ifndef ADLOOP_ADAPTERS_HPP
#define ADLOOP_ADAPTERS_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace adloop::adapters {

enum class ApiStyle { chat_completion, raw_text };

const char* to_string(ApiStyle s);
std::optional<ApiStyle> api_style_from_string(const std::string& s);

struct EndpointSpec {
    std::string url;
    ApiStyle api_style = ApiStyle::chat_completion;
    std::optional<std::string> auth_token;
    double deadline_s = 10.0;
    int max_retries = 0;

    void validate() const;
};

struct ImagePayload {
    std::vector<std::uint8_t> bytes;
    std::string encoding;  // e.g. "ppm", "png"
};

struct ModelRequest {
    std::string prompt;
    std::vector<ImagePayload> images;
};

enum class CallStatus { ok, timeout, transport_error, remote_error };

const char* to_string(CallStatus s);
std::optional<CallStatus> call_status_from_string(const std::string& s);

/// Failures are values: a non-ok status with diagnostic text, never an
/// exception crossing the adapter boundary.
struct ModelResponse {
    std::string text;
    double latency_s = 0.0;
    CallStatus status = CallStatus::remote_error;

    bool ok() const { return status == CallStatus::ok; }
    static ModelResponse failure(CallStatus s, std::string detail);
};

/// Uniform client for fast/slow model endpoints and their test doubles.
/// Implementations must be safe to call from concurrent episode runners.
class Adapter {
  public:
    virtual ~Adapter() = default;
    virtual ModelResponse complete(const ModelRequest& req) = 0;
};

using AdapterPtr = std::shared_ptr<Adapter>;

/// HTTP client for a model endpoint. Performs at most max_retries+1
/// attempts, each bounded by the deadline.
ModelResponse call_endpoint(const EndpointSpec& spec, const ModelRequest& req);

class EndpointAdapter : public Adapter {
  public:
    explicit EndpointAdapter(EndpointSpec spec);
    ModelResponse complete(const ModelRequest& req) override;

  private:
    EndpointSpec spec_;
};

/// One scripted rule: the first rule whose matcher is found as a substring
/// of the prompt answers. An empty matcher matches everything. A non-ok
/// status makes the rule a fault-injection point.
struct ScriptRule {
    std::string match;  // literal substring; empty = match-all
    std::string response;
    CallStatus status = CallStatus::ok;
};

class ScriptedAdapter : public Adapter {
  public:
    explicit ScriptedAdapter(std::vector<ScriptRule> rules);
    ModelResponse complete(const ModelRequest& req) override;

  private:
    std::vector<ScriptRule> rules_;
};

AdapterPtr scripted_adapter(std::vector<ScriptRule> rules);

/// Adapter backed by a plain function; handy for in-process drivers.
class FunctionAdapter : public Adapter {
  public:
    using Fn = std::function<ModelResponse(const ModelRequest&)>;
    explicit FunctionAdapter(Fn fn) : fn_(std::move(fn)) {}
    ModelResponse complete(const ModelRequest& req) override { return fn_(req); }

  private:
    Fn fn_;
};

enum class CassetteMode { record, replay };

/// Stable request digest over prompt text and image payload digests, so
/// image-mode and text-mode runs both replay. FNV-1a 64, hex-encoded.
std::string request_digest(const ModelRequest& req);

/// Record/replay wrapper. Record mode persists (digest -> response) pairs
/// to the cassette after every new call; replay answers from the cassette
/// only and reports misses as remote_error naming the digest.
class RecordReplayAdapter : public Adapter {
  public:
    RecordReplayAdapter(AdapterPtr inner, std::string cassette_path, CassetteMode mode);
    ModelResponse complete(const ModelRequest& req) override;

  private:
    void persist_locked();

    AdapterPtr inner_;
    std::string path_;
    CassetteMode mode_;
    std::mutex mutex_;
    struct Entry {
        std::string text;
        CallStatus status;
    };
    std::map<std::string, Entry> entries_;
};

AdapterPtr record_replay(AdapterPtr inner, const std::string& cassette_path, CassetteMode mode);

/// Loads scripted rules from a JSON file: {"rules": [{"match": "...",
/// "response": "...", "status": "ok"}, ...]}.
std::vector<ScriptRule> load_script_file(const std::string& path);

std::string base64_encode(const std::uint8_t* data, std::size_t len);

}  // namespace adloop::adapters

#endif
