#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lens/errors.hpp"
#include "lens/jsonl.hpp"

namespace lens::gateway {

struct ChatPrompt {
    std::string system;
    std::string user;
    // (user, assistant) exemplar pairs, sent before the final user turn.
    std::vector<std::pair<std::string, std::string>> few_shot;
};

struct GenParams {
    double temperature = 0.7;
    double top_p = 0.8;
    std::optional<int> top_k = 20;
    int max_tokens = 1024;
    std::optional<std::uint64_t> seed;

    void validate() const;
};

// Defaults used for few-shot baseline generation.
GenParams baseline_params();
// Judges run greedy for reproducible verdicts.
GenParams judge_params();

struct BackendConfig {
    std::string base_url;       // "http://host:port" or "mock://name?seed=N"
    std::string model_name;
    std::string api_key_env;    // env var holding the bearer key; never the key itself
    double timeout_s = 120.0;
    int max_retries = 3;
    int parallelism_limit = 4;
    double retry_backoff_s = 1.0;  // base; delay doubles per retry

    Json to_json() const;
    static BackendConfig from_json(const Json& j);
};

struct Usage {
    std::int64_t prompt_tokens = -1;   // -1 when the server did not report it
    std::int64_t completion_tokens = -1;
};

struct Completion {
    std::string text;
    Usage usage;
};

// Transient failure (connect error, non-2xx); eligible for retry.
struct TransportError : GatewayError {
    explicit TransportError(const std::string& what, int attempts = 1)
        : GatewayError(what), attempts(attempts) {}
    int attempts;
};

// Structured extraction failed twice; carries both raw payloads.
struct SchemaError : GatewayError {
    SchemaError(const std::string& what, std::vector<std::string> raw)
        : GatewayError(what), raw_attempts(std::move(raw)) {}
    std::vector<std::string> raw_attempts;
};

// Thread-safe JSONL sink for request/response telemetry. With redact=true
// (the default) only hashes, latency, and token usage are written.
class AuditLog {
public:
    explicit AuditLog(std::string path, bool redact = true);
    void record(const std::string& model, const ChatPrompt& prompt, const Completion& completion,
                double latency_ms, int attempts);

private:
    std::string path_;
    bool redact_;
    std::mutex mu_;
};

class ChatBackend {
public:
    explicit ChatBackend(BackendConfig cfg);
    virtual ~ChatBackend() = default;

    // One transport attempt, gated by the backend's parallelism limit.
    Completion send(const ChatPrompt& prompt, const GenParams& params);

    const BackendConfig& config() const { return config_; }
    void set_audit(std::shared_ptr<AuditLog> log) { audit_ = std::move(log); }

protected:
    virtual Completion do_send(const ChatPrompt& prompt, const GenParams& params) = 0;

private:
    BackendConfig config_;
    std::shared_ptr<AuditLog> audit_;

    // counting semaphore with a runtime limit
    std::mutex mu_;
    std::condition_variable cv_;
    int in_flight_ = 0;
};

// Deterministic backend for tests and offline pipeline runs. Replies are a
// pure function of (backend seed, prompt hash, request seed); canned replies,
// scripted reply queues, and scripted failures can be injected.
class MockBackend : public ChatBackend {
public:
    explicit MockBackend(BackendConfig cfg, std::uint64_t seed = 0);

    void set_canned(const std::string& user_prompt, const std::string& reply);
    void push_script(const std::string& reply);       // consumed FIFO, before canned/derived
    void fail_next(int n);                            // next n sends raise TransportError
    void set_latency_ms(int ms) { latency_ms_ = ms; }

    int total_calls() const { return total_calls_.load(); }
    int max_in_flight() const { return max_in_flight_.load(); }
    void reset_counters();

protected:
    Completion do_send(const ChatPrompt& prompt, const GenParams& params) override;

private:
    std::string derived_reply(const ChatPrompt& prompt, const GenParams& params,
                              std::uint64_t digest) const;

    std::uint64_t seed_;
    int latency_ms_ = 0;
    std::mutex mu_;
    std::map<std::string, std::string> canned_;
    std::deque<std::string> script_;
    int fail_budget_ = 0;
    std::atomic<int> total_calls_{0};
    std::atomic<int> in_flight_now_{0};
    std::atomic<int> max_in_flight_{0};
};

// OpenAI-compatible `POST /v1/chat/completions` client.
class HttpBackend : public ChatBackend {
public:
    explicit HttpBackend(BackendConfig cfg);

protected:
    Completion do_send(const ChatPrompt& prompt, const GenParams& params) override;
};

// mock:// URLs give a MockBackend (optional ?seed=N), anything else HTTP.
std::unique_ptr<ChatBackend> make_backend(const BackendConfig& cfg);

// Request body in the wire format; exposed for tests.
Json build_request_body(const ChatPrompt& prompt, const GenParams& params,
                        const std::string& model);

// Delay before retry number `retry_index` (0-based): base * 2^retry_index.
double backoff_delay_s(int retry_index, double base);

// Full completion call: retries transport failures up to max_retries with
// exponential backoff, rejects empty completions.
std::string complete(ChatBackend& backend, const ChatPrompt& prompt, const GenParams& params);

// Outermost `{...}` span in `text`, honoring quoted strings and escapes.
std::optional<std::string> extract_json_object(const std::string& text);

// Known response schemas: judge_verdict, symptom_evaluation, severity_pair.
// Returns an error description, or nullopt when the value conforms.
std::optional<std::string> validate_schema(const std::string& schema_name, const Json& value);

// complete() + JSON extraction + schema validation. One corrective re-prompt
// on failure, then SchemaError carrying both raw payloads.
Json complete_structured(ChatBackend& backend, const ChatPrompt& prompt,
                         const std::string& schema_name, const GenParams& params);

}  // namespace lens::gateway
