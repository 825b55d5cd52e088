#include "lens/gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "lens/hash.hpp"

namespace lens::gateway {

GenParams baseline_params() { return {0.7, 0.8, 20, 1024, std::nullopt}; }

GenParams judge_params() {
    GenParams p;
    p.temperature = 0.0;
    p.top_p = 1.0;
    p.top_k = std::nullopt;
    p.max_tokens = 1024;
    return p;
}

void GenParams::validate() const {
    if (temperature < 0.0) throw GatewayError("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw GatewayError("top_p must be in (0,1]");
    if (top_k && *top_k < 1) throw GatewayError("top_k must be positive when set");
    if (max_tokens < 1) throw GatewayError("max_tokens must be positive");
}

Json BackendConfig::to_json() const {
    return Json{{"base_url", base_url},
                {"model_name", model_name},
                {"api_key_env", api_key_env},
                {"timeout_s", timeout_s},
                {"max_retries", max_retries},
                {"parallelism_limit", parallelism_limit},
                {"retry_backoff_s", retry_backoff_s}};
}

BackendConfig BackendConfig::from_json(const Json& j) {
    BackendConfig c;
    c.base_url = j.at("base_url").get<std::string>();
    c.model_name = j.value("model_name", std::string{"default"});
    c.api_key_env = j.value("api_key_env", std::string{});
    c.timeout_s = j.value("timeout_s", 120.0);
    c.max_retries = j.value("max_retries", 3);
    c.parallelism_limit = j.value("parallelism_limit", 4);
    c.retry_backoff_s = j.value("retry_backoff_s", 1.0);
    if (c.parallelism_limit < 1) throw ConfigError("parallelism_limit must be >= 1");
    return c;
}

AuditLog::AuditLog(std::string path, bool redact) : path_(std::move(path)), redact_(redact) {}

void AuditLog::record(const std::string& model, const ChatPrompt& prompt,
                      const Completion& completion, double latency_ms, int attempts) {
    Json row;
    row["model"] = model;
    row["prompt_hash"] = fnv1a64_hex(prompt.system + "\x1f" + prompt.user);
    row["response_hash"] = fnv1a64_hex(completion.text);
    row["latency_ms"] = latency_ms;
    row["attempts"] = attempts;
    if (completion.usage.prompt_tokens >= 0) {
        row["usage"] = {{"prompt_tokens", completion.usage.prompt_tokens},
                        {"completion_tokens", completion.usage.completion_tokens}};
    }
    if (!redact_) {
        row["prompt"] = prompt.user;
        row["response"] = completion.text;
    }
    std::lock_guard<std::mutex> lock(mu_);
    std::ofstream out(path_, std::ios::app);
    if (out) out << row.dump() << '\n';
}

ChatBackend::ChatBackend(BackendConfig cfg) : config_(std::move(cfg)) {
    if (config_.parallelism_limit < 1) throw ConfigError("parallelism_limit must be >= 1");
}

Completion ChatBackend::send(const ChatPrompt& prompt, const GenParams& params) {
    if (prompt.user.empty()) throw GatewayError("prompt user message must be non-empty");
    params.validate();
    {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [this] { return in_flight_ < config_.parallelism_limit; });
        ++in_flight_;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
        Completion c = do_send(prompt, params);
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0).count();
        {
            std::lock_guard<std::mutex> lock(mu_);
            --in_flight_;
        }
        cv_.notify_one();
        if (audit_) audit_->record(config_.model_name, prompt, c, ms, 1);
        return c;
    } catch (...) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            --in_flight_;
        }
        cv_.notify_one();
        throw;
    }
}

// ---------------------------------------------------------------------------
// MockBackend

MockBackend::MockBackend(BackendConfig cfg, std::uint64_t seed)
    : ChatBackend(std::move(cfg)), seed_(seed) {}

void MockBackend::set_canned(const std::string& user_prompt, const std::string& reply) {
    std::lock_guard<std::mutex> lock(mu_);
    canned_[user_prompt] = reply;
}

void MockBackend::push_script(const std::string& reply) {
    std::lock_guard<std::mutex> lock(mu_);
    script_.push_back(reply);
}

void MockBackend::fail_next(int n) {
    std::lock_guard<std::mutex> lock(mu_);
    fail_budget_ = n;
}

void MockBackend::reset_counters() {
    total_calls_ = 0;
    max_in_flight_ = 0;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return mix64(a, b); }

bool contains(const std::string& haystack, const char* needle) {
    return haystack.find(needle) != std::string::npos;
}

}  // namespace

std::string MockBackend::derived_reply(const ChatPrompt& prompt, const GenParams& params,
                                       std::uint64_t digest) const {
    // Shape the reply after what the prompt asks for, so offline pipeline
    // runs exercise the same parsing paths as a live backend.
    if (contains(prompt.user, "Return your evaluation result in the following JSON format")) {
        Json verdict;
        std::vector<int> scores;
        std::vector<double> confidence;
        for (int d = 0; d < 5; ++d) {
            const std::uint64_t h = mix(digest, 101 + static_cast<std::uint64_t>(d));
            scores.push_back(4 + static_cast<int>(h & 1));
            confidence.push_back(0.81 + 0.17 * static_cast<double>((h >> 8) % 1000) / 1000.0);
        }
        verdict["scores"] = scores;
        verdict["confidence"] = confidence;
        verdict["critique"] = Json{{"summary", "automated mock review " + hex64(digest)}};
        return verdict.dump();
    }
    if (contains(prompt.system, "extract symptom information")) {
        static const char* kCats[] = {"Anhedonia", "DepressedMood", "SleepDisturbance",
                                      "FatigueEnergy", "AppetiteChange", "SelfWorthGuilt",
                                      "Concentration", "PsychomotorChange", "SuicidalIdeation",
                                      "SomaticDiscomfort", "AnxietyArousal", "UncontrollableWorry",
                                      "NegativeEvent", "OverallSeverity"};
        Json record = Json::object();
        for (int c = 0; c < 14; ++c) {
            const std::uint64_t h = mix(digest, 301 + static_cast<std::uint64_t>(c));
            const int ref_presence = static_cast<int>(h & 1);
            const int pred_presence = static_cast<int>((h >> 1) & 1);
            record[kCats[c]] = {
                {"ref_presence", ref_presence},
                {"pred_presence", pred_presence},
                {"ref_severity", ref_presence ? 1 + static_cast<int>((h >> 2) % 3) : 0},
                {"pred_severity", pred_presence ? 1 + static_cast<int>((h >> 4) % 3) : 0}};
        }
        return record.dump();
    }
    if (contains(prompt.system, "assess the severity of a symptom")) {
        const std::uint64_t h = mix(digest, 401);
        return Json{{"ref_severity", static_cast<int>(h % 4)},
                    {"pred_severity", static_cast<int>((h >> 3) % 4)}}.dump();
    }
    if (contains(prompt.user, "Original Assessment:")) {
        // Rewrite request: echo the assessment content with a revision stamp so
        // regenerated rounds produce distinct text.
        const auto pos = prompt.user.find("Original Assessment:");
        auto body = prompt.user.substr(pos + std::string("Original Assessment:").size());
        const auto tail = body.find("Enhanced Narrative:");
        if (tail != std::string::npos) body = body.substr(0, tail);
        const auto b = body.find_first_not_of(" \t\r\n");
        const auto e = body.find_last_not_of(" \t\r\n");
        const std::string content =
            b == std::string::npos ? std::string{} : body.substr(b, e - b + 1);
        return content + " (rev " + hex64(digest).substr(0, 8) + ")";
    }
    (void)params;
    return "mock-reply-" + hex64(digest);
}

Completion MockBackend::do_send(const ChatPrompt& prompt, const GenParams& params) {
    total_calls_.fetch_add(1);
    const int now = in_flight_now_.fetch_add(1) + 1;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    if (latency_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(latency_ms_));

    struct Decrement {
        std::atomic<int>& n;
        ~Decrement() { n.fetch_sub(1); }
    } dec{in_flight_now_};

    {
        std::lock_guard<std::mutex> lock(mu_);
        if (fail_budget_ > 0) {
            --fail_budget_;
            throw TransportError("mock transport failure (scripted)");
        }
        if (!script_.empty()) {
            const std::string reply = script_.front();
            script_.pop_front();
            return {reply, {}};
        }
        const auto it = canned_.find(prompt.user);
        if (it != canned_.end()) return {it->second, {}};
    }

    std::uint64_t digest = mix(seed_, fnv1a64(prompt.system + "\x1f" + prompt.user));
    if (params.seed) digest = mix(digest, *params.seed);
    return {derived_reply(prompt, params, digest), {}};
}

// ---------------------------------------------------------------------------
// HttpBackend

HttpBackend::HttpBackend(BackendConfig cfg) : ChatBackend(std::move(cfg)) {}

Json build_request_body(const ChatPrompt& prompt, const GenParams& params,
                        const std::string& model) {
    Json messages = Json::array();
    if (!prompt.system.empty())
        messages.push_back({{"role", "system"}, {"content", prompt.system}});
    for (const auto& [user, assistant] : prompt.few_shot) {
        messages.push_back({{"role", "user"}, {"content", user}});
        messages.push_back({{"role", "assistant"}, {"content", assistant}});
    }
    messages.push_back({{"role", "user"}, {"content", prompt.user}});

    Json body;
    body["model"] = model;
    body["messages"] = messages;
    body["temperature"] = params.temperature;
    body["top_p"] = params.top_p;
    if (params.top_k) body["top_k"] = *params.top_k;
    body["max_tokens"] = params.max_tokens;
    if (params.seed) body["seed"] = *params.seed;
    return body;
}

Completion HttpBackend::do_send(const ChatPrompt& prompt, const GenParams& params) {
    httplib::Client client(config().base_url);
    client.set_connection_timeout(static_cast<time_t>(config().timeout_s), 0);
    client.set_read_timeout(static_cast<time_t>(config().timeout_s), 0);
    httplib::Headers headers;
    if (!config().api_key_env.empty()) {
        if (const char* key = std::getenv(config().api_key_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const Json body = build_request_body(prompt, params, config().model_name);
    auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw TransportError("transport failure contacting " + config().base_url);
    if (res->status < 200 || res->status >= 300)
        throw TransportError("HTTP " + std::to_string(res->status) + " from " + config().base_url);

    Json reply = Json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw GatewayError("malformed JSON in completion response");
    try {
        Completion c;
        c.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        if (reply.contains("usage")) {
            c.usage.prompt_tokens = reply["usage"].value("prompt_tokens", -1);
            c.usage.completion_tokens = reply["usage"].value("completion_tokens", -1);
        }
        return c;
    } catch (const Json::exception& e) {
        throw GatewayError(std::string("unexpected completion shape: ") + e.what());
    }
}

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& cfg) {
    if (cfg.base_url.rfind("mock://", 0) == 0) {
        std::uint64_t seed = 0;
        const auto q = cfg.base_url.find("seed=");
        if (q != std::string::npos) seed = std::strtoull(cfg.base_url.c_str() + q + 5, nullptr, 10);
        return std::make_unique<MockBackend>(cfg, seed);
    }
    return std::make_unique<HttpBackend>(cfg);
}

double backoff_delay_s(int retry_index, double base) {
    return base * std::pow(2.0, retry_index);
}

std::string complete(ChatBackend& backend, const ChatPrompt& prompt, const GenParams& params) {
    const int max_retries = backend.config().max_retries;
    int attempt = 0;
    for (;;) {
        try {
            Completion c = backend.send(prompt, params);
            if (c.text.empty()) throw GatewayError("empty completion from backend");
            return c.text;
        } catch (const TransportError& e) {
            if (attempt >= max_retries)
                throw TransportError(std::string(e.what()) + " (after " +
                                         std::to_string(attempt + 1) + " attempts)",
                                     attempt + 1);
            std::this_thread::sleep_for(std::chrono::duration<double>(
                backoff_delay_s(attempt, backend.config().retry_backoff_s)));
            ++attempt;
        }
    }
}

std::optional<std::string> extract_json_object(const std::string& text) {
    const auto open = text.find('{');
    if (open == std::string::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            --depth;
            if (depth == 0) return text.substr(open, i - open + 1);
        }
    }
    return std::nullopt;
}

namespace {

bool is_int(const Json& v) { return v.is_number_integer() || v.is_number_unsigned(); }

std::optional<std::string> check_judge_verdict(const Json& v) {
    if (!v.is_object()) return "verdict must be a JSON object";
    if (!v.contains("scores") || !v["scores"].is_array() || v["scores"].size() != 5)
        return "scores must be an array of 5 integers";
    for (const auto& s : v["scores"]) {
        if (!is_int(s)) return "scores entries must be integers";
        const int i = s.get<int>();
        if (i < 1 || i > 5) return "scores entries must be in [1,5]";
    }
    if (!v.contains("confidence") || !v["confidence"].is_array() || v["confidence"].size() != 5)
        return "confidence must be an array of 5 numbers";
    for (const auto& c : v["confidence"]) {
        if (!c.is_number()) return "confidence entries must be numbers";
        const double d = c.get<double>();
        if (d < 0.0 || d > 1.0) return "confidence entries must be in [0,1]";
    }
    if (!v.contains("critique")) return "critique is required";
    return std::nullopt;
}

std::optional<std::string> check_presence_severity(const Json& v, const char* key) {
    if (!v.contains(key)) return std::string("missing field ") + key;
    const auto& f = v.at(key);
    if (!is_int(f)) return std::string(key) + " must be an integer";
    const int i = f.get<int>();
    const bool presence = std::string(key).find("presence") != std::string::npos;
    const int hi = presence ? 1 : 3;
    if (i < 0 || i > hi) return std::string(key) + " out of range";
    return std::nullopt;
}

std::optional<std::string> check_symptom_evaluation(const Json& v) {
    static const char* kCats[] = {"Anhedonia", "DepressedMood", "SleepDisturbance",
                                  "FatigueEnergy", "AppetiteChange", "SelfWorthGuilt",
                                  "Concentration", "PsychomotorChange", "SuicidalIdeation",
                                  "SomaticDiscomfort", "AnxietyArousal", "UncontrollableWorry",
                                  "NegativeEvent", "OverallSeverity"};
    if (!v.is_object()) return "evaluation must be a JSON object";
    for (const char* cat : kCats) {
        if (!v.contains(cat) || !v[cat].is_object())
            return std::string("missing category ") + cat;
        for (const char* field : {"ref_presence", "pred_presence", "ref_severity", "pred_severity"})
            if (auto err = check_presence_severity(v[cat], field))
                return std::string(cat) + ": " + *err;
    }
    return std::nullopt;
}

std::optional<std::string> check_severity_pair(const Json& v) {
    if (!v.is_object()) return "severity pair must be a JSON object";
    for (const char* field : {"ref_severity", "pred_severity"}) {
        if (!v.contains(field)) return std::string("missing field ") + field;
        if (!is_int(v[field])) return std::string(field) + " must be an integer";
        const int i = v[field].get<int>();
        if (i < 0 || i > 3) return std::string(field) + " must be in [0,3]";
    }
    if (v.size() != 2) return "no fields beyond ref_severity/pred_severity are allowed";
    return std::nullopt;
}

}  // namespace

std::optional<std::string> validate_schema(const std::string& schema_name, const Json& value) {
    if (schema_name == "judge_verdict") return check_judge_verdict(value);
    if (schema_name == "symptom_evaluation") return check_symptom_evaluation(value);
    if (schema_name == "severity_pair") return check_severity_pair(value);
    throw GatewayError("unknown schema: " + schema_name);
}

Json complete_structured(ChatBackend& backend, const ChatPrompt& prompt,
                         const std::string& schema_name, const GenParams& params) {
    std::vector<std::string> raw;
    ChatPrompt attempt_prompt = prompt;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string text = complete(backend, attempt_prompt, params);
        raw.push_back(text);
        std::string detail;
        if (auto span = extract_json_object(text)) {
            Json parsed = Json::parse(*span, nullptr, false);
            if (!parsed.is_discarded()) {
                auto err = validate_schema(schema_name, parsed);
                if (!err) return parsed;
                detail = *err;
            } else {
                detail = "extracted span is not valid JSON";
            }
        } else {
            detail = "no JSON object found in reply";
        }
        if (attempt == 0) {
            attempt_prompt = prompt;
            attempt_prompt.user += "\n\nYour previous reply was rejected: " + detail +
                                   ". Respond with only the valid JSON object, nothing else.";
        }
    }
    throw SchemaError("structured completion failed schema '" + schema_name + "' twice", raw);
}

}  // namespace lens::gateway
