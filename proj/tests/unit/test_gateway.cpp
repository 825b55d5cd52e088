#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>
#include <vector>

#include <httplib.h>

#include "lens/gateway.hpp"
#include "lens/jsonl.hpp"

using namespace lens;
using namespace lens::gateway;

namespace {

BackendConfig mock_config(int retries = 3, double backoff = 0.001) {
    BackendConfig cfg;
    cfg.base_url = "mock://test";
    cfg.model_name = "mock";
    cfg.max_retries = retries;
    cfg.retry_backoff_s = backoff;
    cfg.parallelism_limit = 4;
    return cfg;
}

ChatPrompt simple_prompt(const std::string& user) {
    ChatPrompt p;
    p.system = "system";
    p.user = user;
    return p;
}

}  // namespace

TEST_CASE("mock backend is deterministic per (seed, prompt)") {
    MockBackend a(mock_config(), 7);
    MockBackend b(mock_config(), 7);
    MockBackend c(mock_config(), 8);
    const auto prompt = simple_prompt("x");
    const auto params = baseline_params();
    const auto r1 = complete(a, prompt, params);
    const auto r2 = complete(b, prompt, params);
    const auto r3 = complete(c, prompt, params);
    CHECK(r1 == r2);
    CHECK(r1 != r3);
}

TEST_CASE("canned replies win over derived ones") {
    MockBackend backend(mock_config(), 1);
    backend.set_canned("p", "q");
    CHECK(complete(backend, simple_prompt("p"), baseline_params()) == "q");
}

TEST_CASE("retry contract: two failures then success") {
    MockBackend backend(mock_config(3, 0.001), 1);
    backend.fail_next(2);
    const auto reply = complete(backend, simple_prompt("retry me"), baseline_params());
    CHECK_FALSE(reply.empty());
    CHECK(backend.total_calls() == 3);
}

TEST_CASE("retries exhaust with attempt count attached") {
    MockBackend backend(mock_config(2, 0.001), 1);
    backend.fail_next(10);
    try {
        complete(backend, simple_prompt("doomed"), baseline_params());
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.attempts == 3);  // 1 try + 2 retries
        CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
    }
}

TEST_CASE("backoff delays double from the base") {
    CHECK(backoff_delay_s(0, 1.0) == doctest::Approx(1.0));
    CHECK(backoff_delay_s(1, 1.0) == doctest::Approx(2.0));
    CHECK(backoff_delay_s(2, 1.0) == doctest::Approx(4.0));
    CHECK(backoff_delay_s(1, 0.5) == doctest::Approx(1.0));
}

TEST_CASE("empty user prompt is rejected") {
    MockBackend backend(mock_config(), 1);
    CHECK_THROWS_AS(complete(backend, simple_prompt(""), baseline_params()), GatewayError);
}

TEST_CASE("json extraction finds the outermost object in prose") {
    CHECK(extract_json_object("Sure! {\"a\": 1} hope that helps") == "{\"a\": 1}");
    CHECK(extract_json_object("{\"a\": {\"b\": 2}} trailing") == "{\"a\": {\"b\": 2}}");
    CHECK(extract_json_object("nested braces in strings {\"s\": \"}{\"} done") ==
          "{\"s\": \"}{\"}");
    CHECK_FALSE(extract_json_object("no json here"));
    CHECK_FALSE(extract_json_object("unbalanced { \"a\": 1"));
}

TEST_CASE("schema validation: judge_verdict") {
    Json ok{{"scores", {5, 4, 5, 4, 5}},
            {"confidence", {0.9, 0.8, 0.9, 0.95, 1.0}},
            {"critique", "fine"}};
    CHECK_FALSE(validate_schema("judge_verdict", ok));

    Json bad = ok;
    bad["scores"] = {5, 4, 5, 4};
    CHECK(validate_schema("judge_verdict", bad));
    bad = ok;
    bad["scores"] = {5, 4, 5, 4, 6};
    CHECK(validate_schema("judge_verdict", bad));
    bad = ok;
    bad["confidence"][2] = 1.5;
    CHECK(validate_schema("judge_verdict", bad));
    bad = ok;
    bad.erase("critique");
    CHECK(validate_schema("judge_verdict", bad));
}

TEST_CASE("schema validation: severity_pair allows no extras") {
    Json ok{{"ref_severity", 2}, {"pred_severity", 0}};
    CHECK_FALSE(validate_schema("severity_pair", ok));
    Json extra = ok;
    extra["note"] = "hmm";
    CHECK(validate_schema("severity_pair", extra));
    Json range = ok;
    range["ref_severity"] = 4;
    CHECK(validate_schema("severity_pair", range));
}

TEST_CASE("complete_structured parses prose-wrapped json") {
    MockBackend backend(mock_config(), 1);
    backend.set_canned("extract", "Here you go: {\"ref_severity\": 1, \"pred_severity\": 3}");
    const Json parsed =
        complete_structured(backend, simple_prompt("extract"), "severity_pair", judge_params());
    CHECK(parsed["ref_severity"] == 1);
    CHECK(parsed["pred_severity"] == 3);
}

TEST_CASE("complete_structured re-prompts once, then errors with both payloads") {
    MockBackend backend(mock_config(), 1);
    SUBCASE("second attempt rescues the call") {
        backend.push_script("not json at all");
        backend.push_script("{\"ref_severity\": 0, \"pred_severity\": 2}");
        const Json parsed = complete_structured(backend, simple_prompt("fix it"), "severity_pair",
                                                judge_params());
        CHECK(parsed["pred_severity"] == 2);
        CHECK(backend.total_calls() == 2);
    }
    SUBCASE("two bad replies surface a SchemaError carrying the raw texts") {
        backend.push_script("still not json");
        backend.push_script("also broken");
        try {
            complete_structured(backend, simple_prompt("fix it"), "severity_pair", judge_params());
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            REQUIRE(e.raw_attempts.size() == 2);
            CHECK(e.raw_attempts[0] == "still not json");
            CHECK(e.raw_attempts[1] == "also broken");
        }
    }
}

TEST_CASE("in-flight requests never exceed the parallelism limit") {
    auto cfg = mock_config();
    cfg.parallelism_limit = 2;
    MockBackend backend(cfg, 1);
    backend.set_latency_ms(5);

    std::vector<std::thread> threads;
    for (int i = 0; i < 12; ++i) {
        threads.emplace_back([&backend, i] {
            complete(backend, simple_prompt("concurrent " + std::to_string(i)),
                     baseline_params());
        });
    }
    for (auto& t : threads) t.join();
    CHECK(backend.total_calls() == 12);
    CHECK(backend.max_in_flight() <= 2);
}

TEST_CASE("request body follows the chat-completions wire shape") {
    ChatPrompt prompt;
    prompt.system = "sys";
    prompt.user = "final";
    prompt.few_shot = {{"q1", "a1"}, {"q2", "a2"}};
    GenParams params = baseline_params();
    params.seed = 99;
    const Json body = build_request_body(prompt, params, "test-model");
    CHECK(body["model"] == "test-model");
    REQUIRE(body["messages"].size() == 6);  // system + 2 exemplar pairs + user
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][1]["content"] == "q1");
    CHECK(body["messages"][2]["role"] == "assistant");
    CHECK(body["messages"][5]["content"] == "final");
    CHECK(body["temperature"] == doctest::Approx(0.7));
    CHECK(body["top_p"] == doctest::Approx(0.8));
    CHECK(body["top_k"] == 20);
    CHECK(body["seed"] == 99);
}

TEST_CASE("judge params run greedy") {
    const auto p = judge_params();
    CHECK(p.temperature == 0.0);
    CHECK_FALSE(p.top_k.has_value());
}

TEST_CASE("generation parameter invariants are enforced on send") {
    MockBackend backend(mock_config(), 1);
    GenParams params = baseline_params();
    params.top_p = 0.0;
    CHECK_THROWS_AS(complete(backend, simple_prompt("x"), params), GatewayError);
    params = baseline_params();
    params.temperature = -0.5;
    CHECK_THROWS_AS(complete(backend, simple_prompt("x"), params), GatewayError);
    params = baseline_params();
    params.top_k = 0;
    CHECK_THROWS_AS(complete(backend, simple_prompt("x"), params), GatewayError);
    params = baseline_params();
    params.max_tokens = 0;
    CHECK_THROWS_AS(complete(backend, simple_prompt("x"), params), GatewayError);
}

TEST_CASE("http backend against a local server: 500,500,200 then success") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions", [&hits](const httplib::Request& req,
                                                httplib::Response& res) {
        const int n = ++hits;
        if (n <= 2) {
            res.status = 500;
            res.set_content("overloaded", "text/plain");
            return;
        }
        const Json body = Json::parse(req.body);
        const std::string user = body["messages"].back()["content"];
        const Json reply{{"choices", Json::array({Json{
                             {"message", Json{{"role", "assistant"},
                                              {"content", "echo: " + user}}}}})},
                         {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 3}}}};
        res.set_content(reply.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    BackendConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.model_name = "served";
    cfg.max_retries = 3;
    cfg.retry_backoff_s = 0.001;
    HttpBackend backend(cfg);
    const auto reply = complete(backend, simple_prompt("ping"), baseline_params());
    CHECK(reply == "echo: ping");
    CHECK(hits.load() == 3);

    server.stop();
    server_thread.join();
}

TEST_CASE("audit log redacts prompts by default") {
    const auto path = std::filesystem::temp_directory_path() / "lens_audit_test.jsonl";
    std::filesystem::remove(path);
    {
        MockBackend backend(mock_config(), 1);
        backend.set_audit(std::make_shared<AuditLog>(path.string(), true));
        complete(backend, simple_prompt("secret participant data"), baseline_params());
    }
    const auto rows = read_jsonl(path.string());
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].contains("prompt_hash"));
    CHECK(rows[0].contains("latency_ms"));
    CHECK_FALSE(rows[0].contains("prompt"));
    std::filesystem::remove(path);
}
