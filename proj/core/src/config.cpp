#include "lens/config.hpp"

#include <cmath>
#include <cstdlib>

#include "lens/errors.hpp"
#include "lens/hash.hpp"

namespace lens {

namespace {

std::string interpolate_env_string(const std::string& s) {
    std::string out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const auto open = s.find("${", pos);
        if (open == std::string::npos) {
            out += s.substr(pos);
            break;
        }
        const auto close = s.find('}', open + 2);
        if (close == std::string::npos) {
            out += s.substr(pos);
            break;
        }
        out += s.substr(pos, open - pos);
        const std::string name = s.substr(open + 2, close - open - 2);
        if (const char* value = std::getenv(name.c_str())) out += value;
        pos = close + 1;
    }
    return out;
}

ingest::StreamSpec stream_spec_from_json(const Json& j) {
    ingest::StreamSpec spec;
    spec.name = j.at("name").get<std::string>();
    const auto kind = j.value("kind", std::string{"continuous"});
    spec.kind = kind == "aggregate" ? ingest::StreamKind::Aggregate
                                    : ingest::StreamKind::Continuous;
    spec.period_s = j.at("period_s").get<double>();
    spec.expected_len = j.at("expected_len").get<std::size_t>();
    const auto agg = j.value("aggregate", std::string{"mean"});
    spec.aggregate = agg == "sum"   ? ingest::SlotAggregate::Sum
                     : agg == "max" ? ingest::SlotAggregate::Max
                                    : ingest::SlotAggregate::Mean;
    if (j.contains("outlier_bounds") && !j["outlier_bounds"].is_null()) {
        const auto& b = j["outlier_bounds"];
        spec.outlier_bounds = std::make_pair(b.at(0).get<double>(), b.at(1).get<double>());
    }
    spec.validate();
    return spec;
}

}  // namespace

Json interpolate_env(Json value) {
    if (value.is_string()) return interpolate_env_string(value.get<std::string>());
    if (value.is_object())
        for (auto& [key, child] : value.items()) child = interpolate_env(child);
    if (value.is_array())
        for (auto& child : value) child = interpolate_env(child);
    return value;
}

std::string config_fingerprint(const Json& canonical) { return fnv1a64_hex(canonical.dump()); }

RunConfig RunConfig::load(const std::string& path) {
    Json raw;
    try {
        raw = read_json_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return from_json(std::move(raw));
}

RunConfig RunConfig::from_json(Json j) {
    j = interpolate_env(std::move(j));
    RunConfig c;
    try {
        c.config_hash = config_fingerprint(j);
        c.data_dir = j.at("data_dir").get<std::string>();
        c.out_dir = j.at("out_dir").get<std::string>();

        const auto& paths = j.at("paths");
        c.templates_path = paths.at("templates").get<std::string>();
        c.paraphrases_path = paths.at("paraphrases").get<std::string>();
        c.instruction_following_path = paths.value("instruction_following", std::string{});
        c.ema_responses_path = paths.at("ema_responses").get<std::string>();
        c.ema_index_path = paths.at("ema_index").get<std::string>();
        c.audit_log_path = paths.value("audit_log", std::string{});
        c.redact_audit = j.value("redact_audit", true);

        if (j.contains("streams")) {
            for (const auto& s : j["streams"]) c.streams.push_back(stream_spec_from_json(s));
        } else {
            c.streams = ingest::canonical_specs();
        }

        if (j.contains("qc")) {
            const auto& qc = j["qc"];
            c.qc.total_threshold = qc.value("total_threshold", 20);
            c.qc.confidence_threshold = qc.value("confidence_threshold", 0.8);
            c.qc.max_rounds = qc.value("max_rounds", 3);
            c.qc.min_quorum = qc.value("min_quorum", 2);
        }
        c.rewriter = gateway::BackendConfig::from_json(j.at("rewriter"));
        for (const auto& b : j.at("judges")) c.judges.push_back(gateway::BackendConfig::from_json(b));
        c.eval_backend = j.contains("eval_backend")
                             ? gateway::BackendConfig::from_json(j["eval_backend"])
                             : c.rewriter;

        if (j.contains("rewrite_params")) {
            const auto& p = j["rewrite_params"];
            c.rewrite_params.temperature = p.value("temperature", 0.7);
            c.rewrite_params.top_p = p.value("top_p", 0.8);
            if (p.contains("top_k") && !p["top_k"].is_null())
                c.rewrite_params.top_k = p["top_k"].get<int>();
            c.rewrite_params.max_tokens = p.value("max_tokens", 1024);
        } else {
            c.rewrite_params = gateway::baseline_params();
        }

        const auto& split = j.at("split");
        const auto ratios = split.at("ratios");
        for (std::size_t i = 0; i < 3; ++i) c.split_ratios[i] = ratios.at(i).get<double>();
        c.split_seed = split.at("seed").get<std::uint64_t>();

        if (j.contains("mix")) {
            const auto& mix = j["mix"];
            c.mix = qa::MixSpec::from_json(mix.at("weights"));
            c.mix_total = mix.value("total", std::size_t{0});
            c.mix_seed = mix.at("seed").get<std::uint64_t>();
            c.mix_with_replacement = mix.value("with_replacement", true);
        }

        const auto& assembly = j.at("assembly");
        c.items_per_ema = assembly.value("items_per_ema", std::size_t{2});
        c.paraphrase_seed = assembly.at("paraphrase_seed").get<std::uint64_t>();
        // every seed must be spelled out in the file
        c.rewrite_seed = j.at("rewrite_seed").get<std::uint64_t>();

        if (!j.contains("encoder") || !j["encoder"].contains("seed"))
            throw ConfigError("encoder section with an explicit seed is required");
        c.enc = encoder::EncoderConfig::from_json(j["encoder"]);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

void RunConfig::validate() const {
    if (data_dir.empty() || out_dir.empty()) throw ConfigError("data_dir and out_dir are required");
    if (judges.empty()) throw ConfigError("at least one judge backend is required");
    qc.validate();
    enc.validate();
    double sum = 0.0;
    for (const double r : split_ratios) {
        if (r <= 0.0) throw ConfigError("split ratios must be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    if (!mix.weights.empty()) mix.validate();
    if (items_per_ema < 1 || items_per_ema > 13)
        throw ConfigError("items_per_ema must be in 1..13");
    for (const auto& s : streams) s.validate();
}

}  // namespace lens
