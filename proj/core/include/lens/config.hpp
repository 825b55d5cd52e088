#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lens/gateway.hpp"
#include "lens/judge.hpp"
#include "lens/jsonl.hpp"
#include "lens/narrative.hpp"
#include "lens/patch_encoder.hpp"
#include "lens/qa_assembly.hpp"
#include "lens/sensor_ingest.hpp"

namespace lens {

// Single JSON config driving every pipeline stage. String values may carry
// ${ENV_VAR} references, resolved at load time so secrets stay out of the
// file itself.
struct RunConfig {
    std::string data_dir;  // raw fixture inputs: <participant>/<stream>.csv
    std::string out_dir;

    std::string templates_path;
    std::string paraphrases_path;
    std::string instruction_following_path;
    std::string ema_responses_path;  // JSONL of EmaResponse rows
    std::string ema_index_path;      // CSV participant_id,ema_id,completed_at
    std::string audit_log_path;      // empty disables auditing
    bool redact_audit = true;

    std::vector<ingest::StreamSpec> streams;

    judge::QcConfig qc;
    gateway::BackendConfig rewriter;
    std::vector<gateway::BackendConfig> judges;
    gateway::BackendConfig eval_backend;
    gateway::GenParams rewrite_params;

    std::array<double, 3> split_ratios{0.70, 0.15, 0.15};
    std::uint64_t split_seed = 0;

    qa::MixSpec mix;
    std::size_t mix_total = 0;  // 0 disables the mixed training file
    std::uint64_t mix_seed = 0;
    bool mix_with_replacement = true;

    std::size_t items_per_ema = 2;
    std::uint64_t paraphrase_seed = 0;
    std::uint64_t rewrite_seed = 0;

    encoder::EncoderConfig enc;

    std::string config_hash;  // of the canonical JSON, set on load

    static RunConfig load(const std::string& path);
    static RunConfig from_json(Json j);  // env-interpolated, validated
    void validate() const;
};

// Replaces every ${NAME} in string leaves with the environment value
// (empty string when unset).
Json interpolate_env(Json value);

std::string config_fingerprint(const Json& canonical);

}  // namespace lens
