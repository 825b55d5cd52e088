#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lens/config.hpp"
#include "lens/jsonl.hpp"

namespace lens::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

// Per-command run record. The hash covers only deterministic fields, so two
// identical runs produce equal manifest hashes even though wall time differs.
struct RunManifest {
    std::string command;
    std::string config_hash;
    std::string tool_version = kToolVersion;
    std::map<std::string, std::int64_t> counts;
    double wall_time_s = 0.0;
    std::string manifest_hash;

    Json to_json() const;
    void finalize();  // computes manifest_hash
    void write(const std::string& out_dir) const;
};

// Seeded synthetic study data: sinusoid-plus-noise streams, lock transitions,
// conversation events, daily sleep, and EMA responses for `participants`
// synthetic ids. Writes raw CSVs, the EMA index/responses, and a ready
// config.json wired to mock backends.
RunManifest generate_fixture(const std::string& dir, std::size_t participants,
                             std::size_t emas_per_participant, std::uint64_t seed,
                             const std::string& data_dir_for_config = {});

RunManifest cmd_ingest(const RunConfig& config);

// Optional, online: asks the rewriter backend for ten fresh paraphrases per
// question key and writes a bank file. The shipped bank keeps offline runs
// reproducible; this exists for regenerating it against a live model.
RunManifest cmd_paraphrase_gen(const RunConfig& config, const std::string& out_file);
RunManifest cmd_synthesize(const RunConfig& config);
RunManifest cmd_judge(const RunConfig& config);
RunManifest cmd_assemble(const RunConfig& config);
RunManifest cmd_encode(const RunConfig& config);
RunManifest cmd_evaluate(const RunConfig& config, const std::string& refs_path,
                         const std::string& preds_path);
RunManifest cmd_tokens(const RunConfig& config);

// ingest -> synthesize -> judge -> assemble -> encode -> tokens.
std::map<std::string, RunManifest> run_all(const RunConfig& config);

}  // namespace lens::pipeline
