#include "lens/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lens/errors.hpp"
#include "lens/hash.hpp"
#include "lens/metrics.hpp"
#include "lens/rng.hpp"

namespace lens::pipeline {

namespace fs = std::filesystem;

Json RunManifest::to_json() const {
    Json counts_json = Json::object();
    for (const auto& [key, value] : counts) counts_json[key] = value;
    return Json{{"command", command},
                {"config_hash", config_hash},
                {"tool_version", tool_version},
                {"counts", counts_json},
                {"wall_time_s", wall_time_s},
                {"manifest_hash", manifest_hash}};
}

void RunManifest::finalize() {
    Json stable = to_json();
    stable.erase("wall_time_s");
    stable.erase("manifest_hash");
    manifest_hash = fnv1a64_hex(stable.dump());
}

void RunManifest::write(const std::string& out_dir) const {
    fs::create_directories(out_dir);
    write_json_file((fs::path(out_dir) / ("manifest_" + command + ".json")).string(), to_json());
}

namespace {

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double elapsed_s() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

struct EmaIndexRow {
    std::string participant_id;
    std::string ema_id;
    double completed_at;
};

std::vector<EmaIndexRow> read_ema_index(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<EmaIndexRow> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.rfind("participant_id", 0) == 0) continue;
        }
        std::stringstream ss(line);
        EmaIndexRow row;
        std::string field;
        if (!std::getline(ss, row.participant_id, ',')) continue;
        if (!std::getline(ss, row.ema_id, ',')) continue;
        if (!std::getline(ss, field, ',')) continue;
        row.completed_at = std::stod(field);
        rows.push_back(row);
    }
    if (rows.empty()) throw DataError(path + ": no assessments listed");
    std::sort(rows.begin(), rows.end(),
              [](const EmaIndexRow& a, const EmaIndexRow& b) { return a.ema_id < b.ema_id; });
    return rows;
}

// raw per-participant stream data loaded once
struct ParticipantStreams {
    std::map<std::string, std::vector<ingest::RawSample>> continuous;
    std::vector<ingest::LockEvent> lock_events;
    std::vector<ingest::ConversationEvent> conversation;
    std::vector<ingest::RawSample> sleep;  // daily (timestamp, hours)
    std::int64_t skipped = 0;
    std::int64_t outliers_removed = 0;
};

ParticipantStreams load_participant(const fs::path& dir,
                                    const std::vector<ingest::StreamSpec>& specs) {
    ParticipantStreams data;
    for (const auto& spec : specs) {
        if (spec.name == "phone_lock") continue;  // handled as transitions below
        auto parsed = ingest::parse_stream_file((dir / (spec.name + ".csv")).string(), spec);
        data.skipped += static_cast<std::int64_t>(parsed.skipped);
        if (spec.outlier_bounds) {
            auto filtered = ingest::filter_outliers(parsed.samples, *spec.outlier_bounds);
            data.outliers_removed += static_cast<std::int64_t>(filtered.removed);
            data.continuous[spec.name] = std::move(filtered.samples);
        } else {
            data.continuous[spec.name] = std::move(parsed.samples);
        }
    }
    {
        ingest::StreamSpec lock_spec = ingest::spec_by_name("phone_lock");
        auto parsed = ingest::parse_stream_file((dir / "phone_lock.csv").string(), lock_spec);
        data.skipped += static_cast<std::int64_t>(parsed.skipped);
        for (const auto& s : parsed.samples)
            data.lock_events.push_back(
                {s.timestamp, s.value > 0.5 ? ingest::LockState::Unlocked : ingest::LockState::Locked});
    }
    {
        ingest::StreamSpec convo_spec{"conversation", ingest::StreamKind::Aggregate, 60.0, 240};
        auto parsed = ingest::parse_stream_file((dir / "conversation.csv").string(), convo_spec);
        data.skipped += static_cast<std::int64_t>(parsed.skipped);
        for (const auto& s : parsed.samples) data.conversation.push_back({s.timestamp, s.value});
    }
    {
        ingest::StreamSpec sleep_spec{"sleep", ingest::StreamKind::Aggregate, 86400.0, 1};
        auto parsed = ingest::parse_stream_file((dir / "sleep.csv").string(), sleep_spec);
        data.skipped += static_cast<std::int64_t>(parsed.skipped);
        data.sleep = std::move(parsed.samples);
    }
    return data;
}

double sleep_hours_at(const std::vector<ingest::RawSample>& sleep, double end_time) {
    double hours = 0.0;
    for (const auto& s : sleep) {
        if (s.timestamp <= end_time) hours = s.value;
        else break;
    }
    return hours;
}

std::string windows_path(const RunConfig& c) {
    return (fs::path(c.out_dir) / "windows.jsonl").string();
}
std::string template_narratives_path(const RunConfig& c) {
    return (fs::path(c.out_dir) / "narratives_template.jsonl").string();
}
std::string enhanced_narratives_path(const RunConfig& c) {
    return (fs::path(c.out_dir) / "narratives_enhanced.jsonl").string();
}
std::string rejected_narratives_path(const RunConfig& c) {
    return (fs::path(c.out_dir) / "narratives_rejected.jsonl").string();
}

std::shared_ptr<gateway::AuditLog> audit_for(const RunConfig& c) {
    if (c.audit_log_path.empty()) return nullptr;
    return std::make_shared<gateway::AuditLog>(c.audit_log_path, c.redact_audit);
}

// The multimodal prompt: normalization metadata ahead of each stream's
// placeholder, the two window scalars, then the instruction.
std::string build_encode_prompt(const ingest::SensorWindow& window,
                                const std::map<std::string, encoder::NormStats>& stats,
                                const std::string& question) {
    std::string prompt;
    for (const auto& [name, series] : window.streams) {
        prompt += encoder::format_metadata(stats.at(name), name);
        prompt += " <ts></ts>\n";
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "Sleep duration (hours): %.1f\n", window.sleep_hours);
    prompt += buf;
    std::snprintf(buf, sizeof(buf), "Conversation length (seconds): %.1f\n", window.conversation_s);
    prompt += buf;
    prompt += question;
    return prompt;
}

// Splits the prompt on whitespace; placeholder markers become insertion
// positions instead of tokens.
void tokenize_prompt_layout(const std::string& prompt, std::size_t& text_len,
                            std::vector<std::size_t>& placeholder_positions) {
    text_len = 0;
    placeholder_positions.clear();
    std::stringstream ss(prompt);
    std::string token;
    while (ss >> token) {
        if (token == "<ts></ts>") {
            placeholder_positions.push_back(text_len);
        } else {
            ++text_len;
        }
    }
}

}  // namespace

RunManifest cmd_ingest(const RunConfig& config) {
    Timer timer;
    fs::create_directories(config.out_dir);
    const auto index = read_ema_index(config.ema_index_path);

    std::map<std::string, ParticipantStreams> loaded;
    std::vector<Json> rows;
    std::int64_t skipped = 0, outliers = 0;

    for (const auto& ema : index) {
        auto it = loaded.find(ema.participant_id);
        if (it == loaded.end()) {
            auto data = load_participant(fs::path(config.data_dir) / ema.participant_id,
                                         config.streams);
            skipped += data.skipped;
            outliers += data.outliers_removed;
            it = loaded.emplace(ema.participant_id, std::move(data)).first;
        }
        const auto& data = it->second;

        ingest::SensorWindow window;
        window.ema_id = ema.ema_id;
        window.participant_id = ema.participant_id;
        window.end_time = ema.completed_at;
        for (const auto& spec : config.streams) {
            if (spec.name == "phone_lock") {
                window.streams[spec.name] =
                    ingest::encode_lock_state(data.lock_events, ema.completed_at, spec);
            } else {
                const auto in_window =
                    ingest::extract_window(data.continuous.at(spec.name), ema.completed_at);
                window.streams[spec.name] = ingest::resample(in_window, spec, ema.completed_at);
            }
        }
        window.conversation_s = ingest::sum_conversation(data.conversation, ema.completed_at);
        window.sleep_hours = sleep_hours_at(data.sleep, ema.completed_at);
        rows.push_back(ingest::to_json(window));
    }
    write_jsonl(windows_path(config), rows);

    RunManifest manifest;
    manifest.command = "ingest";
    manifest.config_hash = config.config_hash;
    manifest.counts["windows"] = static_cast<std::int64_t>(rows.size());
    manifest.counts["participants"] = static_cast<std::int64_t>(loaded.size());
    manifest.counts["rows_skipped"] = skipped;
    manifest.counts["outliers_removed"] = outliers;
    manifest.wall_time_s = timer.elapsed_s();
    manifest.finalize();
    manifest.write(config.out_dir);
    return manifest;
}

RunManifest cmd_synthesize(const RunConfig& config) {
    Timer timer;
    fs::create_directories(config.out_dir);
    const auto templates = narrative::TemplateSet::load(config.templates_path);

    auto rows = read_jsonl(config.ema_responses_path);
    std::vector<narrative::EmaResponse> emas;
    for (const auto& row : rows) emas.push_back(narrative::EmaResponse::from_json(row));
    std::sort(emas.begin(), emas.end(),
              [](const auto& a, const auto& b) { return a.ema_id < b.ema_id; });

    std::vector<Json> out;
    for (const auto& ema : emas) {
        std::vector<narrative::Narrative> items;
        for (int c = 1; c <= 13; ++c)
            items.push_back(narrative::render_item_narrative(c, ema, templates));
        const auto fragment = narrative::render_negative_event(ema, templates);
        const auto severity = narrative::classify_overall_severity(ema);
        const auto summary = narrative::render_summary(items, fragment, severity, templates);
        for (const auto& item : items) out.push_back(item.to_json());
        out.push_back(summary.to_json());
    }
    write_jsonl(template_narratives_path(config), out);

    RunManifest manifest;
    manifest.command = "synthesize";
    manifest.config_hash = config.config_hash;
    manifest.counts["emas"] = static_cast<std::int64_t>(emas.size());
    manifest.counts["item_narratives"] = static_cast<std::int64_t>(emas.size() * 13);
    manifest.counts["summary_narratives"] = static_cast<std::int64_t>(emas.size());
    manifest.wall_time_s = timer.elapsed_s();
    manifest.finalize();
    manifest.write(config.out_dir);
    return manifest;
}

RunManifest cmd_judge(const RunConfig& config) {
    Timer timer;
    const auto audit = audit_for(config);
    auto rewriter = gateway::make_backend(config.rewriter);
    if (audit) rewriter->set_audit(audit);
    std::vector<std::unique_ptr<gateway::ChatBackend>> judge_backends;
    std::vector<gateway::ChatBackend*> judge_ptrs;
    for (const auto& cfg : config.judges) {
        judge_backends.push_back(gateway::make_backend(cfg));
        if (audit) judge_backends.back()->set_audit(audit);
        judge_ptrs.push_back(judge_backends.back().get());
    }

    std::vector<Json> accepted_rows, rejected_rows;
    std::int64_t rounds_total = 0;
    for_each_jsonl(template_narratives_path(config), [&](const Json& row) {
        const auto tmpl = narrative::Narrative::from_json(row);
        const std::uint64_t seed = mix64(
            config.rewrite_seed,
            fnv1a64(tmpl.ema_id + "|" + narrative::to_string(tmpl.kind) + "|" +
                    std::to_string(tmpl.category.value_or(0))));
        const auto outcome = judge::refine_loop(tmpl, config.qc, *rewriter, judge_ptrs,
                                                config.rewrite_params, seed);
        rounds_total += outcome.rounds;
        (outcome.accepted ? accepted_rows : rejected_rows).push_back(outcome.narrative.to_json());
    });
    write_jsonl(enhanced_narratives_path(config), accepted_rows);
    write_jsonl(rejected_narratives_path(config), rejected_rows);

    RunManifest manifest;
    manifest.command = "judge";
    manifest.config_hash = config.config_hash;
    manifest.counts["accepted"] = static_cast<std::int64_t>(accepted_rows.size());
    manifest.counts["rejected"] = static_cast<std::int64_t>(rejected_rows.size());
    manifest.counts["rounds_total"] = rounds_total;
    manifest.wall_time_s = timer.elapsed_s();
    manifest.finalize();
    manifest.write(config.out_dir);
    return manifest;
}

RunManifest cmd_paraphrase_gen(const RunConfig& config, const std::string& out_file_arg) {
    Timer timer;
    fs::create_directories(config.out_dir);
    const std::string out_file =
        out_file_arg.empty() ? (fs::path(config.out_dir) / "paraphrases_generated.json").string()
                             : out_file_arg;
    auto backend = gateway::make_backend(config.rewriter);
    const auto audit = audit_for(config);
    if (audit) backend->set_audit(audit);

    const auto ask = [&backend](const std::string& question) {
        gateway::ChatPrompt prompt;
        prompt.system =
            "You rewrite clinical assessment questions. Produce exactly ten semantically "
            "equivalent but lexically distinct phrasings of the question you are given. "
            "Respond with only a JSON object of the form {\"variants\": [\"...\", ...]} "
            "holding ten strings.";
        prompt.user = question;
        gateway::GenParams params = gateway::baseline_params();
        params.seed = fnv1a64(question);
        const auto text = gateway::complete(*backend, prompt, params);
        const auto span = gateway::extract_json_object(text);
        if (!span) throw GatewayError("paraphrase reply carried no JSON object");
        const Json parsed = Json::parse(*span, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("variants") ||
            !parsed["variants"].is_array())
            throw GatewayError("paraphrase reply missing a variants array");
        std::vector<std::string> variants;
        for (const auto& v : parsed["variants"]) variants.push_back(v.get<std::string>());
        std::set<std::string> distinct(variants.begin(), variants.end());
        if (distinct.size() != 10)
            throw GatewayError("backend produced " + std::to_string(distinct.size()) +
                               " distinct variants, need 10");
        return variants;
    };

    Json bank = Json::object();
    for (const auto& category : narrative::category_roster()) {
        if (category.index == 11 || category.index == 14) continue;  // no QA bank for these
        bank["category_" + std::to_string(category.index)] = ask(category.question_text);
    }
    bank["category_11"] = ask(
        "In the past 4 hours, how much did the user stay interested, energetic, and able to "
        "focus?");
    bank["summary"] = ask(narrative::overall_summary_prompt());
    write_json_file(out_file, bank);

    RunManifest manifest;
    manifest.command = "paraphrase-gen";
    manifest.config_hash = config.config_hash;
    manifest.counts["keys"] = static_cast<std::int64_t>(bank.size());
    manifest.wall_time_s = timer.elapsed_s();
    manifest.finalize();
    manifest.write(config.out_dir);
    return manifest;
}

namespace {

std::string alignment_answer(const std::string& stream, const std::vector<double>& values) {
    double lo = values.front(), hi = values.front(), sum = 0.0;
    for (const double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
    }
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "The %s series of length %zu has mean %.1f, minimum %.1f, and maximum %.1f.",
                  stream.c_str(), values.size(), sum / static_cast<double>(values.size()), lo, hi);
    return buf;
}

}  // namespace

RunManifest cmd_assemble(const RunConfig& config) {
    Timer timer;
    const auto bank = qa::ParaphraseBank::load(config.paraphrases_path);

    std::map<std::string, narrative::EmaResponse> emas;
    for (const auto& row : read_jsonl(config.ema_responses_path)) {
        auto ema = narrative::EmaResponse::from_json(row);
        emas.emplace(ema.ema_id, std::move(ema));
    }

    // accepted narratives keyed by assessment
    std::map<std::string, std::map<int, narrative::Narrative>> items_by_ema;
    std::map<std::string, narrative::Narrative> summary_by_ema;
    for_each_jsonl(enhanced_narratives_path(config), [&](const Json& row) {
        auto n = narrative::Narrative::from_json(row);
        if (n.kind == narrative::Kind::Item) {
            items_by_ema[n.ema_id][n.category.value_or(0)] = std::move(n);
        } else {
            summary_by_ema[n.ema_id] = std::move(n);
        }
    });

    std::vector<std::string> participant_ids;
    for (const auto& [ema_id, ema] : emas) participant_ids.push_back(ema.participant_id);
    const auto splits = qa::split_participants(participant_ids, config.split_ratios,
                                               config.split_seed);

    std::vector<qa::QaPair> item_pairs, summary_pairs;
    std::int64_t without_narratives = 0;
    for (const auto& [ema_id, ema] : emas) {
        const auto split = splits.of(ema.participant_id);
        Rng rng(mix64(config.paraphrase_seed, fnv1a64(ema_id)));
        const auto items_it = items_by_ema.find(ema_id);
        if (items_it != items_by_ema.end()) {
            auto pairs = qa::build_item_qa(ema, ema_id, items_it->second, bank, rng,
                                           config.items_per_ema);
            for (auto& p : pairs) {
                p.split = split;
                item_pairs.push_back(std::move(p));
            }
        } else {
            ++without_narratives;
        }
        const auto summary_it = summary_by_ema.find(ema_id);
        if (summary_it != summary_by_ema.end()) {
            auto pair = qa::build_summary_qa(ema, ema_id, summary_it->second, bank, rng);
            pair.split = split;
            summary_pairs.push_back(std::move(pair));
        }
    }

    // instruction-following pool (train split)
    std::vector<qa::QaPair> if_pairs;
    if (!config.instruction_following_path.empty()) {
        for (const auto& row : read_jsonl(config.instruction_following_path)) {
            qa::QaPair p = qa::QaPair::from_json(row);
            p.split = qa::Split::Train;
            if_pairs.push_back(std::move(p));
        }
    }

    // variable-length alignment pool from the training windows
    std::vector<qa::QaPair> alignment_pairs;
    {
        static const char* kAlignStreams[] = {"heart_rate", "steps", "stress", "zcr"};
        std::size_t stream_cycle = 0;
        for_each_jsonl(windows_path(config), [&](const Json& row) {
            const auto window = ingest::window_from_json(row);
            if (splits.of(window.participant_id) != qa::Split::Train) return;
            Rng rng(mix64(config.paraphrase_seed ^ 0x5c5c5c5cull, fnv1a64(window.ema_id)));
            for (int i = 0; i < 2; ++i) {
                const std::string stream = kAlignStreams[stream_cycle++ % 4];
                const auto& values = window.streams.at(stream).values;
                const auto len = std::min<std::size_t>(
                    static_cast<std::size_t>(qa::sample_random_length(rng)), values.size());
                std::vector<double> tail(values.end() - static_cast<long>(len), values.end());
                qa::QaPair p;
                p.kind = qa::QaKind::AlignmentRandom;
                p.id = window.ema_id + ":align:" + std::to_string(i);
                p.ema_id = window.ema_id;
                p.window_ref = window.ema_id;
                p.split = qa::Split::Train;
                p.question = "Over the most recent " + std::to_string(len) +
                             " readings, describe the overall level of the " + stream + " signal.";
                p.answer = alignment_answer(stream, tail);
                alignment_pairs.push_back(std::move(p));
            }
        });
    }

    // split files: item + summary pairs only, sorted by id
    std::map<qa::Split, std::vector<qa::QaPair>> by_split;
    for (const auto& p : item_pairs) by_split[p.split].push_back(p);
    for (const auto& p : summary_pairs) by_split[p.split].push_back(p);
    std::set<std::string> seen_ids;
    for (auto& [split, pairs] : by_split) {
        std::sort(pairs.begin(), pairs.end(),
                  [](const qa::QaPair& a, const qa::QaPair& b) { return a.id < b.id; });
        std::vector<Json> rows;
        for (const auto& p : pairs) {
            if (!seen_ids.insert(p.id).second) throw DataError("duplicate qa pair id: " + p.id);
            if (splits.of(emas.at(p.ema_id).participant_id) != split)
                throw DataError("split leakage detected for " + p.id);
            rows.push_back(p.to_json());
        }
        write_jsonl((fs::path(config.out_dir) / ("qa_" + std::string(qa::to_string(split)) + ".jsonl"))
                        .string(),
                    rows);
    }

    // mixed training file
    std::size_t mixed_count = 0;
    if (config.mix_total > 0 && !config.mix.weights.empty()) {
        std::map<std::string, std::vector<qa::QaPair>> sources;
        for (const auto& p : item_pairs)
            if (p.split == qa::Split::Train) sources["item"].push_back(p);
        for (const auto& p : summary_pairs)
            if (p.split == qa::Split::Train) sources["summary"].push_back(p);
        sources["instruction_following"] = if_pairs;
        sources["alignment_random"] = alignment_pairs;
        auto mixed = qa::mix_datasets(sources, config.mix, config.mix_total, config.mix_seed,
                                      config.mix_with_replacement);
        std::vector<Json> rows;
        for (const auto& p : mixed) rows.push_back(p.to_json());
        write_jsonl((fs::path(config.out_dir) / "qa_train_mixed.jsonl").string(), rows);
        mixed_count = mixed.size();
    }

    // dataset manifest: seeds, ratios, counts, split sizes
    const auto sizes = splits.sizes();
    Json dataset_manifest;
    dataset_manifest["config_hash"] = config.config_hash;
    dataset_manifest["split_seed"] = config.split_seed;
    dataset_manifest["paraphrase_seed"] = config.paraphrase_seed;
    dataset_manifest["mix_seed"] = config.mix_seed;
    dataset_manifest["ratios"] = config.split_ratios;
    dataset_manifest["participants"] = {{"train", sizes[0]}, {"val", sizes[1]}, {"test", sizes[2]}};
    dataset_manifest["pairs"] = {{"item", item_pairs.size()},
                                 {"summary", summary_pairs.size()},
                                 {"instruction_following", if_pairs.size()},
                                 {"alignment_random", alignment_pairs.size()},
                                 {"train_mixed", mixed_count}};
    write_json_file((fs::path(config.out_dir) / "dataset_manifest.json").string(), dataset_manifest);

    RunManifest manifest;
    manifest.command = "assemble";
    manifest.config_hash = config.config_hash;
    manifest.counts["item_pairs"] = static_cast<std::int64_t>(item_pairs.size());
    manifest.counts["summary_pairs"] = static_cast<std::int64_t>(summary_pairs.size());
    manifest.counts["instruction_following"] = static_cast<std::int64_t>(if_pairs.size());
    manifest.counts["alignment_random"] = static_cast<std::int64_t>(alignment_pairs.size());
    manifest.counts["train_mixed"] = static_cast<std::int64_t>(mixed_count);
    manifest.counts["emas_without_narratives"] = without_narratives;
    manifest.wall_time_s = timer.elapsed_s();
    manifest.finalize();
    manifest.write(config.out_dir);
    return manifest;
}

RunManifest cmd_encode(const RunConfig& config) {
    Timer timer;
    fs::create_directories(config.out_dir);
    const auto& enc = config.enc;

    // positional code tables: one shared table, or one per stream when the
    // flag asks for it
    const encoder::PositionalTable shared(enc.d_p, enc.seed);
    std::map<std::string, encoder::PositionalTable> per_stream;
    if (enc.per_stream_positional) {
        for (const auto& spec : config.streams)
            per_stream.emplace(spec.name,
                               encoder::PositionalTable(enc.d_p, mix64(enc.seed, fnv1a64(spec.name))));
    }
    const auto table_for = [&](const std::string& name) -> const encoder::PositionalTable& {
        if (!enc.per_stream_positional) return shared;
        return per_stream.at(name);
    };

    // projection weights persist beside the outputs; seeded init when absent
    const auto weights_file = (fs::path(config.out_dir) / "encoder_weights.bin").string();
    encoder::MlpWeights weights;
    if (fs::exists(weights_file)) {
        weights = encoder::MlpWeights::load(weights_file);
        if (weights.dims != enc.layer_dims())
            throw DataError(weights_file + ": dims do not match the configured encoder");
    } else {
        weights = encoder::MlpWeights::seeded(enc.layer_dims(), mix64(enc.seed, 0xabcdef));
        weights.save(weights_file);
    }

    std::vector<Json> rows;
    std::int64_t patch_total = 0;
    for_each_jsonl(windows_path(config), [&](const Json& row) {
        const auto window = ingest::window_from_json(row);

        std::map<std::string, encoder::NormStats> stats;
        std::map<std::string, encoder::PatchSequence> patches;
        for (const auto& [name, series] : window.streams) {
            auto [normed, s] = encoder::normalize(series.values);
            stats[name] = s;
            patches[name] = encoder::patchify(normed, enc, table_for(name));
        }

        const std::string prompt =
            build_encode_prompt(window, stats, narrative::overall_summary_prompt());
        std::size_t text_len = 0;
        std::vector<std::size_t> placeholder_positions;
        tokenize_prompt_layout(prompt, text_len, placeholder_positions);

        std::vector<std::size_t> text_indices(text_len);
        for (std::size_t i = 0; i < text_len; ++i) text_indices[i] = i;
        std::vector<std::size_t> patch_counts;
        for (const auto& [name, seq] : patches) patch_counts.push_back(seq.count());
        const auto mm = encoder::splice(text_indices, patch_counts, placeholder_positions);

        const auto budget = encoder::count_tokens(window, prompt, {}, enc.k);
        patch_total += static_cast<std::int64_t>(budget.patch_tokens);

        Json out;
        out["ema_id"] = window.ema_id;
        Json stream_info = Json::object();
        for (const auto& [name, seq] : patches) {
            // one projected patch per stream as a numeric smoke signal
            const auto z = encoder::mlp_forward(seq.patches.front(), weights);
            double l2 = 0.0;
            for (const double v : z) l2 += v * v;
            stream_info[name] = {{"patches", seq.count()},
                                 {"pad_len", seq.pad_len},
                                 {"metadata", encoder::format_metadata(stats[name], name)},
                                 {"z0_l2", std::sqrt(l2)}};
        }
        out["streams"] = stream_info;
        out["layout"] = {{"text_len", mm.text_len},
                         {"patch_len", mm.patch_len},
                         {"total_len", mm.size()}};
        out["budget"] = budget.to_json();
        rows.push_back(out);
    });
    write_jsonl((fs::path(config.out_dir) / "encoded.jsonl").string(), rows);

    RunManifest manifest;
    manifest.command = "encode";
    manifest.config_hash = config.config_hash;
    manifest.counts["windows"] = static_cast<std::int64_t>(rows.size());
    manifest.counts["patch_tokens_total"] = patch_total;
    manifest.wall_time_s = timer.elapsed_s();
    manifest.finalize();
    manifest.write(config.out_dir);
    return manifest;
}

RunManifest cmd_tokens(const RunConfig& config) {
    Timer timer;
    std::int64_t n = 0;
    std::int64_t lens_text = 0, lens_patch = 0, baseline_tokens = 0;
    std::vector<Json> rows;
    for_each_jsonl(windows_path(config), [&](const Json& row) {
        const auto window = ingest::window_from_json(row);
        std::map<std::string, encoder::NormStats> stats;
        for (const auto& [name, series] : window.streams)
            stats[name] = encoder::normalize(series.values).second;
        const std::string prompt =
            build_encode_prompt(window, stats, narrative::overall_summary_prompt());
        const auto budget = encoder::count_tokens(window, prompt, {}, config.enc.k);

        const auto baseline = qa::build_text_baseline_prompt(window, std::nullopt);
        const auto serialized = encoder::whitespace_token_count(baseline.system) +
                                encoder::whitespace_token_count(baseline.user);

        rows.push_back(Json{{"ema_id", window.ema_id},
                            {"patch_tokens", budget.patch_tokens},
                            {"text_tokens", budget.text_tokens},
                            {"total", budget.total},
                            {"text_serialized_total", serialized}});
        lens_text += static_cast<std::int64_t>(budget.text_tokens);
        lens_patch += static_cast<std::int64_t>(budget.patch_tokens);
        baseline_tokens += static_cast<std::int64_t>(serialized);
        ++n;
    });
    if (n == 0) throw DataError("no windows to account; run ingest first");

    Json table;
    table["n_windows"] = n;
    table["patch_based"] = {{"mean_patch_tokens", static_cast<double>(lens_patch) / static_cast<double>(n)},
                            {"mean_text_tokens", static_cast<double>(lens_text) / static_cast<double>(n)},
                            {"mean_total", static_cast<double>(lens_patch + lens_text) / static_cast<double>(n)}};
    table["text_serialized"] = {
        {"mean_total", static_cast<double>(baseline_tokens) / static_cast<double>(n)}};
    table["per_window"] = rows;
    write_json_file((fs::path(config.out_dir) / "tokens.json").string(), table);

    RunManifest manifest;
    manifest.command = "tokens";
    manifest.config_hash = config.config_hash;
    manifest.counts["windows"] = n;
    manifest.counts["patch_tokens_mean"] = lens_patch / n;
    manifest.counts["text_serialized_mean"] = baseline_tokens / n;
    manifest.wall_time_s = timer.elapsed_s();
    manifest.finalize();
    manifest.write(config.out_dir);
    return manifest;
}

RunManifest cmd_evaluate(const RunConfig& config, const std::string& refs_path,
                         const std::string& preds_path) {
    Timer timer;
    fs::create_directories(config.out_dir);

    struct Row {
        std::string kind = "summary";
        std::string question;
        std::string answer;
    };
    // Narrative records carry no explicit id; derive one from their keys.
    const auto row_id = [](const Json& j) -> std::string {
        if (j.contains("id")) return j["id"].get<std::string>();
        std::string id = j.at("ema_id").get<std::string>() + ":" +
                         j.value("kind", std::string{"summary"});
        if (j.contains("category") && !j["category"].is_null())
            id += ":" + std::to_string(j["category"].get<int>());
        return id;
    };
    std::map<std::string, Row> refs;
    for (const auto& j : read_jsonl(refs_path)) {
        Row r;
        r.kind = j.value("kind", std::string{"summary"});
        r.question = j.value("question", std::string{});
        r.answer = j.contains("answer") ? j["answer"].get<std::string>()
                                        : j.at("text").get<std::string>();
        refs[row_id(j)] = std::move(r);
    }

    auto eval_backend = gateway::make_backend(config.eval_backend);
    const auto audit = audit_for(config);
    if (audit) eval_backend->set_audit(audit);

    metrics::MetricReport report;
    std::vector<metrics::SymptomRecord> records;
    std::vector<metrics::SeverityPair> pairs;
    std::vector<Json> sample_rows;
    double r1p = 0, r1r = 0, r1f = 0, r2p = 0, r2r = 0, r2f = 0, rlp = 0, rlr = 0, rlf = 0,
           bl = 0;
    std::size_t matched = 0, unmatched = 0;

    for (const auto& j : read_jsonl(preds_path)) {
        const auto id = row_id(j);
        const auto it = refs.find(id);
        if (it == refs.end()) {
            ++unmatched;
            continue;
        }
        const std::string pred = j.contains("answer") ? j["answer"].get<std::string>()
                                                      : j.at("text").get<std::string>();
        const auto& ref = it->second;
        const auto r1 = metrics::rouge_n(pred, ref.answer, 1);
        const auto r2 = metrics::rouge_n(pred, ref.answer, 2);
        const auto rl = metrics::rouge_l(pred, ref.answer);
        const double b = metrics::bleu4(pred, ref.answer);
        r1p += r1.precision; r1r += r1.recall; r1f += r1.f;
        r2p += r2.precision; r2r += r2.recall; r2f += r2.f;
        rlp += rl.precision; rlr += rl.recall; rlf += rl.f;
        bl += b;

        Json sample{{"id", id}, {"kind", ref.kind}, {"rouge1_f", r1.f}, {"rouge2_f", r2.f},
                    {"rougeL_f", rl.f}, {"bleu4", b}};
        if (ref.kind == "summary") {
            const auto record = metrics::extract_symptom_record(*eval_backend, ref.answer, pred);
            records.push_back(record);
            const std::vector<metrics::SymptomRecord> one{record};
            if (const auto align = metrics::severity_alignment(one))
                sample["alignment"] = *align;
            const auto cov = metrics::coverage(one);
            sample["coverage_f1"] = cov.f1;
        } else if (ref.kind == "item") {
            const auto pair = metrics::extract_severity_pair(
                *eval_backend, ref.question.empty() ? "(question unavailable)" : ref.question,
                ref.answer, pred);
            pairs.push_back(pair);
            sample["alignment"] = metrics::ordinal_weight(pair.ref_severity - pair.pred_severity);
        }
        sample_rows.push_back(std::move(sample));
        ++matched;
    }
    if (matched == 0) throw DataError("no prediction ids matched the reference file");

    const auto m = static_cast<double>(matched);
    report.rouge1 = {r1p / m, r1r / m, r1f / m};
    report.rouge2 = {r2p / m, r2r / m, r2f / m};
    report.rougeL = {rlp / m, rlr / m, rlf / m};
    report.bleu = bl / m;
    report.n_samples = matched;
    if (!records.empty()) {
        report.cov = metrics::coverage(records);
        report.alignment = metrics::severity_alignment(records);
    } else if (!pairs.empty()) {
        report.alignment = metrics::item_alignment(pairs);
    }

    write_json_file((fs::path(config.out_dir) / "metrics_report.json").string(), report.to_json());
    {
        std::ofstream csv((fs::path(config.out_dir) / "metrics_samples.csv").string(),
                          std::ios::trunc);
        csv << "id,kind,rouge1_f,rouge2_f,rougeL_f,bleu4,alignment,coverage_f1\n";
        for (const auto& s : sample_rows) {
            csv << s["id"].get<std::string>() << ',' << s["kind"].get<std::string>() << ','
                << s["rouge1_f"].get<double>() << ',' << s["rouge2_f"].get<double>() << ','
                << s["rougeL_f"].get<double>() << ',' << s["bleu4"].get<double>() << ',';
            if (s.contains("alignment")) csv << s["alignment"].get<double>();
            csv << ',';
            if (s.contains("coverage_f1")) csv << s["coverage_f1"].get<double>();
            csv << '\n';
        }
    }

    RunManifest manifest;
    manifest.command = "evaluate";
    manifest.config_hash = config.config_hash;
    manifest.counts["samples"] = static_cast<std::int64_t>(matched);
    manifest.counts["unmatched_predictions"] = static_cast<std::int64_t>(unmatched);
    manifest.counts["symptom_records"] = static_cast<std::int64_t>(records.size());
    manifest.counts["severity_pairs"] = static_cast<std::int64_t>(pairs.size());
    manifest.wall_time_s = timer.elapsed_s();
    manifest.finalize();
    manifest.write(config.out_dir);
    return manifest;
}

std::map<std::string, RunManifest> run_all(const RunConfig& config) {
    std::map<std::string, RunManifest> manifests;
    manifests["ingest"] = cmd_ingest(config);
    manifests["synthesize"] = cmd_synthesize(config);
    manifests["judge"] = cmd_judge(config);
    manifests["assemble"] = cmd_assemble(config);
    manifests["encode"] = cmd_encode(config);
    manifests["tokens"] = cmd_tokens(config);
    return manifests;
}

}  // namespace lens::pipeline
