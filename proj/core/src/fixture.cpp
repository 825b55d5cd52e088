#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lens/errors.hpp"
#include "lens/pipeline.hpp"
#include "lens/rng.hpp"

namespace lens::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr double kDay = 86400.0;
constexpr double kStudyStart = 1700000000.0;  // fixed epoch anchor keeps runs reproducible

std::string participant_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "P%03zu", i + 1);
    return buf;
}

void write_csv(const fs::path& path, const std::vector<std::pair<double, double>>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << "timestamp,value\n";
    char buf[64];
    for (const auto& [t, v] : rows) {
        std::snprintf(buf, sizeof(buf), "%.0f,%.4f", t, v);
        out << buf << '\n';
    }
}

}  // namespace

RunManifest generate_fixture(const std::string& dir, std::size_t participants,
                             std::size_t emas_per_participant, std::uint64_t seed,
                             const std::string& data_dir_for_config) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path root(dir);
    const fs::path raw = root / "raw";
    fs::create_directories(raw);

    Rng rng(seed);
    std::vector<Json> ema_rows;
    std::ofstream index(root / "ema_index.csv", std::ios::trunc);
    index << "participant_id,ema_id,completed_at\n";

    const double span_days = std::max<double>(2.0, std::ceil(emas_per_participant / 3.0));
    std::int64_t sample_rows = 0;

    for (std::size_t p = 0; p < participants; ++p) {
        const std::string pid = participant_name(p);
        const fs::path pdir = raw / pid;
        fs::create_directories(pdir);

        // participant-level baselines
        const double hr_base = 62.0 + rng.uniform(0.0, 16.0);
        const double stress_base = 20.0 + rng.uniform(0.0, 40.0);
        const double lon0 = -122.0 + rng.uniform(-0.5, 0.5);
        const double lat0 = 37.0 + rng.uniform(-0.5, 0.5);
        const double symptom_base = rng.uniform(5.0, 70.0);

        const double t_start = kStudyStart;
        const double t_end = kStudyStart + span_days * kDay;

        std::vector<std::pair<double, double>> heart, zcr, steps, stress, lon, lat, lock, convo,
            sleep;
        for (double t = t_start; t < t_end; t += 15.0) {
            const double phase = 2.0 * M_PI * (t - t_start) / 3600.0;
            heart.emplace_back(t, hr_base + 8.0 * std::sin(phase) + rng.uniform(-3.0, 3.0));
        }
        // a few implausible readings the outlier filter should drop
        heart.emplace_back(t_start + 300.0, 300.0);
        heart.emplace_back(t_start + 900.0, 5.0);

        for (double t = t_start; t < t_end; t += 30.0)
            zcr.emplace_back(t, std::max(0.0, 0.4 + 0.3 * std::sin(2.0 * M_PI * (t - t_start) / 5400.0) +
                                                  rng.uniform(-0.2, 0.2)));
        for (double t = t_start; t < t_end; t += 60.0) {
            const bool active = rng.uniform01() < 0.3;
            steps.emplace_back(t, active ? std::floor(rng.uniform(0.0, 120.0)) : 0.0);
        }
        for (double t = t_start; t < t_end; t += 120.0)
            stress.emplace_back(t, std::clamp(stress_base + 15.0 * std::sin(2.0 * M_PI * (t - t_start) / 7200.0) +
                                                  rng.uniform(-8.0, 8.0),
                                              0.0, 100.0));
        for (double t = t_start; t < t_end; t += 600.0) {
            lon.emplace_back(t, lon0 + rng.uniform(-0.002, 0.002));
            lat.emplace_back(t, lat0 + rng.uniform(-0.002, 0.002));
        }
        {
            double t = t_start;
            int state = 0;
            while (t < t_end) {
                t += rng.uniform(600.0, 5400.0);
                state = 1 - state;
                lock.emplace_back(t, static_cast<double>(state));
            }
        }
        for (double t = t_start; t < t_end; t += rng.uniform(3600.0, 14400.0))
            convo.emplace_back(t, std::floor(rng.uniform(30.0, 900.0)));
        for (double day = 0; day < span_days; day += 1.0)
            sleep.emplace_back(t_start + day * kDay + 6.0 * 3600.0, rng.uniform(4.5, 9.5));

        write_csv(pdir / "heart_rate.csv", heart);
        write_csv(pdir / "zcr.csv", zcr);
        write_csv(pdir / "steps.csv", steps);
        write_csv(pdir / "stress.csv", stress);
        write_csv(pdir / "gps_lon.csv", lon);
        write_csv(pdir / "gps_lat.csv", lat);
        write_csv(pdir / "phone_lock.csv", lock);
        write_csv(pdir / "conversation.csv", convo);
        write_csv(pdir / "sleep.csv", sleep);
        sample_rows += static_cast<std::int64_t>(heart.size() + zcr.size() + steps.size() +
                                                 stress.size() + lon.size() + lat.size() +
                                                 lock.size() + convo.size() + sleep.size());

        // three assessments per day: morning / afternoon / evening
        static const char* dayparts[] = {"morning", "afternoon", "evening"};
        static const double hours[] = {9.0, 14.0, 20.0};
        for (std::size_t e = 0; e < emas_per_participant; ++e) {
            const std::size_t day = e / 3;
            const std::size_t slot = e % 3;
            const double completed =
                t_start + static_cast<double>(day) * kDay + hours[slot] * 3600.0 +
                std::floor(rng.uniform(0.0, 1800.0));
            char ema_id[32];
            std::snprintf(ema_id, sizeof(ema_id), "%s-e%03zu", pid.c_str(), e + 1);

            Json row;
            row["participant_id"] = pid;
            row["ema_id"] = ema_id;
            row["completed_at"] = completed;
            Json items = Json::array();
            for (int q = 0; q < 13; ++q)
                items.push_back(std::floor(std::clamp(symptom_base + rng.uniform(-25.0, 25.0), 0.0, 100.0)));
            row["items"] = items;
            const bool occurred = rng.uniform01() < 0.25;
            Json ne;
            ne["occurred"] = occurred;
            if (occurred) ne["intensity"] = std::floor(rng.uniform(10.0, 95.0));
            row["negative_event"] = ne;
            row["daypart"] = dayparts[slot];
            ema_rows.push_back(row);

            index << pid << ',' << ema_id << ',';
            char ts[32];
            std::snprintf(ts, sizeof(ts), "%.0f", completed);
            index << ts << '\n';
        }
    }
    write_jsonl((root / "ema_responses.jsonl").string(), ema_rows);

    // Ready-to-run config pointing at the fixture, mock backends throughout.
    const std::string data_root =
        data_dir_for_config.empty() ? std::string(LENS_DEFAULT_DATA_DIR) : data_dir_for_config;
    Json config;
    config["data_dir"] = raw.string();
    config["out_dir"] = (root / "out").string();
    config["paths"] = {{"templates", data_root + "/templates.json"},
                       {"paraphrases", data_root + "/paraphrases.json"},
                       {"instruction_following", data_root + "/instruction_following.jsonl"},
                       {"ema_responses", (root / "ema_responses.jsonl").string()},
                       {"ema_index", (root / "ema_index.csv").string()}};
    config["qc"] = {{"total_threshold", 20}, {"confidence_threshold", 0.8}, {"max_rounds", 3},
                    {"min_quorum", 2}};
    auto mock = [](const char* name, std::uint64_t s) {
        return Json{{"base_url", std::string("mock://") + name + "?seed=" + std::to_string(s)},
                    {"model_name", name},
                    {"max_retries", 2},
                    {"parallelism_limit", 4},
                    {"retry_backoff_s", 0.01}};
    };
    config["rewriter"] = mock("rewriter", seed + 11);
    config["judges"] = Json::array({mock("judge-a", seed + 21), mock("judge-b", seed + 22),
                                    mock("judge-c", seed + 23)});
    config["eval_backend"] = mock("eval", seed + 31);
    config["split"] = {{"ratios", {0.70, 0.15, 0.15}}, {"seed", seed + 41}};
    config["mix"] = {{"weights",
                      {{"item", 0.3}, {"summary", 0.3}, {"instruction_following", 0.2},
                       {"alignment_random", 0.2}}},
                     {"total", 200},
                     {"seed", seed + 51},
                     {"with_replacement", true}};
    config["assembly"] = {{"items_per_ema", 2}, {"paraphrase_seed", seed + 61}};
    config["rewrite_seed"] = seed + 71;
    // desk-scale encoder dims; k and d_p stay at their canonical values
    config["encoder"] = {{"k", 8}, {"d_p", 16}, {"layers", 5}, {"hidden", 32}, {"d", 24},
                         {"seed", seed + 81}};
    write_json_file((root / "config.json").string(), config);

    RunManifest manifest;
    manifest.command = "fixture";
    manifest.config_hash = config_fingerprint(config);
    manifest.counts["participants"] = static_cast<std::int64_t>(participants);
    manifest.counts["ema_responses"] = static_cast<std::int64_t>(ema_rows.size());
    manifest.counts["raw_sample_rows"] = sample_rows;
    manifest.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.finalize();
    manifest.write(root.string());
    return manifest;
}

}  // namespace lens::pipeline
