// Acceptance suite: prints one line per criterion and exits non-zero when
// any of them fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lens/hash.hpp"
#include "lens/judge.hpp"
#include "lens/metrics.hpp"
#include "lens/narrative.hpp"
#include "lens/patch_encoder.hpp"
#include "lens/pipeline.hpp"
#include "lens/qa_assembly.hpp"
#include "lens/rng.hpp"

namespace fs = std::filesystem;
using namespace lens;

namespace {

struct Criterion {
    int number;
    std::string label;
    std::function<std::string()> run;  // empty string = pass, else failure detail
};

// ---------------------------------------------------------------------- 1
std::string check_severity_weight_table() {
    // Exhaustive raw enumeration: presence bits x severity grid, normalized by
    // the same presence=>severity repair the intake applies.
    std::size_t cases = 0;
    for (int a : {0, 1})
        for (int ah : {0, 1})
            for (int s_raw = 0; s_raw <= 3; ++s_raw)
                for (int sh_raw = 0; sh_raw <= 3; ++sh_raw) {
                    const int s = a == 0 ? 0 : s_raw;
                    const int sh = ah == 0 ? 0 : sh_raw;
                    metrics::SymptomRecord record;
                    record.categories[0] = {a, ah, s, sh};
                    const auto align = metrics::severity_alignment({record});
                    ++cases;
                    if (a == 0 && ah == 0) {
                        if (align.has_value())
                            return "expected undefined alignment for the all-absent case";
                        continue;
                    }
                    // independent statement of the ordinal table
                    double expected;
                    if (a != ah) {
                        expected = 0.0;
                    } else {
                        const int delta = std::abs(s - sh);
                        expected = delta == 0 ? 1.0 : delta == 1 ? 0.75 : delta == 2 ? 0.25 : 0.0;
                    }
                    if (!align.has_value() || *align != expected) {
                        std::ostringstream oss;
                        oss << "case (a=" << a << ",ah=" << ah << ",s=" << s << ",sh=" << sh
                            << ") expected " << expected;
                        return oss.str();
                    }
                }
    return cases == 64 ? "" : "enumeration incomplete";
}

// ---------------------------------------------------------------------- 2
std::string check_coverage_formulas() {
    std::vector<std::array<int, 4>> rows(14, {0, 0, 0, 0});
    rows[0] = {1, 1, 1, 1};
    rows[1] = {1, 1, 2, 2};
    rows[2] = {1, 1, 3, 3};
    rows[3] = {0, 1, 0, 1};
    rows[4] = {1, 0, 2, 0};
    metrics::SymptomRecord record;
    for (std::size_t i = 0; i < 14; ++i)
        record.categories[i] = {rows[i][0], rows[i][1], rows[i][2], rows[i][3]};
    const auto score = metrics::coverage({record});
    if (score.tp != 3 || score.fp != 1 || score.fn != 1) return "confusion counts wrong";
    for (const double got : {score.precision, score.recall, score.f1})
        if (std::abs(got - 0.75) > 1e-12) return "P/R/F1 deviates from 0.75 beyond 1e-12";

    metrics::SymptomRecord negative;  // all zeros
    const auto zero = metrics::coverage({negative});
    if (zero.precision != 0.0 || zero.recall != 0.0 || zero.f1 != 0.0)
        return "all-negative case must be defined zero";
    return "";
}

// ---------------------------------------------------------------------- 3
std::size_t lcs_exhaustive(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::size_t best = 0;
    for (std::size_t mask = 0; mask < (1ull << a.size()); ++mask) {
        std::vector<std::string> sub;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (mask & (1ull << i)) sub.push_back(a[i]);
        if (sub.size() <= best) continue;
        std::size_t j = 0;
        for (const auto& token : b)
            if (j < sub.size() && token == sub[j]) ++j;
        if (j == sub.size()) best = sub.size();
    }
    return best;
}

std::string check_rouge_l_oracle() {
    Rng rng(321);
    const std::vector<std::string> alphabet{"x", "y", "z"};
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> cand, ref;
        const auto nc = static_cast<std::size_t>(rng.uniform_int(0, 10));
        const auto nr = static_cast<std::size_t>(rng.uniform_int(0, 10));
        for (std::size_t i = 0; i < nc; ++i)
            cand.push_back(alphabet[static_cast<std::size_t>(rng.uniform_int(0, 2))]);
        for (std::size_t i = 0; i < nr; ++i)
            ref.push_back(alphabet[static_cast<std::size_t>(rng.uniform_int(0, 2))]);

        const auto lcs = lcs_exhaustive(cand, ref);
        const auto got = metrics::rouge_l(cand, ref);
        const double p = cand.empty() ? 0.0 : static_cast<double>(lcs) / static_cast<double>(cand.size());
        const double r = ref.empty() ? 0.0 : static_cast<double>(lcs) / static_cast<double>(ref.size());
        const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
        if (got.precision != p || got.recall != r || got.f != f)
            return "trial " + std::to_string(trial) + " diverges from the exhaustive oracle";
    }
    return "";
}

// ---------------------------------------------------------------------- 4
ingest::SensorWindow canonical_window() {
    ingest::SensorWindow w;
    w.ema_id = "canonical";
    w.participant_id = "P000";
    w.end_time = 1700014400.0;
    w.sleep_hours = 7.0;
    w.conversation_s = 230.0;
    Rng rng(4);
    for (const auto& spec : ingest::canonical_specs()) {
        ingest::ResampledSeries series;
        series.period_s = spec.period_s;
        series.start_time = w.end_time - ingest::kWindowSpanS;
        series.values.resize(spec.expected_len);
        for (auto& v : series.values) v = rng.uniform(0.0, 100.0);
        series.missing_mask.assign(spec.expected_len, false);
        w.streams[spec.name] = series;
    }
    return w;
}

std::string check_patch_arithmetic() {
    const auto window = canonical_window();
    const std::map<std::string, std::size_t> expected{
        {"heart_rate", 180}, {"zcr", 60},    {"steps", 30},     {"stress", 30},
        {"gps_lon", 3},      {"gps_lat", 3}, {"phone_lock", 30}};
    std::size_t sum = 0;
    for (const auto& [name, series] : window.streams) {
        const std::size_t patches = (series.values.size() + 7) / 8;
        if (patches != expected.at(name))
            return name + " has " + std::to_string(patches) + " patches";
        sum += patches;
    }
    if (sum != 336) return "patch total " + std::to_string(sum) + " != 336";

    // text component under the default whitespace tokenizer
    std::string prompt;
    for (const auto& [name, series] : window.streams) {
        const auto stats = encoder::normalize(series.values).second;
        prompt += encoder::format_metadata(stats, name) + " <ts></ts>\n";
    }
    prompt += "Sleep duration (hours): 7.0\nConversation length (seconds): 230.0\n";
    prompt += narrative::overall_summary_prompt();
    const auto budget = encoder::count_tokens(window, prompt);
    if (budget.patch_tokens != 336) return "count_tokens patch component mismatch";
    if (budget.text_tokens == 0 || budget.text_tokens >= 1500)
        return "text component " + std::to_string(budget.text_tokens) + " outside (0, 1500)";
    if (budget.total != budget.text_tokens + budget.patch_tokens) return "budget sum broken";
    return "";
}

// ---------------------------------------------------------------------- 5
std::string check_encoder_numerics() {
    // (a) normalize/denormalize round trip on 1000 seeded series
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        Rng rng(seed * 31 + 7);
        std::vector<double> series(16 + seed % 64);
        for (auto& v : series) v = rng.uniform(-1000.0, 1000.0);
        const auto [normed, stats] = encoder::normalize(series);
        const auto back = encoder::denormalize(normed, stats);
        for (std::size_t i = 0; i < series.size(); ++i) {
            const double rel = std::abs(back[i] - series[i]) / std::max(1.0, std::abs(series[i]));
            if (rel > 1e-9)
                return "round-trip error " + std::to_string(rel) + " at seed " +
                       std::to_string(seed);
        }
    }

    // (b) patch dimension 136 for k=8, d_p=16
    encoder::EncoderConfig config;
    config.seed = 2;
    if (config.input_dim() != 136) return "input_dim != 136";
    const encoder::PositionalTable positions(config.d_p, config.seed);
    const std::vector<double> series(100, 0.5);
    const auto seq = encoder::patchify(series, config, positions);
    for (const auto& patch : seq.patches)
        if (patch.size() != 136) return "patch dimension != 136";

    // (c) analytic vs central finite differences on 5 seeded toy configs
    const std::vector<std::vector<std::size_t>> toys{
        {136, 32, 8}, {136, 24, 12}, {20, 16, 4}, {48, 40, 10}, {64, 16, 16, 6}};
    for (std::size_t t = 0; t < toys.size(); ++t) {
        const auto& dims = toys[t];
        const std::uint64_t seed = 500 + t;
        const auto weights = encoder::MlpWeights::seeded(dims, seed);
        Rng rng(seed * 13 + 1);
        std::vector<double> input(dims.front());
        for (auto& v : input) v = rng.uniform(-1.5, 1.5);
        std::vector<double> upstream(dims.back());
        for (auto& v : upstream) v = rng.uniform(-1.0, 1.0);

        const auto grads = encoder::mlp_backward(input, weights, upstream);
        const double step = 1e-3;
        double max_rel = 0.0;

        auto loss_with = [&](encoder::MlpWeights w) {
            const auto out = encoder::mlp_forward(input, w);
            double loss = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) loss += upstream[i] * out[i];
            return loss;
        };
        for (std::size_t layer = 0; layer < weights.layer_count(); ++layer) {
            for (std::size_t i = 0; i < weights.weights[layer].size(); ++i) {
                auto wp = weights, wm = weights;
                wp.weights[layer][i] += step;
                wm.weights[layer][i] -= step;
                const double fd = (loss_with(wp) - loss_with(wm)) / (2.0 * step);
                const double an = grads.d_weights[layer][i];
                max_rel = std::max(max_rel,
                                   std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
            }
            for (std::size_t i = 0; i < weights.biases[layer].size(); ++i) {
                auto wp = weights, wm = weights;
                wp.biases[layer][i] += step;
                wm.biases[layer][i] -= step;
                const double fd = (loss_with(wp) - loss_with(wm)) / (2.0 * step);
                const double an = grads.d_biases[layer][i];
                max_rel = std::max(max_rel,
                                   std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
            }
        }
        if (max_rel >= 1e-4)
            return "config " + std::to_string(t) + " gradient error " + std::to_string(max_rel);
    }
    return "";
}

// ---------------------------------------------------------------------- 6
std::string check_qc_gate() {
    auto verdict = [](std::array<int, 5> scores, double conf) {
        judge::JudgeVerdict v;
        v.scores = scores;
        v.confidence.fill(conf);
        return v;
    };
    // strict total inequality: 20 fails, 21 passes
    if (judge::aggregate({verdict({4, 4, 4, 4, 4}, 0.95)}).pass) return "total 20 must fail";
    if (!judge::aggregate({verdict({5, 4, 4, 4, 4}, 0.95)}).pass) return "total 21 must pass";
    // strict confidence inequality
    if (judge::aggregate({verdict({5, 5, 5, 5, 5}, 0.8)}).pass) return "confidence 0.8 must fail";
    if (!judge::aggregate({verdict({5, 5, 5, 5, 5}, 0.81)}).pass)
        return "confidence 0.81 must pass";

    // permutation invariance over 100 shuffles
    std::vector<judge::JudgeVerdict> panel{verdict({5, 4, 3, 5, 4}, 0.83),
                                           verdict({4, 4, 5, 4, 4}, 0.92),
                                           verdict({3, 5, 4, 4, 5}, 0.78)};
    const auto base = judge::aggregate(panel);
    Rng rng(66);
    for (int i = 0; i < 100; ++i) {
        rng.shuffle(panel);
        const auto agg = judge::aggregate(panel);
        if (agg.total != base.total || agg.pass != base.pass ||
            std::abs(agg.mean_confidence - base.mean_confidence) > 1e-12)
            return "aggregate is order-sensitive";
    }

    // scripted always-failing judges: the loop stops at max_rounds rewrites
    gateway::BackendConfig cfg;
    cfg.base_url = "mock://gate";
    cfg.max_retries = 1;
    cfg.retry_backoff_s = 0.001;
    gateway::MockBackend rewriter(cfg, 1), j1(cfg, 2), j2(cfg, 3), j3(cfg, 4);
    Json fail_verdict{{"scores", {4, 4, 4, 4, 4}},
                      {"confidence", {0.95, 0.95, 0.95, 0.95, 0.95}},
                      {"critique", "total is exactly 20"}};
    for (auto* j : {&j1, &j2, &j3})
        for (int r = 0; r < 3; ++r) j->push_script(fail_verdict.dump());

    narrative::Narrative tmpl;
    tmpl.text = "The user often felt tired or low in energy.";
    tmpl.ema_id = "P000-e001";
    judge::QcConfig qc;
    qc.max_rounds = 3;
    const auto outcome = judge::refine_loop(tmpl, qc, rewriter, {&j1, &j2, &j3},
                                            gateway::baseline_params(), 5);
    if (outcome.accepted) return "all-20 verdicts must be rejected";
    if (rewriter.total_calls() > qc.max_rounds) return "rewriter called beyond max_rounds";
    if (outcome.narrative.qc_trail.size() != 3) return "trail must record every round";
    return "";
}

// ---------------------------------------------------------------------- 7
std::string check_split_integrity() {
    std::vector<std::string> ids;
    for (int i = 0; i < 258; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "P%03d", i + 1);
        ids.push_back(buf);
    }
    const auto first = qa::split_participants(ids, {0.70, 0.15, 0.15}, 424242);
    const auto sizes = first.sizes();
    if (sizes[0] != 180 || sizes[1] != 38 || sizes[2] != 40) {
        std::ostringstream oss;
        oss << "sizes " << sizes[0] << "/" << sizes[1] << "/" << sizes[2] << " != 180/38/40";
        return oss.str();
    }

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto assignment = qa::split_participants(ids, {0.70, 0.15, 0.15}, seed);
        if (assignment.by_participant.size() != 258) return "partition not total";
        // dataset-wide scan: several samples per participant, tagged like the
        // assembler tags them, must never land in two splits
        std::map<std::string, std::set<std::string>> splits_seen;
        for (const auto& pid : ids) {
            for (int sample = 0; sample < 3; ++sample) {
                qa::QaPair pair;
                pair.id = pid + ":" + std::to_string(sample);
                pair.split = assignment.of(pid);
                splits_seen[pid].insert(qa::to_string(pair.split));
            }
        }
        for (const auto& [pid, seen] : splits_seen)
            if (seen.size() != 1) return pid + " appears in " + std::to_string(seen.size()) + " splits";
    }
    return "";
}

// ---------------------------------------------------------------------- 8
std::string check_bucket_boundaries() {
    using narrative::FrequencyBucket;
    const std::vector<std::pair<double, FrequencyBucket>> expected{
        {0, FrequencyBucket::NotAtAll},   {25, FrequencyBucket::NotAtAll},
        {26, FrequencyBucket::Sometimes}, {50, FrequencyBucket::Sometimes},
        {51, FrequencyBucket::Often},     {75, FrequencyBucket::Often},
        {76, FrequencyBucket::Constantly}, {100, FrequencyBucket::Constantly}};
    for (const auto& [score, bucket] : expected)
        if (narrative::bucket_frequency(score) != bucket)
            return "score " + std::to_string(score) + " misbucketed";
    return "";
}

// ---------------------------------------------------------------------- 9
std::string check_mixing_ratios() {
    if (qa::apportion_counts({0.3, 0.3, 0.2, 0.2}, 1000) !=
        std::vector<std::size_t>{300, 300, 200, 200})
        return "1000 at 0.3/0.3/0.2/0.2 must give 300/300/200/200";
    if (qa::apportion_counts({0.8, 0.1, 0.1}, 10) != std::vector<std::size_t>{8, 1, 1})
        return "10 at 8:1:1 must give 8/1/1";
    return "";
}

// --------------------------------------------------------------------- 10
std::string read_or_empty(const fs::path& p) {
    return fs::exists(p) ? read_text_file(p.string()) : std::string{};
}

std::string check_e2e_determinism() {
    const auto started = std::chrono::steady_clock::now();
    const auto base = fs::temp_directory_path() / "lens_acceptance_e2e";
    fs::remove_all(base);

    std::vector<std::string> digests;
    for (int run = 0; run < 2; ++run) {
        const auto root = base / ("run" + std::to_string(run));
        pipeline::generate_fixture(root.string(), 5, 6, 2026, LENS_DATA_DIR);
        auto config = RunConfig::load((root / "config.json").string());
        pipeline::run_all(config);

        std::string all;
        for (const char* name :
             {"windows.jsonl", "narratives_template.jsonl", "narratives_enhanced.jsonl",
              "narratives_rejected.jsonl", "qa_train.jsonl", "qa_val.jsonl", "qa_test.jsonl",
              "qa_train_mixed.jsonl", "encoded.jsonl"}) {
            all += name;
            all += '\x1f';
            all += read_or_empty(fs::path(config.out_dir) / name);
        }
        digests.push_back(fnv1a64_hex(all));

        if (run == 0) {
            // sanity: the pipeline actually produced data
            if (read_jsonl((fs::path(config.out_dir) / "windows.jsonl").string()).size() != 30)
                return "expected 30 windows from the 5x6 fixture";
            if (read_or_empty(fs::path(config.out_dir) / "qa_train_mixed.jsonl").empty())
                return "mixed training file missing";
        }
    }
    if (digests[0] != digests[1]) return "outputs differ between identical runs";
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (elapsed >= 60.0) return "pipeline too slow: " + std::to_string(elapsed) + " s";
    return "";
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "severity weight table exact over the full presence/severity grid",
         check_severity_weight_table},
        {2, "coverage formulas on constructed confusion cases", check_coverage_formulas},
        {3, "ROUGE-L equals the exhaustive subsequence oracle on 200 seeded cases",
         check_rouge_l_oracle},
        {4, "canonical window patch counts {180,60,30,30,3,3,30} sum to 336",
         check_patch_arithmetic},
        {5, "encoder numerics: round-trip, u_i dimension, gradient checks",
         check_encoder_numerics},
        {6, "QC gate semantics with scripted judges", check_qc_gate},
        {7, "participant splits 180/38/40 and zero cross-split leakage over 20 seeds",
         check_split_integrity},
        {8, "frequency bucket boundaries at 0/25/26/50/51/75/76/100", check_bucket_boundaries},
        {9, "mixing ratios 300/300/200/200 and 8/1/1", check_mixing_ratios},
        {10, "end-to-end determinism on the 5-participant fixture in under 60 s",
         check_e2e_determinism},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        try {
            detail = criterion.run();
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (detail.empty()) {
            std::printf("[PASS] criterion %2d: %s (%.2f s)\n", criterion.number,
                        criterion.label.c_str(), dt);
        } else {
            ++failures;
            std::printf("[FAIL] criterion %2d: %s (%.2f s) -- %s\n", criterion.number,
                        criterion.label.c_str(), dt, detail.c_str());
        }
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
