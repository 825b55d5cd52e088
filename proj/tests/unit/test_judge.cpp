#include <doctest.h>

#include "lens/judge.hpp"
#include "lens/rng.hpp"

using namespace lens;
using namespace lens::judge;

namespace {

JudgeVerdict verdict(std::array<int, 5> scores, double confidence) {
    JudgeVerdict v;
    v.scores = scores;
    v.confidence.fill(confidence);
    v.critique = "scripted";
    return v;
}

std::string verdict_json(std::array<int, 5> scores, double confidence) {
    Json j;
    j["scores"] = scores;
    j["confidence"] = std::array<double, 5>{confidence, confidence, confidence, confidence,
                                            confidence};
    j["critique"] = Json{{"summary", "scripted"}};
    return j.dump();
}

gateway::BackendConfig mock_cfg(const char* name) {
    gateway::BackendConfig cfg;
    cfg.base_url = std::string("mock://") + name;
    cfg.model_name = name;
    cfg.max_retries = 1;
    cfg.retry_backoff_s = 0.001;
    return cfg;
}

narrative::Narrative template_narrative() {
    narrative::Narrative n;
    n.kind = narrative::Kind::Item;
    n.stage = narrative::Stage::Template;
    n.text = "The user often felt tired or low in energy.";
    n.ema_id = "P001-e001";
    n.participant_id = "P001";
    n.category = 4;
    return n;
}

}  // namespace

TEST_CASE("judge prompt embeds both narratives once with the rubric") {
    const auto prompt = build_judge_prompt("TEMPLATE-TEXT", "ENHANCED-TEXT");
    CHECK(prompt.system.find("Template-Based Narrative (Baseline for Comparison/ground)") !=
          std::string::npos);
    CHECK(prompt.user.find("Severity Fidelity") != std::string::npos);
    CHECK(prompt.user.find("{\"scores\": [...], \"confidence\": [...], \"critique\": {...}}") !=
          std::string::npos);
    auto count = [&prompt](const std::string& needle) {
        std::size_t n = 0, pos = 0;
        while ((pos = prompt.user.find(needle, pos)) != std::string::npos) {
            ++n;
            pos += needle.size();
        }
        return n;
    };
    CHECK(count("TEMPLATE-TEXT") == 1);
    CHECK(count("ENHANCED-TEXT") == 1);
}

TEST_CASE("half-away-from-zero rounding") {
    CHECK(round_half_away(4.5) == 5);
    CHECK(round_half_away(4.4999) == 4);
    CHECK(round_half_away(4.6667) == 5);
    CHECK(round_half_away(-2.5) == -3);
    CHECK(round_half_away(0.0) == 0);
}

TEST_CASE("aggregate averages and rounds per dimension") {
    // dim means: {5,4,5} -> 4.667 -> 5 on every dimension
    const std::vector<JudgeVerdict> verdicts{verdict({5, 5, 5, 5, 5}, 0.9),
                                             verdict({4, 4, 4, 4, 4}, 0.9),
                                             verdict({5, 5, 5, 5, 5}, 0.9)};
    const auto agg = aggregate(verdicts);
    for (const int m : agg.dim_means_rounded) CHECK(m == 5);
    CHECK(agg.total == 25);
    CHECK(agg.mean_confidence == doctest::Approx(0.9));
    CHECK(agg.judge_count == 3);
    CHECK(agg.pass);
}

TEST_CASE("the gate is strict: total 20 fails, 21 passes") {
    const std::vector<JudgeVerdict> all_fours{verdict({4, 4, 4, 4, 4}, 0.95),
                                              verdict({4, 4, 4, 4, 4}, 0.95),
                                              verdict({4, 4, 4, 4, 4}, 0.95)};
    const auto agg = aggregate(all_fours);
    CHECK(agg.total == 20);
    CHECK_FALSE(agg.pass);

    const std::vector<JudgeVerdict> one_higher{verdict({5, 4, 4, 4, 4}, 0.95),
                                               verdict({5, 4, 4, 4, 4}, 0.95),
                                               verdict({5, 4, 4, 4, 4}, 0.95)};
    CHECK(aggregate(one_higher).total == 21);
    CHECK(aggregate(one_higher).pass);
}

TEST_CASE("the confidence gate is strict at 0.8") {
    const std::vector<JudgeVerdict> verdicts{verdict({5, 5, 5, 5, 5}, 0.8)};
    CHECK_FALSE(aggregate(verdicts).pass);
    const std::vector<JudgeVerdict> above{verdict({5, 5, 5, 5, 5}, 0.80001)};
    CHECK(aggregate(above).pass);
}

TEST_CASE("aggregate is permutation-invariant") {
    std::vector<JudgeVerdict> verdicts{verdict({5, 4, 3, 4, 5}, 0.85),
                                       verdict({4, 4, 4, 5, 5}, 0.9),
                                       verdict({3, 5, 4, 4, 4}, 0.7)};
    const auto base = aggregate(verdicts);
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        rng.shuffle(verdicts);
        const auto agg = aggregate(verdicts);
        CHECK(agg.total == base.total);
        CHECK(agg.mean_confidence == doctest::Approx(base.mean_confidence));
        CHECK(agg.pass == base.pass);
        CHECK(agg.dim_means_rounded == base.dim_means_rounded);
    }
}

TEST_CASE("pass is monotone in scores and confidence") {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        std::array<int, 5> scores;
        for (auto& s : scores) s = static_cast<int>(rng.uniform_int(1, 5));
        const double conf = rng.uniform(0.0, 1.0);
        const std::vector<JudgeVerdict> base{verdict(scores, conf)};
        if (!aggregate(base).pass) continue;
        // raising any single score or the confidence keeps it passing
        for (std::size_t d = 0; d < 5; ++d) {
            auto raised = scores;
            raised[d] = std::min(5, raised[d] + 1);
            CHECK(aggregate({verdict(raised, conf)}).pass);
        }
        CHECK(aggregate({verdict(scores, std::min(1.0, conf + 0.05))}).pass);
    }
}

TEST_CASE("refine_loop accepts on the first passing round") {
    auto rewriter = gateway::MockBackend(mock_cfg("rewriter"), 3);
    gateway::MockBackend j1(mock_cfg("j1"), 1), j2(mock_cfg("j2"), 2), j3(mock_cfg("j3"), 3);
    for (auto* j : {&j1, &j2, &j3}) j->push_script(verdict_json({5, 5, 5, 5, 5}, 0.95));

    QcConfig config;
    const auto outcome = refine_loop(template_narrative(), config, rewriter, {&j1, &j2, &j3},
                                     gateway::baseline_params(), 17);
    CHECK(outcome.accepted);
    CHECK(outcome.rounds == 1);
    CHECK(rewriter.total_calls() == 1);
    REQUIRE(outcome.narrative.qc_trail.size() == 1);
    CHECK(outcome.narrative.qc_trail[0]["pass"] == true);
    CHECK(outcome.narrative.stage == narrative::Stage::Enhanced);
    CHECK_FALSE(outcome.narrative.text.empty());
}

TEST_CASE("refine_loop retries failures and accepts on round three") {
    auto rewriter = gateway::MockBackend(mock_cfg("rewriter"), 3);
    gateway::MockBackend j1(mock_cfg("j1"), 1), j2(mock_cfg("j2"), 2), j3(mock_cfg("j3"), 3);
    for (auto* j : {&j1, &j2, &j3}) {
        j->push_script(verdict_json({4, 4, 4, 4, 4}, 0.95));  // total 20: fail
        j->push_script(verdict_json({5, 5, 5, 5, 5}, 0.5));   // confidence fail
        j->push_script(verdict_json({5, 5, 5, 5, 4}, 0.9));   // pass
    }
    QcConfig config;
    config.max_rounds = 3;
    const auto outcome = refine_loop(template_narrative(), config, rewriter, {&j1, &j2, &j3},
                                     gateway::baseline_params(), 17);
    CHECK(outcome.accepted);
    CHECK(outcome.rounds == 3);
    CHECK(outcome.narrative.qc_trail.size() == 3);
    CHECK(rewriter.total_calls() == 3);
    CHECK(outcome.narrative.qc_trail[0]["pass"] == false);
    CHECK(outcome.narrative.qc_trail[2]["pass"] == true);
}

TEST_CASE("refine_loop rejects after max_rounds and keeps the trail") {
    auto rewriter = gateway::MockBackend(mock_cfg("rewriter"), 3);
    gateway::MockBackend j1(mock_cfg("j1"), 1), j2(mock_cfg("j2"), 2), j3(mock_cfg("j3"), 3);
    for (auto* j : {&j1, &j2, &j3})
        for (int r = 0; r < 3; ++r) j->push_script(verdict_json({3, 3, 3, 3, 3}, 0.95));

    QcConfig config;
    config.max_rounds = 3;
    const auto outcome = refine_loop(template_narrative(), config, rewriter, {&j1, &j2, &j3},
                                     gateway::baseline_params(), 17);
    CHECK_FALSE(outcome.accepted);
    CHECK(outcome.rounds == 3);
    CHECK(outcome.narrative.qc_trail.size() == 3);
    CHECK(rewriter.total_calls() == 3);  // bounded by max_rounds
}

TEST_CASE("regeneration varies the enhanced text between rounds") {
    auto rewriter = gateway::MockBackend(mock_cfg("rewriter"), 3);
    gateway::MockBackend j1(mock_cfg("j1"), 1), j2(mock_cfg("j2"), 2), j3(mock_cfg("j3"), 3);
    for (auto* j : {&j1, &j2, &j3})
        for (int r = 0; r < 2; ++r) j->push_script(verdict_json({3, 3, 3, 3, 3}, 0.9));
    QcConfig config;
    config.max_rounds = 2;
    const auto outcome = refine_loop(template_narrative(), config, rewriter, {&j1, &j2, &j3},
                                     gateway::baseline_params(), 17);
    REQUIRE(outcome.narrative.qc_trail.size() == 2);
    CHECK(outcome.narrative.qc_trail[0]["enhanced_text_hash"] !=
          outcome.narrative.qc_trail[1]["enhanced_text_hash"]);
}

TEST_CASE("judges with invalid json are dropped; below quorum the round fails") {
    auto rewriter = gateway::MockBackend(mock_cfg("rewriter"), 3);
    gateway::MockBackend j1(mock_cfg("j1"), 1), j2(mock_cfg("j2"), 2), j3(mock_cfg("j3"), 3);
    // j1 never produces valid JSON (both structured attempts fail), j2/j3 pass
    j1.push_script("broken");
    j1.push_script("broken again");
    j2.push_script(verdict_json({5, 5, 5, 5, 5}, 0.95));
    j3.push_script(verdict_json({5, 5, 5, 5, 4}, 0.9));

    QcConfig config;
    config.max_rounds = 1;
    const auto outcome = refine_loop(template_narrative(), config, rewriter, {&j1, &j2, &j3},
                                     gateway::baseline_params(), 17);
    CHECK(outcome.accepted);  // quorum of 2 still passes
    const auto& round = outcome.narrative.qc_trail[0];
    CHECK(round["aggregate"]["judge_count"] == 2);
    CHECK(round["verdicts"][0].contains("dropped"));

    SUBCASE("two broken judges drop the round below quorum") {
        gateway::MockBackend k1(mock_cfg("k1"), 1), k2(mock_cfg("k2"), 2), k3(mock_cfg("k3"), 3);
        for (auto* k : {&k1, &k2}) {
            k->push_script("broken");
            k->push_script("broken");
        }
        k3.push_script(verdict_json({5, 5, 5, 5, 5}, 0.95));
        auto rewriter2 = gateway::MockBackend(mock_cfg("rewriter2"), 4);
        const auto failed = refine_loop(template_narrative(), config, rewriter2, {&k1, &k2, &k3},
                                        gateway::baseline_params(), 17);
        CHECK_FALSE(failed.accepted);
        CHECK(failed.narrative.qc_trail[0]["below_quorum"] == true);
    }
}

TEST_CASE("accepted narratives record the thresholds they satisfied") {
    auto rewriter = gateway::MockBackend(mock_cfg("rewriter"), 3);
    gateway::MockBackend j1(mock_cfg("j1"), 1), j2(mock_cfg("j2"), 2), j3(mock_cfg("j3"), 3);
    for (auto* j : {&j1, &j2, &j3}) j->push_script(verdict_json({5, 5, 4, 5, 5}, 0.88));
    const auto outcome = refine_loop(template_narrative(), QcConfig{}, rewriter, {&j1, &j2, &j3},
                                     gateway::baseline_params(), 21);
    REQUIRE(outcome.accepted);
    const auto& agg = outcome.narrative.qc_trail.back()["aggregate"];
    CHECK(agg["total"].get<int>() > 20);
    CHECK(agg["mean_confidence"].get<double>() > 0.8);
}
