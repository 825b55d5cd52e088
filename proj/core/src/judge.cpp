#include "lens/judge.hpp"

#include <cmath>
#include <future>

#include "lens/hash.hpp"

namespace lens::judge {

JudgeVerdict verdict_from_json(const Json& j) {
    if (auto err = gateway::validate_schema("judge_verdict", j))
        throw GatewayError("invalid judge verdict: " + *err);
    JudgeVerdict v;
    for (std::size_t d = 0; d < kDimensions; ++d) {
        v.scores[d] = j["scores"][d].get<int>();
        v.confidence[d] = j["confidence"][d].get<double>();
    }
    v.critique = j["critique"].is_string() ? j["critique"].get<std::string>()
                                           : j["critique"].dump();
    return v;
}

Json verdict_to_json(const JudgeVerdict& v) {
    return Json{{"scores", v.scores}, {"confidence", v.confidence}, {"critique", v.critique}};
}

Json AggregateVerdict::to_json() const {
    return Json{{"dim_means_rounded", dim_means_rounded},
                {"total", total},
                {"mean_confidence", mean_confidence},
                {"pass", pass},
                {"judge_count", judge_count}};
}

void QcConfig::validate() const {
    if (total_threshold < 5 || total_threshold > 25)
        throw ConfigError("qc total_threshold must be in [5,25]");
    if (confidence_threshold < 0.0 || confidence_threshold > 1.0)
        throw ConfigError("qc confidence_threshold must be in [0,1]");
    if (max_rounds < 1) throw ConfigError("qc max_rounds must be >= 1");
    if (min_quorum < 1) throw ConfigError("qc min_quorum must be >= 1");
}

gateway::ChatPrompt build_judge_prompt(const std::string& template_text,
                                       const std::string& enhanced_text) {
    if (template_text.empty() || enhanced_text.empty())
        throw DataError("judge prompt requires two non-empty narratives");
    gateway::ChatPrompt prompt;
    prompt.system =
        "As a highly meticulous and objective clinical quality reviewer, your primary "
        "responsibility is to evaluate the quality and safety of an AI-generated mental health "
        "narrative.\n"
        "You must ground your judgment strictly in the provided source data.\n"
        "You will score the AI-generated Narrative on five specific dimensions using a 1-5 "
        "Likert scale and then provide a concise, structured critique.\n"
        "\n"
        "Template-Based Narrative (Baseline for Comparison/ground):\n"
        "This is the rule-based description generated directly from the PHQ-9 scores using a "
        "template.\n"
        "Use this as a baseline for factual alignment and coverage assessment.\n"
        "\n"
        "AI-generated Narrative (To Be Evaluated):\n"
        "This is the AI-rewritten version of the narrative that you must score and critique.\n"
        "You must respond with only a valid JSON object, with no additional text before or "
        "after.";
    prompt.user =
        "Template-Based Narrative (Baseline for Comparison/ground):\n"
        "\n" +
        template_text +
        "\n"
        "\n"
        "AI-generated Narrative (To Be Evaluated):\n"
        "\n" +
        enhanced_text +
        "\n"
        "\n"
        "Please evaluate the AI-generated Narrative based on the following five dimensions.\n"
        "For each dimension, provide a score from 1 (Very Poor) to 5 (Excellent).\n"
        "\n"
        "Factual Alignment:\n"
        "\n"
        "Does the narrative accurately reflect the presence or absence of symptoms reported in "
        "the Template-Based Narrative?\n"
        "Does it contradict any facts from the source data?\n"
        "\n"
        "Scoring guide:\n"
        "1 indicates significant factual contradictions.\n"
        "3 indicates general alignment with minor inaccuracies.\n"
        "5 indicates perfect alignment with no factual errors.\n"
        "\n"
        "Symptom Coverage:\n"
        "\n"
        "Does the narrative mention or allude to all relevant symptoms that were reported with "
        "a non-zero score?\n"
        "\n"
        "Scoring guide:\n"
        "1 indicates multiple significant symptoms are missed.\n"
        "3 indicates most severe symptoms are covered with some omissions.\n"
        "5 indicates comprehensive coverage of all reported symptoms.\n"
        "\n"
        "Severity Fidelity:\n"
        "\n"
        "Does the language and tone accurately reflect the severity levels from the "
        "Template-Based Narrative\n"
        "(for example, not at all, several days, more than half the days, nearly every day)?\n"
        "\n"
        "Scoring guide:\n"
        "1 indicates gross misrepresentation of severity.\n"
        "3 indicates approximate severity with limited precision.\n"
        "5 indicates precise and appropriate severity representation.\n"
        "\n"
        "Fluency and Naturalness:\n"
        "\n"
        "Is the narrative coherent, well-written, and natural-sounding?\n"
        "Does it avoid robotic or repetitive phrasing without sounding artificial?\n"
        "\n"
        "Scoring guide:\n"
        "1 indicates awkward or highly artificial text.\n"
        "3 indicates generally fluent but slightly unnatural phrasing.\n"
        "5 indicates natural, engaging, and human-like language.\n"
        "\n"
        "Hallucination Risk:\n"
        "\n"
        "Does the narrative introduce any new symptoms, details, or assumptions not supported "
        "by the Template-Based Narrative?\n"
        "\n"
        "Scoring guide:\n"
        "1 indicates significant and potentially harmful fabrications.\n"
        "3 indicates minor unsupported but clinically neutral additions.\n"
        "5 indicates strict adherence to the provided source data.\n"
        "\n"
        "Confidence Scoring Guide:\n"
        "\n"
        "For each dimension, provide a confidence score from 0.0 to 1.0 indicating certainty of "
        "the evaluation.\n"
        "1.0 indicates complete certainty.\n"
        "0.8-0.9 indicates high confidence.\n"
        "0.6-0.7 indicates moderate confidence.\n"
        "0.4-0.5 indicates low confidence.\n"
        "0.1-0.3 indicates very low confidence.\n"
        "0.0 indicates no confidence.\n"
        "\n"
        "Return your evaluation result in the following JSON format:\n"
        "\n"
        "{\"scores\": [...], \"confidence\": [...], \"critique\": {...}}";
    return prompt;
}

int round_half_away(double x) {
    return static_cast<int>(x >= 0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

AggregateVerdict aggregate(const std::vector<JudgeVerdict>& verdicts, const QcConfig& config) {
    if (verdicts.empty()) throw DataError("aggregate requires at least one verdict");
    AggregateVerdict agg;
    agg.judge_count = static_cast<int>(verdicts.size());
    double confidence_sum = 0.0;
    for (std::size_t d = 0; d < kDimensions; ++d) {
        double score_sum = 0.0;
        for (const auto& v : verdicts) {
            score_sum += v.scores[d];
            confidence_sum += v.confidence[d];
        }
        agg.dim_means_rounded[d] = round_half_away(score_sum / static_cast<double>(verdicts.size()));
        agg.total += agg.dim_means_rounded[d];
    }
    agg.mean_confidence =
        confidence_sum / static_cast<double>(verdicts.size() * kDimensions);
    agg.pass = agg.total > config.total_threshold &&
               agg.mean_confidence > config.confidence_threshold;
    return agg;
}

RefineOutcome refine_loop(const narrative::Narrative& template_narrative, const QcConfig& config,
                          gateway::ChatBackend& rewriter,
                          const std::vector<gateway::ChatBackend*>& judges,
                          const gateway::GenParams& rewrite_params, std::uint64_t seed) {
    config.validate();
    if (judges.empty()) throw ConfigError("refine_loop requires at least one judge");
    const int quorum = std::min<int>(config.min_quorum, static_cast<int>(judges.size()));

    const auto rewrite_prompt = narrative::build_rewrite_prompt(template_narrative);
    RefineOutcome outcome;
    outcome.narrative = template_narrative;
    outcome.narrative.stage = narrative::Stage::Enhanced;
    outcome.narrative.qc_trail = Json::array();

    for (int round = 1; round <= config.max_rounds; ++round) {
        gateway::GenParams params = rewrite_params;
        params.seed = seed + static_cast<std::uint64_t>(round - 1);
        std::string enhanced;
        try {
            enhanced = gateway::complete(rewriter, rewrite_prompt, params);
        } catch (const GatewayError& e) {
            throw GatewayError("rewrite failed in round " + std::to_string(round) + ": " +
                               e.what());
        }

        const auto judge_prompt = build_judge_prompt(template_narrative.text, enhanced);
        const auto judge_gen = gateway::judge_params();

        // The panel can be queried concurrently; collection order stays fixed.
        std::vector<std::future<Json>> futures;
        futures.reserve(judges.size());
        for (auto* backend : judges) {
            futures.push_back(std::async(std::launch::async, [backend, &judge_prompt, &judge_gen] {
                return gateway::complete_structured(*backend, judge_prompt, "judge_verdict",
                                                    judge_gen);
            }));
        }

        std::vector<JudgeVerdict> verdicts;
        Json verdict_rows = Json::array();
        for (std::size_t j = 0; j < futures.size(); ++j) {
            try {
                const Json raw = futures[j].get();
                verdicts.push_back(verdict_from_json(raw));
                verdict_rows.push_back(Json{{"judge", j}, {"verdict", raw}});
            } catch (const gateway::SchemaError&) {
                verdict_rows.push_back(Json{{"judge", j}, {"dropped", "invalid structured reply"}});
            } catch (const gateway::TransportError& e) {
                throw GatewayError("judge " + std::to_string(j) + " failed in round " +
                                   std::to_string(round) + ": " + e.what());
            }
        }

        Json round_entry;
        round_entry["round"] = round;
        round_entry["enhanced_text_hash"] = fnv1a64_hex(enhanced);
        round_entry["verdicts"] = verdict_rows;

        bool pass = false;
        if (static_cast<int>(verdicts.size()) >= quorum) {
            const AggregateVerdict agg = aggregate(verdicts, config);
            round_entry["aggregate"] = agg.to_json();
            pass = agg.pass;
        } else {
            round_entry["aggregate"] = nullptr;
            round_entry["below_quorum"] = true;
        }
        round_entry["pass"] = pass;
        outcome.narrative.qc_trail.push_back(round_entry);
        outcome.narrative.text = enhanced;
        outcome.rounds = round;

        if (pass) {
            outcome.accepted = true;
            return outcome;
        }
    }
    outcome.accepted = false;
    return outcome;
}

}  // namespace lens::judge
