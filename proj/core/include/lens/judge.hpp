#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lens/gateway.hpp"
#include "lens/narrative.hpp"

namespace lens::judge {

// Dimension order is fixed: factual_alignment, symptom_coverage,
// severity_fidelity, fluency, hallucination_risk.
inline constexpr std::size_t kDimensions = 5;

struct JudgeVerdict {
    std::array<int, kDimensions> scores{};        // 1..5
    std::array<double, kDimensions> confidence{};  // 0..1
    std::string critique;
};

JudgeVerdict verdict_from_json(const Json& j);
Json verdict_to_json(const JudgeVerdict& v);

struct AggregateVerdict {
    std::array<int, kDimensions> dim_means_rounded{};
    int total = 0;              // sum of rounded means, 5..25
    double mean_confidence = 0.0;
    bool pass = false;          // total > threshold AND mean_confidence > threshold
    int judge_count = 0;

    Json to_json() const;
};

struct QcConfig {
    int total_threshold = 20;
    double confidence_threshold = 0.8;
    int max_rounds = 3;
    int min_quorum = 2;  // judges whose verdicts parsed; capped at the panel size

    void validate() const;
};

gateway::ChatPrompt build_judge_prompt(const std::string& template_text,
                                       const std::string& enhanced_text);

// Ties round away from zero (2.5 -> 3), independent of locale or FP mode.
int round_half_away(double x);

AggregateVerdict aggregate(const std::vector<JudgeVerdict>& verdicts, const QcConfig& config = {});

struct RefineOutcome {
    bool accepted = false;
    // Enhanced narrative when accepted; the last attempt otherwise. The
    // qc_trail field carries one entry per round either way.
    narrative::Narrative narrative;
    int rounds = 0;
};

// Rewrite -> judge panel -> threshold loop. Regeneration keeps temperature
// and varies only the sampling seed. Judges that fail structured extraction
// (after the gateway's single corrective retry) are dropped from that
// round's aggregate; a round below quorum counts as a failed round.
RefineOutcome refine_loop(const narrative::Narrative& template_narrative, const QcConfig& config,
                          gateway::ChatBackend& rewriter,
                          const std::vector<gateway::ChatBackend*>& judges,
                          const gateway::GenParams& rewrite_params, std::uint64_t seed);

}  // namespace lens::judge
