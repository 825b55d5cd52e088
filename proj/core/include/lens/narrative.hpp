#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lens/gateway.hpp"
#include "lens/jsonl.hpp"

namespace lens::narrative {

// Score ranges 0-25 / 26-50 / 51-75 / 76-100; non-integer scores floor first.
enum class FrequencyBucket { NotAtAll = 0, Sometimes = 1, Often = 2, Constantly = 3 };

FrequencyBucket bucket_frequency(double score);

enum class Daypart { Morning, Afternoon, Evening };

struct NegativeEvent {
    bool occurred = false;
    std::optional<double> intensity;  // present iff occurred
};

struct EmaResponse {
    std::string participant_id;
    std::string ema_id;
    double completed_at = 0.0;
    std::array<double, 13> items{};  // categories 1..13, scores in [0,100]
    NegativeEvent negative_event;
    Daypart daypart = Daypart::Morning;

    void validate() const;  // throws DataError
    Json to_json() const;
    static EmaResponse from_json(const Json& j);
};

struct SymptomCategory {
    int index;  // 1..14
    std::string name;
    std::string question_text;
};

// The 14 assessed categories; the overall-summary prompt is separate.
const std::array<SymptomCategory, 14>& category_roster();
const std::string& overall_summary_prompt();

enum class Stage { Template, Enhanced };
enum class Kind { Item, Summary };
enum class SeverityLabel { Mild, Moderate, Severe };

const char* to_string(Stage s);
const char* to_string(Kind k);
const char* to_string(SeverityLabel s);

struct Narrative {
    Kind kind = Kind::Item;
    Stage stage = Stage::Template;
    std::string text;
    std::string ema_id;
    std::string participant_id;
    std::optional<int> category;                   // item narratives only
    std::optional<SeverityLabel> severity_label;   // summary narratives only
    Json qc_trail = Json::array();

    Json to_json() const;
    static Narrative from_json(const Json& j);
};

// Sentence templates and bucket phrases are data, not code; they load from a
// versioned JSON file shipped under core/data/.
struct TemplateSet {
    std::string version;
    std::array<std::string, 4> bucket_phrases;      // index = FrequencyBucket
    std::map<int, std::string> item_templates;      // 1..13, "{phrase}" slot
    std::string negative_event_present;             // "{phrase}" slot
    std::string negative_event_absent;
    std::string summary_severity;                   // "{severity}" slot

    static TemplateSet load(const std::string& path);
    void validate() const;
};

const std::string& bucket_phrase(const TemplateSet& templates, FrequencyBucket bucket);

Narrative render_item_narrative(int category_index, const EmaResponse& response,
                                const TemplateSet& templates);

// One sentence; negation when no event occurred, bucketed intensity otherwise.
std::string render_negative_event(const EmaResponse& response, const TemplateSet& templates);

// Mean of the 13 item scores against tertile cut points 33.4 / 66.7.
SeverityLabel classify_overall_severity(const EmaResponse& response);

// Items in category order 1..13, then the negative-event sentence, then the
// overall severity statement. Inputs may arrive in any order.
Narrative render_summary(std::vector<Narrative> item_narratives,
                         const std::string& negative_fragment, SeverityLabel severity,
                         const TemplateSet& templates);

gateway::ChatPrompt build_rewrite_prompt(const Narrative& template_narrative);

}  // namespace lens::narrative
