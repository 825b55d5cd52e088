#include "lens/narrative.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lens/errors.hpp"

namespace lens::narrative {

FrequencyBucket bucket_frequency(double score) {
    if (!(score >= 0.0 && score <= 100.0))
        throw DataError("score out of range [0,100]: " + std::to_string(score));
    const auto s = static_cast<int>(std::floor(score));
    if (s <= 25) return FrequencyBucket::NotAtAll;
    if (s <= 50) return FrequencyBucket::Sometimes;
    if (s <= 75) return FrequencyBucket::Often;
    return FrequencyBucket::Constantly;
}

void EmaResponse::validate() const {
    for (std::size_t i = 0; i < items.size(); ++i)
        if (!(items[i] >= 0.0 && items[i] <= 100.0))
            throw DataError(ema_id + ": item " + std::to_string(i + 1) + " score out of range");
    if (negative_event.occurred != negative_event.intensity.has_value())
        throw DataError(ema_id + ": negative-event intensity must be present iff occurred");
    if (negative_event.intensity &&
        !(*negative_event.intensity >= 0.0 && *negative_event.intensity <= 100.0))
        throw DataError(ema_id + ": negative-event intensity out of range");
}

namespace {

const char* daypart_name(Daypart d) {
    switch (d) {
        case Daypart::Morning: return "morning";
        case Daypart::Afternoon: return "afternoon";
        case Daypart::Evening: return "evening";
    }
    return "morning";
}

Daypart daypart_from(const std::string& s) {
    if (s == "afternoon") return Daypart::Afternoon;
    if (s == "evening") return Daypart::Evening;
    if (s == "morning") return Daypart::Morning;
    throw DataError("unknown daypart: " + s);
}

std::string replace_once(std::string text, const std::string& slot, const std::string& value) {
    const auto pos = text.find(slot);
    if (pos == std::string::npos)
        throw DataError("template missing slot " + slot);
    return text.replace(pos, slot.size(), value);
}

}  // namespace

Json EmaResponse::to_json() const {
    Json j;
    j["participant_id"] = participant_id;
    j["ema_id"] = ema_id;
    j["completed_at"] = completed_at;
    j["items"] = items;
    Json ne;
    ne["occurred"] = negative_event.occurred;
    if (negative_event.intensity) ne["intensity"] = *negative_event.intensity;
    j["negative_event"] = ne;
    j["daypart"] = daypart_name(daypart);
    return j;
}

EmaResponse EmaResponse::from_json(const Json& j) {
    EmaResponse r;
    r.participant_id = j.at("participant_id").get<std::string>();
    r.ema_id = j.at("ema_id").get<std::string>();
    r.completed_at = j.at("completed_at").get<double>();
    const auto& items = j.at("items");
    if (!items.is_array() || items.size() != 13)
        throw DataError(r.ema_id + ": items must hold 13 scores");
    for (std::size_t i = 0; i < 13; ++i) r.items[i] = items[i].get<double>();
    const auto& ne = j.at("negative_event");
    r.negative_event.occurred = ne.at("occurred").get<bool>();
    if (ne.contains("intensity")) r.negative_event.intensity = ne["intensity"].get<double>();
    r.daypart = daypart_from(j.at("daypart").get<std::string>());
    r.validate();
    return r;
}

const std::array<SymptomCategory, 14>& category_roster() {
    static const std::array<SymptomCategory, 14> roster = {{
        {1, "Anhedonia",
         "In the past 4 hours, how much has the user shown little interest or pleasure in "
         "activities?"},
        {2, "DepressedMood",
         "In the past 4 hours, how much has the user appeared down, depressed, or hopeless?"},
        {3, "SleepDisturbance", "Last night, how much trouble did the user have with sleep?"},
        {4, "FatigueEnergy",
         "In the past 4 hours, how tired or low in energy has the user been?"},
        {5, "AppetiteChange",
         "In the past 4 hours, how much has the user shown a poor appetite or overeating?"},
        {6, "SelfWorthGuilt",
         "In the past 4 hours, how much has the user felt bad about themselves?"},
        {7, "Concentration",
         "In the past 4 hours, how much trouble has the user had concentrating?"},
        {8, "PsychomotorChange",
         "In the past 4 hours, how much has the user been moving or speaking more slowly than "
         "usual?"},
        {9, "SuicidalIdeation",
         "In the past 4 hours, how often has the user had thoughts of harming themselves or "
         "wishing to be dead?"},
        {10, "SomaticDiscomfort",
         "In the past 4 hours, how much has the user experienced headache, abdominal discomfort, "
         "or body aches?"},
        {11, "InvertedItem", "An inverted question randomized from Q1, Q4, or Q7."},
        {12, "AnxietyArousal",
         "In the past 4 hours, how much has the user felt nervous, anxious, or on edge?"},
        {13, "UncontrollableWorry",
         "In the past 4 hours, how much has the user been unable to stop or control worrying?"},
        {14, "NegativeEvent",
         "In the past 4 hours, did the user experience a negative event? If yes: How negative "
         "was the event?"},
    }};
    return roster;
}

const std::string& overall_summary_prompt() {
    static const std::string prompt =
        "Please summarize the user's overall mental and physical state in the past 4 hours, "
        "integrating mood, energy, sleep, appetite, concentration, and physical symptoms.";
    return prompt;
}

const char* to_string(Stage s) { return s == Stage::Template ? "template" : "enhanced"; }
const char* to_string(Kind k) { return k == Kind::Item ? "item" : "summary"; }
const char* to_string(SeverityLabel s) {
    switch (s) {
        case SeverityLabel::Mild: return "mild";
        case SeverityLabel::Moderate: return "moderate";
        case SeverityLabel::Severe: return "severe";
    }
    return "mild";
}

Json Narrative::to_json() const {
    Json j;
    j["kind"] = to_string(kind);
    j["stage"] = to_string(stage);
    j["text"] = text;
    j["ema_id"] = ema_id;
    j["participant_id"] = participant_id;
    if (category) j["category"] = *category;
    if (severity_label) j["severity_label"] = to_string(*severity_label);
    j["qc_trail"] = qc_trail;
    return j;
}

Narrative Narrative::from_json(const Json& j) {
    Narrative n;
    n.kind = j.at("kind").get<std::string>() == "summary" ? Kind::Summary : Kind::Item;
    n.stage = j.at("stage").get<std::string>() == "enhanced" ? Stage::Enhanced : Stage::Template;
    n.text = j.at("text").get<std::string>();
    n.ema_id = j.at("ema_id").get<std::string>();
    n.participant_id = j.value("participant_id", std::string{});
    if (j.contains("category")) n.category = j["category"].get<int>();
    if (j.contains("severity_label")) {
        const auto s = j["severity_label"].get<std::string>();
        n.severity_label = s == "severe"     ? SeverityLabel::Severe
                           : s == "moderate" ? SeverityLabel::Moderate
                                             : SeverityLabel::Mild;
    }
    if (j.contains("qc_trail")) n.qc_trail = j["qc_trail"];
    return n;
}

TemplateSet TemplateSet::load(const std::string& path) {
    const Json j = read_json_file(path);
    TemplateSet t;
    t.version = j.value("version", std::string{"unversioned"});
    const auto& phrases = j.at("bucket_phrases");
    if (!phrases.is_array() || phrases.size() != 4)
        throw ConfigError(path + ": bucket_phrases must hold 4 entries");
    for (std::size_t i = 0; i < 4; ++i) t.bucket_phrases[i] = phrases[i].get<std::string>();
    for (const auto& [key, value] : j.at("item_templates").items())
        t.item_templates[std::stoi(key)] = value.get<std::string>();
    t.negative_event_present = j.at("negative_event_present").get<std::string>();
    t.negative_event_absent = j.at("negative_event_absent").get<std::string>();
    t.summary_severity = j.at("summary_severity").get<std::string>();
    t.validate();
    return t;
}

void TemplateSet::validate() const {
    for (int c = 1; c <= 13; ++c)
        if (!item_templates.count(c))
            throw ConfigError("template set missing item template for category " +
                              std::to_string(c));
    for (const auto& [c, tmpl] : item_templates)
        if (tmpl.find("{phrase}") == std::string::npos)
            throw ConfigError("item template " + std::to_string(c) + " lacks {phrase} slot");
    if (negative_event_present.find("{phrase}") == std::string::npos)
        throw ConfigError("negative_event_present lacks {phrase} slot");
    if (summary_severity.find("{severity}") == std::string::npos)
        throw ConfigError("summary_severity lacks {severity} slot");
}

const std::string& bucket_phrase(const TemplateSet& templates, FrequencyBucket bucket) {
    return templates.bucket_phrases[static_cast<std::size_t>(bucket)];
}

Narrative render_item_narrative(int category_index, const EmaResponse& response,
                                const TemplateSet& templates) {
    if (category_index < 1 || category_index > 13)
        throw DataError("item narrative requires category 1..13, got " +
                        std::to_string(category_index));
    response.validate();
    const double score = response.items[static_cast<std::size_t>(category_index - 1)];
    const auto phrase = bucket_phrase(templates, bucket_frequency(score));

    Narrative n;
    n.kind = Kind::Item;
    n.stage = Stage::Template;
    n.ema_id = response.ema_id;
    n.participant_id = response.participant_id;
    n.category = category_index;
    n.text = replace_once(templates.item_templates.at(category_index), "{phrase}", phrase);
    return n;
}

std::string render_negative_event(const EmaResponse& response, const TemplateSet& templates) {
    response.validate();
    if (!response.negative_event.occurred) return templates.negative_event_absent;
    const auto phrase =
        bucket_phrase(templates, bucket_frequency(*response.negative_event.intensity));
    return replace_once(templates.negative_event_present, "{phrase}", phrase);
}

SeverityLabel classify_overall_severity(const EmaResponse& response) {
    response.validate();
    const double mean =
        std::accumulate(response.items.begin(), response.items.end(), 0.0) / 13.0;
    if (mean < 33.4) return SeverityLabel::Mild;
    if (mean < 66.7) return SeverityLabel::Moderate;
    return SeverityLabel::Severe;
}

Narrative render_summary(std::vector<Narrative> item_narratives,
                         const std::string& negative_fragment, SeverityLabel severity,
                         const TemplateSet& templates) {
    if (item_narratives.size() != 13)
        throw DataError("summary needs exactly 13 item narratives, got " +
                        std::to_string(item_narratives.size()));
    std::sort(item_narratives.begin(), item_narratives.end(),
              [](const Narrative& a, const Narrative& b) {
                  return a.category.value_or(0) < b.category.value_or(0);
              });
    const std::string& ema_id = item_narratives.front().ema_id;
    for (int c = 1; c <= 13; ++c) {
        const auto& n = item_narratives[static_cast<std::size_t>(c - 1)];
        if (n.category.value_or(0) != c)
            throw DataError("summary input missing category " + std::to_string(c));
        if (n.ema_id != ema_id)
            throw DataError("summary input mixes assessments " + ema_id + " and " + n.ema_id);
    }

    std::string text;
    for (const auto& n : item_narratives) {
        if (!text.empty()) text += ' ';
        text += n.text;
    }
    text += ' ';
    text += negative_fragment;
    text += ' ';
    text += replace_once(templates.summary_severity, "{severity}", to_string(severity));

    Narrative summary;
    summary.kind = Kind::Summary;
    summary.stage = Stage::Template;
    summary.text = text;
    summary.ema_id = ema_id;
    summary.participant_id = item_narratives.front().participant_id;
    summary.severity_label = severity;
    return summary;
}

gateway::ChatPrompt build_rewrite_prompt(const Narrative& template_narrative) {
    if (template_narrative.text.empty())
        throw DataError("rewrite prompt requires non-empty narrative text");
    gateway::ChatPrompt prompt;
    prompt.system =
        "You are both a mental health and language specialist experienced with clinical records "
        "concerning mental health conditions.\n"
        "Rewrite rule-based psychological assessment templates into fluent, engaging narrative "
        "passages, strictly preserving every factual detail and original severity description. "
        "These improved narratives serve as ground-truth labels for training AI models to "
        "predict mental health states using physiological sensor data (such as smartwatch "
        "readings).\n"
        "\n"
        "Paraphrasing Guidelines\n"
        "\n"
        "1. Factual Accuracy and Preservation. Retain every original severity level exactly as "
        "presented. Do not add any interpretations, clinical reasoning, or extra context. "
        "Preserve all frequency and intensity information without omission or alteration.\n"
        "\n"
        "2. Natural, Readable Language. Remove mechanical or repetitive phrasing. Employ varied "
        "sentence structures and natural transitions between symptoms. Ensure that the "
        "narrative reads as a natural human description.\n"
        "\n"
        "3. Consistency in Terminology and Tone. Use identical language for identical severity "
        "levels across all narratives. Maintain a uniform style and tone throughout all "
        "paraphrased outputs.\n"
        "\n"
        "4. Accessibility and Clarity. Write in straightforward, accessible language suitable "
        "for general audiences. Avoid technical or clinical terms whenever possible. Use "
        "person-first, stigma-free wording. Keep sentences clear, concise, and complete.";
    prompt.user =
        "Your task: Transform the below rule-based assessment into a well-structured, fluent "
        "narrative that fully preserves all factual content and improves readability.\n"
        "\n"
        "Original Assessment: " +
        template_narrative.text +
        "\n"
        "\n"
        "Enhanced Narrative:";
    return prompt;
}

}  // namespace lens::narrative
