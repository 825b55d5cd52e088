#include "lens/qa_assembly.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "lens/errors.hpp"

namespace lens::qa {

ParaphraseBank ParaphraseBank::load(const std::string& path) {
    const Json j = read_json_file(path);
    ParaphraseBank bank;
    for (const auto& [key, variants] : j.items())
        bank.banks_[key] = variants.get<std::vector<std::string>>();
    bank.validate();
    return bank;
}

const std::vector<std::string>& ParaphraseBank::variants(const std::string& key) const {
    const auto it = banks_.find(key);
    if (it == banks_.end()) throw DataError("paraphrase bank has no key: " + key);
    return it->second;
}

std::vector<std::string> ParaphraseBank::keys() const {
    std::vector<std::string> out;
    for (const auto& [key, variants] : banks_) out.push_back(key);
    return out;
}

void ParaphraseBank::validate() const {
    for (const auto& [key, variants] : banks_) {
        if (variants.size() != 10)
            throw ConfigError("paraphrase bank key " + key + " must hold exactly 10 variants, has " +
                              std::to_string(variants.size()));
        std::set<std::string> distinct(variants.begin(), variants.end());
        if (distinct.size() != variants.size())
            throw ConfigError("paraphrase bank key " + key + " has duplicate variants");
    }
}

std::string ParaphraseBank::key_for_category(int category_index) {
    if (category_index < 1 || category_index > 13)
        throw DataError("paraphrase key requires category 1..13");
    return "category_" + std::to_string(category_index);
}

std::string sample_paraphrase(const ParaphraseBank& bank, const std::string& key, Rng& rng) {
    const auto& variants = bank.variants(key);
    const auto idx =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(variants.size()) - 1));
    return variants[idx];
}

const char* to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

Split split_from(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw DataError("unknown split: " + s);
}

Split SplitAssignment::of(const std::string& participant_id) const {
    const auto it = by_participant.find(participant_id);
    if (it == by_participant.end())
        throw DataError("participant not in split assignment: " + participant_id);
    return it->second;
}

std::array<std::size_t, 3> SplitAssignment::sizes() const {
    std::array<std::size_t, 3> sizes{};
    for (const auto& [pid, split] : by_participant) ++sizes[static_cast<std::size_t>(split)];
    return sizes;
}

Json SplitAssignment::to_json() const {
    Json assignment = Json::object();
    for (const auto& [pid, split] : by_participant) assignment[pid] = to_string(split);
    return Json{{"assignment", assignment}, {"ratios", ratios}, {"seed", seed}};
}

SplitAssignment split_participants(std::vector<std::string> participant_ids,
                                   std::array<double, 3> ratios, std::uint64_t seed) {
    double ratio_sum = 0.0;
    for (const double r : ratios) {
        if (r <= 0.0) throw ConfigError("split ratios must be positive");
        ratio_sum += r;
    }
    if (std::abs(ratio_sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

    std::sort(participant_ids.begin(), participant_ids.end());
    participant_ids.erase(std::unique(participant_ids.begin(), participant_ids.end()),
                          participant_ids.end());
    const std::size_t n = participant_ids.size();
    if (n < 3) throw DataError("need at least as many participants as splits");

    Rng rng(seed);
    rng.shuffle(participant_ids);

    std::array<std::size_t, 3> counts{};
    counts[0] = static_cast<std::size_t>(std::floor(ratios[0] * static_cast<double>(n)));
    counts[1] = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n)));
    counts[2] = n - counts[0] - counts[1];

    // flooring can zero a split even though n >= 3; borrow from the largest
    for (std::size_t s = 0; s < 3; ++s) {
        while (counts[s] == 0) {
            const auto largest = static_cast<std::size_t>(
                std::max_element(counts.begin(), counts.end()) - counts.begin());
            --counts[largest];
            ++counts[s];
        }
    }

    SplitAssignment assignment;
    assignment.ratios = ratios;
    assignment.seed = seed;
    std::size_t cursor = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t i = 0; i < counts[s]; ++i)
            assignment.by_participant[participant_ids[cursor++]] = static_cast<Split>(s);
    }
    return assignment;
}

const char* to_string(QaKind k) {
    switch (k) {
        case QaKind::Item: return "item";
        case QaKind::Summary: return "summary";
        case QaKind::InstructionFollowing: return "instruction_following";
        case QaKind::AlignmentRandom: return "alignment_random";
    }
    return "item";
}

QaKind qa_kind_from(const std::string& s) {
    if (s == "item") return QaKind::Item;
    if (s == "summary") return QaKind::Summary;
    if (s == "instruction_following") return QaKind::InstructionFollowing;
    if (s == "alignment_random") return QaKind::AlignmentRandom;
    throw DataError("unknown qa kind: " + s);
}

Json QaPair::to_json() const {
    Json j;
    j["id"] = id;
    j["kind"] = to_string(kind);
    j["question"] = question;
    j["answer"] = answer;
    j["ema_id"] = ema_id;
    j["window_ref"] = window_ref;
    j["category"] = category ? Json(*category) : Json(nullptr);
    j["split"] = to_string(split);
    return j;
}

QaPair QaPair::from_json(const Json& j) {
    QaPair p;
    p.id = j.at("id").get<std::string>();
    p.kind = qa_kind_from(j.at("kind").get<std::string>());
    p.question = j.at("question").get<std::string>();
    p.answer = j.at("answer").get<std::string>();
    p.ema_id = j.value("ema_id", std::string{});
    p.window_ref = j.value("window_ref", std::string{});
    if (j.contains("category") && !j["category"].is_null()) p.category = j["category"].get<int>();
    p.split = split_from(j.value("split", std::string{"train"}));
    return p;
}

std::vector<QaPair> build_item_qa(const narrative::EmaResponse& ema, const std::string& window_ref,
                                  const std::map<int, narrative::Narrative>& accepted_items,
                                  const ParaphraseBank& bank, Rng& rng,
                                  std::size_t items_per_ema) {
    std::vector<int> available;
    for (const auto& [category, item] : accepted_items) {
        if (item.ema_id != ema.ema_id)
            throw DataError("item narrative from wrong assessment: " + item.ema_id);
        available.push_back(category);
    }
    if (available.empty())
        throw DataError(ema.ema_id + ": no accepted item narratives to sample from");

    // uniform sample without replacement, capped by availability
    const std::size_t take = std::min(items_per_ema, available.size());
    std::vector<int> chosen;
    for (std::size_t i = 0; i < take; ++i) {
        const auto idx =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(available.size()) - 1));
        chosen.push_back(available[idx]);
        available.erase(available.begin() + static_cast<long>(idx));
    }
    std::sort(chosen.begin(), chosen.end());

    std::vector<QaPair> pairs;
    for (const int category : chosen) {
        QaPair p;
        p.kind = QaKind::Item;
        p.category = category;
        p.ema_id = ema.ema_id;
        p.window_ref = window_ref;
        p.id = ema.ema_id + ":item:" + std::to_string(category);
        p.question = sample_paraphrase(bank, ParaphraseBank::key_for_category(category), rng);
        p.answer = accepted_items.at(category).text;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

QaPair build_summary_qa(const narrative::EmaResponse& ema, const std::string& window_ref,
                        const narrative::Narrative& accepted_summary, const ParaphraseBank& bank,
                        Rng& rng) {
    if (accepted_summary.ema_id != ema.ema_id)
        throw DataError("summary narrative from wrong assessment: " + accepted_summary.ema_id);
    QaPair p;
    p.kind = QaKind::Summary;
    p.ema_id = ema.ema_id;
    p.window_ref = window_ref;
    p.id = ema.ema_id + ":summary";
    p.question = sample_paraphrase(bank, ParaphraseBank::summary_key(), rng);
    p.answer = accepted_summary.text;
    return p;
}

void MixSpec::validate() const {
    if (weights.empty()) throw ConfigError("mix spec needs at least one source");
    double sum = 0.0;
    for (const auto& [name, w] : weights) {
        if (w <= 0.0) throw ConfigError("mix weight for " + name + " must be > 0");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("mix weights must sum to 1");
}

MixSpec MixSpec::from_json(const Json& j) {
    MixSpec spec;
    for (const auto& [name, w] : j.items()) spec.weights.emplace_back(name, w.get<double>());
    spec.validate();
    return spec;
}

std::vector<std::size_t> apportion_counts(const std::vector<double>& ratios, std::size_t total) {
    std::vector<std::size_t> counts(ratios.size());
    std::vector<std::pair<double, std::size_t>> remainders;  // (fraction, index)
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        const double quota = ratios[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(quota));
        assigned += counts[i];
        remainders.emplace_back(quota - std::floor(quota), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < total; ++r, ++assigned)
        ++counts[remainders[r % remainders.size()].second];
    return counts;
}

std::vector<QaPair> mix_datasets(const std::map<std::string, std::vector<QaPair>>& sources,
                                 const MixSpec& spec, std::size_t total_n, std::uint64_t seed,
                                 bool with_replacement) {
    spec.validate();
    std::vector<double> ratios;
    for (const auto& [name, w] : spec.weights) ratios.push_back(w);
    const auto counts = apportion_counts(ratios, total_n);

    Rng rng(seed);
    std::vector<QaPair> mixed;
    mixed.reserve(total_n);
    for (std::size_t s = 0; s < spec.weights.size(); ++s) {
        const auto& name = spec.weights[s].first;
        const auto it = sources.find(name);
        if (it == sources.end()) throw DataError("mix source missing: " + name);
        const auto& pool = it->second;
        if (pool.empty()) throw DataError("mix source empty: " + name);
        if (pool.size() < counts[s] && !with_replacement)
            throw DataError("mix source " + name + " has " + std::to_string(pool.size()) +
                            " pairs, needs " + std::to_string(counts[s]) +
                            " (enable sampling with replacement)");
        if (with_replacement) {
            for (std::size_t i = 0; i < counts[s]; ++i) {
                const auto idx = static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1));
                mixed.push_back(pool[idx]);
            }
        } else {
            std::vector<std::size_t> order(pool.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            rng.shuffle(order);
            for (std::size_t i = 0; i < counts[s]; ++i) mixed.push_back(pool[order[i]]);
        }
    }
    rng.shuffle(mixed);
    return mixed;
}

int sample_random_length(Rng& rng) { return static_cast<int>(rng.uniform_int(64, 1024)); }

std::string serialize_series(const std::vector<double>& values) {
    std::string out = "[";
    char buf[32];
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.1f", values[i]);
        if (i) out += ", ";
        out += buf;
    }
    out += "]";
    return out;
}

namespace {

// Canonical prompt order with the display labels the prompt uses.
struct StreamLine {
    const char* stream;
    const char* label;
};

constexpr StreamLine kPromptStreams[] = {
    {"heart_rate", "Heart rate (1 reading per minute, length 1440)"},
    {"zcr", "Pseudoactigraphy (accelerometer-based movement intensity x zero-crossing rate, "
            "length 480)"},
    {"steps", "Steps per minute (length 240)"},
    {"stress", "Stress level (length 240)"},
    {"gps_lon", "GPS longitude (length 24)"},
    {"gps_lat", "GPS latitude (length 24)"},
    {"phone_lock", "Phone unlock status (binary 0/1 per minute, length 240)"},
};

std::string format_scalar(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

}  // namespace

gateway::ChatPrompt build_text_baseline_prompt(const ingest::SensorWindow& window,
                                               const std::optional<std::string>& question) {
    std::string inputs = "Time-series Inputs:\n";
    int index = 1;
    for (const auto& line : kPromptStreams) {
        const auto it = window.streams.find(line.stream);
        if (it == window.streams.end())
            throw DataError("window " + window.ema_id + " missing stream " + line.stream);
        inputs += std::to_string(index++) + ". " + line.label + " <ts>" +
                  serialize_series(it->second.values) + "</ts>\n";
    }

    const std::string sleep_conversation =
        "Sleep duration (hours): " + format_scalar(window.sleep_hours) +
        "\nConversation length (seconds): " + format_scalar(window.conversation_s);

    gateway::ChatPrompt prompt;
    if (!question) {
        prompt.system =
            "You are a clinical reasoning assistant that interprets physiological and behavioral "
            "time-series data to infer a user's psychological and physical wellbeing.";
        prompt.user =
            "You will receive seven time-series streams recorded over the last 4 hours, each "
            "represented in text form, along with two summary variables (sleep duration and "
            "conversation length).\n"
            "\n" +
            inputs +
            "\n" +
            sleep_conversation +
            "\n"
            "\n"
            "Task:\n"
            "Using only the provided textual data, produce a short clinical summary (about one "
            "concise paragraph) describing the user's psychological and physical state over the "
            "last 4 hours.\n"
            "\n"
            "Your description should resemble a human-written mental-health assessment and cover "
            "these symptom dimensions:\n"
            "- Interest or pleasure in activities\n"
            "- Depressed or hopeless mood\n"
            "- Sleep quality or restfulness\n"
            "- Energy or fatigue\n"
            "- Appetite or eating pattern\n"
            "- Self-esteem or self-criticism\n"
            "- Concentration or focus\n"
            "- Psychomotor activity (slowed or restless)\n"
            "- Thoughts of self-harm or hopelessness\n"
            "- Physical discomfort (e.g., headache, stomach, or body aches)\n"
            "- Nervousness or anxiety\n"
            "- Uncontrollable worry\n"
            "- Exposure to recent negative events\n"
            "\n"
            "Output Format:\n"
            "Return only the narrative summary paragraph. Do not include bullet points, lists, "
            "or section headers. End with a brief statement summarizing the likely mood severity "
            "(e.g., mild, moderate, or severe depression/anxiety).";
    } else {
        prompt.system =
            "You are a clinical reasoning assistant that interprets physiological and behavioral "
            "time-series data to answer clinical wellbeing questions about the user.";
        prompt.user =
            "You will receive seven time-series streams recorded over the last 4 hours, each "
            "represented in text form, along with two summary variables (sleep duration and "
            "conversation length).\n"
            "\n" +
            inputs +
            "\n" +
            sleep_conversation +
            "\n"
            "\n"
            "Question:\n" +
            *question +
            "\n"
            "\n"
            "Answer Requirements:\n"
            "- Provide a concise, clinically grounded answer in one or two sentences.\n"
            "- Refer only to the information implied by the time-series data; do not add "
            "external facts.\n"
            "- If the data is insufficient, explicitly say so.\n"
            "\n"
            "Answer:";
    }
    return prompt;
}

}  // namespace lens::qa
