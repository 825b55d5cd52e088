#include "lens/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "lens/errors.hpp"

namespace lens::metrics {

std::vector<std::string> tokenize_simple(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                          tokens.begin() + static_cast<long>(i + n))];
    return counts;
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

PrfScore rouge_n(const std::vector<std::string>& candidate,
                 const std::vector<std::string>& reference, std::size_t n) {
    if (n < 1) throw DataError("rouge_n: n must be >= 1");
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    std::size_t cand_total = 0, ref_total = 0, overlap = 0;
    for (const auto& [gram, count] : cand) cand_total += count;
    for (const auto& [gram, count] : ref) ref_total += count;
    for (const auto& [gram, count] : cand) {
        const auto it = ref.find(gram);
        if (it != ref.end()) overlap += std::min(count, it->second);
    }
    PrfScore s;
    s.precision = cand_total ? static_cast<double>(overlap) / static_cast<double>(cand_total) : 0.0;
    s.recall = ref_total ? static_cast<double>(overlap) / static_cast<double>(ref_total) : 0.0;
    s.f = harmonic(s.precision, s.recall);
    return s;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), curr(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            curr[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
        }
        std::swap(prev, curr);
    }
    return prev[b.size()];
}

PrfScore rouge_l(const std::vector<std::string>& candidate,
                 const std::vector<std::string>& reference) {
    const auto lcs = static_cast<double>(lcs_length(candidate, reference));
    PrfScore s;
    s.precision = candidate.empty() ? 0.0 : lcs / static_cast<double>(candidate.size());
    s.recall = reference.empty() ? 0.0 : lcs / static_cast<double>(reference.size());
    s.f = harmonic(s.precision, s.recall);
    return s;
}

double bleu4(const std::vector<std::string>& candidate,
             const std::vector<std::vector<std::string>>& references) {
    if (references.empty()) throw DataError("bleu4: at least one reference required");
    if (candidate.empty()) return 0.0;

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto cand = ngram_counts(candidate, n);
        NgramCounts best_ref;
        for (const auto& ref : references) {
            for (const auto& [gram, count] : ngram_counts(ref, n)) {
                auto& slot = best_ref[gram];
                slot = std::max(slot, count);
            }
        }
        std::size_t total = 0, clipped = 0;
        for (const auto& [gram, count] : cand) {
            total += count;
            const auto it = best_ref.find(gram);
            if (it != best_ref.end()) clipped += std::min(count, it->second);
        }
        double p;
        if (clipped == 0) {
            p = static_cast<double>(clipped + 1) / static_cast<double>(total + 1);  // add-1
        } else {
            p = static_cast<double>(clipped) / static_cast<double>(total);
        }
        log_sum += std::log(p);
    }

    // closest reference length, shorter on ties
    const auto cand_len = static_cast<long>(candidate.size());
    long ref_len = static_cast<long>(references.front().size());
    for (const auto& ref : references) {
        const auto len = static_cast<long>(ref.size());
        const auto d_new = std::abs(len - cand_len);
        const auto d_old = std::abs(ref_len - cand_len);
        if (d_new < d_old || (d_new == d_old && len < ref_len)) ref_len = len;
    }
    double bp = 1.0;
    if (cand_len < ref_len)
        bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    return bp * std::exp(log_sum / 4.0);
}

PrfScore rouge_n(const std::string& candidate, const std::string& reference, std::size_t n) {
    return rouge_n(tokenize_simple(candidate), tokenize_simple(reference), n);
}
PrfScore rouge_l(const std::string& candidate, const std::string& reference) {
    return rouge_l(tokenize_simple(candidate), tokenize_simple(reference));
}
double bleu4(const std::string& candidate, const std::string& reference) {
    return bleu4(tokenize_simple(candidate), {tokenize_simple(reference)});
}

const std::array<std::string, 14>& symptom_categories() {
    static const std::array<std::string, 14> cats = {
        "Anhedonia",        "DepressedMood",     "SleepDisturbance", "FatigueEnergy",
        "AppetiteChange",   "SelfWorthGuilt",    "Concentration",    "PsychomotorChange",
        "SuicidalIdeation", "SomaticDiscomfort", "AnxietyArousal",   "UncontrollableWorry",
        "NegativeEvent",    "OverallSeverity"};
    return cats;
}

SymptomRecord record_from_json(const Json& j) {
    if (auto err = gateway::validate_schema("symptom_evaluation", j))
        throw DataError("invalid symptom evaluation: " + *err);
    SymptomRecord r;
    const auto& cats = symptom_categories();
    for (std::size_t c = 0; c < cats.size(); ++c) {
        const auto& entry = j.at(cats[c]);
        CategoryEval e;
        e.ref_presence = entry.at("ref_presence").get<int>();
        e.pred_presence = entry.at("pred_presence").get<int>();
        e.ref_severity = entry.at("ref_severity").get<int>();
        e.pred_severity = entry.at("pred_severity").get<int>();
        if (e.ref_presence == 0 && e.ref_severity != 0) {
            e.ref_severity = 0;
            r.repaired = true;
        }
        if (e.pred_presence == 0 && e.pred_severity != 0) {
            e.pred_severity = 0;
            r.repaired = true;
        }
        r.categories[c] = e;
    }
    return r;
}

Json record_to_json(const SymptomRecord& r) {
    Json j = Json::object();
    const auto& cats = symptom_categories();
    for (std::size_t c = 0; c < cats.size(); ++c) {
        const auto& e = r.categories[c];
        j[cats[c]] = {{"ref_presence", e.ref_presence},
                      {"pred_presence", e.pred_presence},
                      {"ref_severity", e.ref_severity},
                      {"pred_severity", e.pred_severity}};
    }
    return j;
}

namespace {

CoverageScore coverage_from_counts(long tp, long fp, long fn) {
    CoverageScore s;
    s.tp = tp;
    s.fp = fp;
    s.fn = fn;
    s.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    s.f1 = harmonic(s.precision, s.recall);
    return s;
}

}  // namespace

CoverageScore coverage(const std::vector<SymptomRecord>& records, Aggregation mode) {
    if (records.empty()) throw DataError("coverage: at least one record required");
    if (mode == Aggregation::Micro) {
        long tp = 0, fp = 0, fn = 0;
        for (const auto& r : records) {
            for (const auto& e : r.categories) {
                tp += e.ref_presence == 1 && e.pred_presence == 1;
                fp += e.ref_presence == 0 && e.pred_presence == 1;
                fn += e.ref_presence == 1 && e.pred_presence == 0;
            }
        }
        return coverage_from_counts(tp, fp, fn);
    }
    CoverageScore macro;
    for (const auto& r : records) {
        long tp = 0, fp = 0, fn = 0;
        for (const auto& e : r.categories) {
            tp += e.ref_presence == 1 && e.pred_presence == 1;
            fp += e.ref_presence == 0 && e.pred_presence == 1;
            fn += e.ref_presence == 1 && e.pred_presence == 0;
        }
        const auto per = coverage_from_counts(tp, fp, fn);
        macro.precision += per.precision;
        macro.recall += per.recall;
        macro.f1 += per.f1;
        macro.tp += tp;
        macro.fp += fp;
        macro.fn += fn;
    }
    const auto n = static_cast<double>(records.size());
    macro.precision /= n;
    macro.recall /= n;
    macro.f1 /= n;
    return macro;
}

double ordinal_weight(int delta) {
    switch (std::abs(delta)) {
        case 0: return 1.0;
        case 1: return 0.75;
        case 2: return 0.25;
        default: return 0.0;
    }
}

double ordinal_weight(int ref_presence, int pred_presence, int ref_severity, int pred_severity) {
    if (ref_presence != pred_presence) return 0.0;
    return ordinal_weight(ref_severity - pred_severity);
}

std::optional<double> severity_alignment(const std::vector<SymptomRecord>& records,
                                         Aggregation mode) {
    if (records.empty()) throw DataError("severity_alignment: at least one record required");
    if (mode == Aggregation::Micro) {
        double sum = 0.0;
        std::size_t scored = 0;
        for (const auto& r : records) {
            for (const auto& e : r.categories) {
                if (e.ref_presence == 1 || e.pred_presence == 1) {
                    sum += ordinal_weight(e.ref_presence, e.pred_presence, e.ref_severity,
                                          e.pred_severity);
                    ++scored;
                }
            }
        }
        if (scored == 0) return std::nullopt;
        return sum / static_cast<double>(scored);
    }
    double sum = 0.0;
    std::size_t with_score = 0;
    for (const auto& r : records) {
        double per = 0.0;
        std::size_t scored = 0;
        for (const auto& e : r.categories) {
            if (e.ref_presence == 1 || e.pred_presence == 1) {
                per += ordinal_weight(e.ref_presence, e.pred_presence, e.ref_severity,
                                      e.pred_severity);
                ++scored;
            }
        }
        if (scored > 0) {
            sum += per / static_cast<double>(scored);
            ++with_score;
        }
    }
    if (with_score == 0) return std::nullopt;
    return sum / static_cast<double>(with_score);
}

double item_alignment(const std::vector<SeverityPair>& pairs) {
    if (pairs.empty()) throw DataError("item_alignment: at least one pair required");
    double sum = 0.0;
    for (const auto& p : pairs) {
        if (p.ref_severity < 0 || p.ref_severity > 3 || p.pred_severity < 0 || p.pred_severity > 3)
            throw DataError("item_alignment: severities must be in 0..3");
        sum += ordinal_weight(p.ref_severity - p.pred_severity);
    }
    return sum / static_cast<double>(pairs.size());
}

gateway::ChatPrompt build_symptom_eval_prompt(const std::string& reference,
                                              const std::string& prediction) {
    if (reference.empty() || prediction.empty())
        throw DataError("symptom eval prompt requires two non-empty texts");
    gateway::ChatPrompt prompt;
    std::string system =
        "You are a clinical evaluation model. Your task is to extract symptom information from "
        "two texts:\n"
        "a ground-truth reference summary and a model-generated prediction summary.\n"
        "Do not interpret or rewrite either text.\n"
        "Do not generate explanations or narrative.\n"
        "You must only evaluate whether symptoms are present and how severe they are.\n"
        "\n"
        "You must evaluate the following 14 symptom categories:\n";
    const char* descriptions[] = {"Anhedonia (loss of interest or pleasure)",
                                  "DepressedMood",
                                  "SleepDisturbance",
                                  "FatigueEnergy",
                                  "AppetiteChange",
                                  "SelfWorthGuilt",
                                  "Concentration",
                                  "PsychomotorChange",
                                  "SuicidalIdeation",
                                  "SomaticDiscomfort",
                                  "AnxietyArousal",
                                  "UncontrollableWorry",
                                  "NegativeEvent",
                                  "OverallSeverity"};
    for (int i = 0; i < 14; ++i)
        system += std::to_string(i + 1) + ". " + descriptions[i] + "\n";
    system +=
        "\n"
        "Severity scale is ordinal and must be inferred from the overall semantic strength of "
        "the description.\n"
        "If a symptom is not present in a text, you must set both presence and severity to 0.\n"
        "\n"
        "Severity Scale:\n"
        "0 = Not mentioned/None, 1 = Mild, 2 = Moderate, 3 = Severe\n"
        "\n"
        "Respond with only a JSON object keyed by the 14 category names. Each category holds an "
        "object with integer fields ref_presence (0 or 1), pred_presence (0 or 1), ref_severity "
        "(0-3), and pred_severity (0-3).";
    prompt.system = std::move(system);
    prompt.user = "Reference Summary:\n" + reference + "\n\nPrediction Summary:\n" + prediction;
    return prompt;
}

SymptomRecord extract_symptom_record(gateway::ChatBackend& backend, const std::string& reference,
                                     const std::string& prediction) {
    const auto prompt = build_symptom_eval_prompt(reference, prediction);
    const Json raw = gateway::complete_structured(backend, prompt, "symptom_evaluation",
                                                  gateway::judge_params());
    return record_from_json(raw);
}

gateway::ChatPrompt build_qa_eval_prompt(const std::string& question, const std::string& reference,
                                         const std::string& prediction) {
    if (question.empty() || reference.empty() || prediction.empty())
        throw DataError("qa eval prompt requires non-empty question, reference, and prediction");
    gateway::ChatPrompt prompt;
    prompt.system =
        "You are a clinical evaluation model. Your task is to assess the severity of a symptom "
        "or behavior\n"
        "described in two texts: a ground-truth reference and a model-generated prediction.\n"
        "\n"
        "For each text, output a severity score from 0 to 3:\n"
        "- 0: No symptom / absent / not at all\n"
        "- 1: Mild / occasionally / somewhat\n"
        "- 2: Moderate / often / frequently\n"
        "- 3: Severe / almost always / very frequently\n"
        "\n"
        "Base your judgment on the semantic intensity and frequency descriptors in each text.\n"
        "Do not add explanations or any additional fields.\n"
        "\n"
        "Respond with only a JSON object of the form {\"ref_severity\": 0-3, "
        "\"pred_severity\": 0-3}.";
    prompt.user =
        "Question: " + question + "\n\nReference: " + reference + "\n\nPrediction: " + prediction;
    return prompt;
}

SeverityPair extract_severity_pair(gateway::ChatBackend& backend, const std::string& question,
                                   const std::string& reference, const std::string& prediction) {
    const auto prompt = build_qa_eval_prompt(question, reference, prediction);
    const Json raw =
        gateway::complete_structured(backend, prompt, "severity_pair", gateway::judge_params());
    return {raw.at("ref_severity").get<int>(), raw.at("pred_severity").get<int>()};
}

Json MetricReport::to_json() const {
    auto prf = [](const PrfScore& s) {
        return Json{{"precision", s.precision}, {"recall", s.recall}, {"f", s.f}};
    };
    Json j;
    j["rouge1"] = prf(rouge1);
    j["rouge2"] = prf(rouge2);
    j["rougeL"] = prf(rougeL);
    j["bleu4"] = bleu;
    j["meteor"] = meteor ? Json(*meteor) : Json(nullptr);
    j["bert_score"] = bert_score ? Json(*bert_score) : Json(nullptr);
    if (cov) {
        j["coverage"] = Json{{"precision", cov->precision}, {"recall", cov->recall},
                             {"f1", cov->f1},               {"tp", cov->tp},
                             {"fp", cov->fp},               {"fn", cov->fn}};
    } else {
        j["coverage"] = nullptr;
    }
    j["alignment"] = alignment ? Json(*alignment) : Json(nullptr);
    j["n_samples"] = n_samples;
    return j;
}

}  // namespace lens::metrics
