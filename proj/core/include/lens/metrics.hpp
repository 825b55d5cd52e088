#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lens/gateway.hpp"
#include "lens/jsonl.hpp"

namespace lens::metrics {

// Lowercase, punctuation to spaces, split on whitespace.
std::vector<std::string> tokenize_simple(const std::string& text);

struct PrfScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

PrfScore rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                 std::size_t n);
PrfScore rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Geometric mean of clipped 1..4-gram precisions (add-1 smoothing on zero
// counts) times the brevity penalty exp(1 - |ref|/|cand|) for short
// candidates. Reference length is the closest to the candidate's.
double bleu4(const std::vector<std::string>& candidate,
             const std::vector<std::vector<std::string>>& references);

// Convenience overloads running tokenize_simple first.
PrfScore rouge_n(const std::string& candidate, const std::string& reference, std::size_t n);
PrfScore rouge_l(const std::string& candidate, const std::string& reference);
double bleu4(const std::string& candidate, const std::string& reference);

// The 14 judged symptom categories, in roster order.
const std::array<std::string, 14>& symptom_categories();

struct CategoryEval {
    int ref_presence = 0;   // a_j
    int pred_presence = 0;  // a_j hat
    int ref_severity = 0;   // s_j in 0..3
    int pred_severity = 0;  // s_j hat
};

struct SymptomRecord {
    std::array<CategoryEval, 14> categories{};
    bool repaired = false;  // a presence-0 severity got forced to 0 on intake
};

// Parses a symptom_evaluation JSON value; enforces presence 0 => severity 0,
// repairing (with the flag set) rather than rejecting.
SymptomRecord record_from_json(const Json& j);
Json record_to_json(const SymptomRecord& r);

struct SeverityPair {
    int ref_severity = 0;
    int pred_severity = 0;
};

enum class Aggregation { Micro, Macro };

struct CoverageScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long tp = 0;
    long fp = 0;
    long fn = 0;
};

// TP = correct mentions, FP = hallucinations, FN = omissions, pooled over
// categories and records (micro) or averaged per record (macro).
CoverageScore coverage(const std::vector<SymptomRecord>& records,
                       Aggregation mode = Aggregation::Micro);

// Ordinal weight for one category: 0 on presence mismatch, else 1 / 0.75 /
// 0.25 / 0 for |s - s_hat| = 0 / 1 / 2 / >=3.
double ordinal_weight(int ref_presence, int pred_presence, int ref_severity, int pred_severity);
double ordinal_weight(int delta);  // severity-only variant

// Mean weight over categories present on either side. Empty scoring set
// across all records -> nullopt.
std::optional<double> severity_alignment(const std::vector<SymptomRecord>& records,
                                         Aggregation mode = Aggregation::Micro);

// Mean ordinal weight over |ref - pred|, no presence term.
double item_alignment(const std::vector<SeverityPair>& pairs);

gateway::ChatPrompt build_symptom_eval_prompt(const std::string& reference,
                                              const std::string& prediction);
SymptomRecord extract_symptom_record(gateway::ChatBackend& backend, const std::string& reference,
                                     const std::string& prediction);

gateway::ChatPrompt build_qa_eval_prompt(const std::string& question, const std::string& reference,
                                         const std::string& prediction);
SeverityPair extract_severity_pair(gateway::ChatBackend& backend, const std::string& question,
                                   const std::string& reference, const std::string& prediction);

struct MetricReport {
    PrfScore rouge1, rouge2, rougeL;
    double bleu = 0.0;
    std::optional<double> meteor;      // slot only; needs a synonym resource
    std::optional<double> bert_score;  // slot only; needs an embedding model
    std::optional<CoverageScore> cov;
    std::optional<double> alignment;
    std::size_t n_samples = 0;

    Json to_json() const;
};

}  // namespace lens::metrics
