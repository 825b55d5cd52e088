#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lens/gateway.hpp"
#include "lens/jsonl.hpp"
#include "lens/narrative.hpp"
#include "lens/rng.hpp"
#include "lens/sensor_ingest.hpp"

namespace lens::qa {

// Ten lexically distinct phrasings per question; keys are category names
// (1..13) plus "summary".
class ParaphraseBank {
public:
    static ParaphraseBank load(const std::string& path);

    const std::vector<std::string>& variants(const std::string& key) const;
    bool has(const std::string& key) const { return banks_.count(key) > 0; }
    std::vector<std::string> keys() const;
    void validate() const;  // exactly 10 per key, pairwise distinct

    static std::string key_for_category(int category_index);  // 1..13
    static std::string summary_key() { return "summary"; }

private:
    std::map<std::string, std::vector<std::string>> banks_;
};

std::string sample_paraphrase(const ParaphraseBank& bank, const std::string& key, Rng& rng);

enum class Split { Train, Val, Test };
const char* to_string(Split s);
Split split_from(const std::string& s);

struct SplitAssignment {
    std::map<std::string, Split> by_participant;
    std::array<double, 3> ratios{};
    std::uint64_t seed = 0;

    Split of(const std::string& participant_id) const;
    std::array<std::size_t, 3> sizes() const;
    Json to_json() const;
};

// Seeded shuffle, floor-sized train and val cuts, test takes the remainder.
// Splits left empty by flooring borrow one id from the largest split so the
// partition stays total whenever ids >= 3.
SplitAssignment split_participants(std::vector<std::string> participant_ids,
                                   std::array<double, 3> ratios, std::uint64_t seed);

enum class QaKind { Item, Summary, InstructionFollowing, AlignmentRandom };
const char* to_string(QaKind k);
QaKind qa_kind_from(const std::string& s);

struct QaPair {
    std::string id;
    QaKind kind = QaKind::Item;
    std::string question;
    std::string answer;
    std::string ema_id;
    std::string window_ref;
    std::optional<int> category;  // item pairs only
    Split split = Split::Train;

    Json to_json() const;
    static QaPair from_json(const Json& j);
};

// Samples `items_per_ema` categories (uniform, no replacement) among those
// with accepted item narratives; one pair per sampled category.
std::vector<QaPair> build_item_qa(const narrative::EmaResponse& ema, const std::string& window_ref,
                                  const std::map<int, narrative::Narrative>& accepted_items,
                                  const ParaphraseBank& bank, Rng& rng,
                                  std::size_t items_per_ema = 2);

QaPair build_summary_qa(const narrative::EmaResponse& ema, const std::string& window_ref,
                        const narrative::Narrative& accepted_summary, const ParaphraseBank& bank,
                        Rng& rng);

struct MixSpec {
    std::vector<std::pair<std::string, double>> weights;  // (source name, ratio), ratios sum to 1
    void validate() const;

    static MixSpec from_json(const Json& j);
};

// Largest-remainder apportionment; counts always sum to total and each
// deviates from ratio*total by less than one.
std::vector<std::size_t> apportion_counts(const std::vector<double>& ratios, std::size_t total);

std::vector<QaPair> mix_datasets(const std::map<std::string, std::vector<QaPair>>& sources,
                                 const MixSpec& spec, std::size_t total_n, std::uint64_t seed,
                                 bool with_replacement = false);

// Uniform integer in [64, 1024] for the variable-length alignment subset.
int sample_random_length(Rng& rng);

// Values rendered as "[v1, v2, ...]" with one decimal.
std::string serialize_series(const std::vector<double>& values);

// Narrative prompt when `question` is empty, QA prompt otherwise; each
// placeholder span carries the stream's serialized values in the canonical
// order heart_rate, zcr, steps, stress, gps_lon, gps_lat, phone_lock.
gateway::ChatPrompt build_text_baseline_prompt(const ingest::SensorWindow& window,
                                               const std::optional<std::string>& question);

}  // namespace lens::qa
