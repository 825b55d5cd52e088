#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lens/jsonl.hpp"

namespace lens::ingest {

// Window length: one assessment covers the preceding four hours.
inline constexpr double kWindowSpanS = 14400.0;

struct RawSample {
    double timestamp = 0.0;  // seconds since epoch, UTC
    double value = 0.0;      // stream-native units
};

enum class StreamKind { Continuous, Aggregate };

// How raw samples inside one resample slot collapse to a single value.
// Rates are averaged, counts summed, binary state OR'd.
enum class SlotAggregate { Mean, Sum, Max };

struct StreamSpec {
    std::string name;
    StreamKind kind = StreamKind::Continuous;
    double period_s = 60.0;
    std::size_t expected_len = 240;
    SlotAggregate aggregate = SlotAggregate::Mean;
    std::optional<std::pair<double, double>> outlier_bounds;

    void validate() const;  // expected_len == 14400 / period_s for continuous streams
};

// The seven fixed-rate streams every window carries:
//   heart_rate 10s/1440, zcr 30s/480, steps 60s/240, stress 60s/240,
//   gps_lon 600s/24, gps_lat 600s/24, phone_lock 60s/240.
const std::vector<StreamSpec>& canonical_specs();
const StreamSpec& spec_by_name(const std::string& name);

struct ResampledSeries {
    std::vector<double> values;
    double period_s = 0.0;
    double start_time = 0.0;  // window start; slot i covers (start + i*p, start + (i+1)*p]
    std::vector<bool> missing_mask;
};

struct SensorWindow {
    std::string ema_id;
    std::string participant_id;
    double end_time = 0.0;  // EMA completion time
    std::map<std::string, ResampledSeries> streams;
    double sleep_hours = 0.0;
    double conversation_s = 0.0;
};

enum class SourceFormat { Csv, Jsonl };

struct ParseResult {
    std::vector<RawSample> samples;  // sorted by timestamp ascending
    std::size_t skipped = 0;         // malformed or non-finite rows
};

// CSV rows are `timestamp,value` (header line tolerated); JSONL rows are
// `{"t": ..., "v": ...}`. Throws DataError when the source is unreadable or
// yields zero valid rows.
ParseResult parse_stream(std::istream& source, SourceFormat format, const StreamSpec& spec);
ParseResult parse_stream_file(const std::string& path, const StreamSpec& spec);

struct FilterResult {
    std::vector<RawSample> samples;
    std::size_t removed = 0;
};

FilterResult filter_outliers(const std::vector<RawSample>& samples,
                             std::pair<double, double> bounds);

// Keeps samples with end_time - span_s < t <= end_time, order preserved.
std::vector<RawSample> extract_window(const std::vector<RawSample>& samples, double end_time,
                                      double span_s = kWindowSpanS);

// Aggregates window samples into fixed slots. Empty slots are marked missing
// and forward-filled; leading gaps take the first observed value; a fully
// empty window comes back all-missing with zeros.
ResampledSeries resample(const std::vector<RawSample>& window_samples, const StreamSpec& spec,
                         double end_time);

enum class LockState : int { Locked = 0, Unlocked = 1 };

struct LockEvent {
    double timestamp = 0.0;
    LockState state = LockState::Locked;
};

// Rebuilds the 1 Hz binary lock signal from transitions, then collapses to
// 60 s slots via max (a minute is 1 if the phone was unlocked at any second).
// State before the first transition defaults to locked.
ResampledSeries encode_lock_state(const std::vector<LockEvent>& transitions, double end_time,
                                  const StreamSpec& spec);

struct ConversationEvent {
    double start = 0.0;
    double duration_s = 0.0;
};

// Total conversational seconds for events starting inside the window; each
// event is clamped at the window edge and the total never exceeds span_s.
double sum_conversation(const std::vector<ConversationEvent>& events, double end_time,
                        double span_s = kWindowSpanS);

Json to_json(const ResampledSeries& series);
Json to_json(const SensorWindow& window);
ResampledSeries series_from_json(const Json& j);
SensorWindow window_from_json(const Json& j);

}  // namespace lens::ingest
