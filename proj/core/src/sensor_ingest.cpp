#include "lens/sensor_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>

#include "lens/errors.hpp"

namespace lens::ingest {

void StreamSpec::validate() const {
    if (period_s <= 0) throw ConfigError("stream " + name + ": period_s must be > 0");
    if (kind == StreamKind::Continuous) {
        const double len = kWindowSpanS / period_s;
        if (std::abs(len - static_cast<double>(expected_len)) > 1e-9)
            throw ConfigError("stream " + name + ": expected_len must equal 14400 / period_s");
    }
}

const std::vector<StreamSpec>& canonical_specs() {
    static const std::vector<StreamSpec> specs = [] {
        std::vector<StreamSpec> s;
        s.push_back({"heart_rate", StreamKind::Continuous, 10.0, 1440, SlotAggregate::Mean,
                     std::make_pair(25.0, 220.0)});
        s.push_back({"zcr", StreamKind::Continuous, 30.0, 480, SlotAggregate::Mean, std::nullopt});
        s.push_back({"steps", StreamKind::Continuous, 60.0, 240, SlotAggregate::Sum,
                     std::make_pair(0.0, 300.0)});
        s.push_back({"stress", StreamKind::Continuous, 60.0, 240, SlotAggregate::Mean, std::nullopt});
        s.push_back({"gps_lon", StreamKind::Continuous, 600.0, 24, SlotAggregate::Mean, std::nullopt});
        s.push_back({"gps_lat", StreamKind::Continuous, 600.0, 24, SlotAggregate::Mean, std::nullopt});
        s.push_back({"phone_lock", StreamKind::Continuous, 60.0, 240, SlotAggregate::Max, std::nullopt});
        for (const auto& spec : s) spec.validate();
        return s;
    }();
    return specs;
}

const StreamSpec& spec_by_name(const std::string& name) {
    for (const auto& spec : canonical_specs())
        if (spec.name == name) return spec;
    throw ConfigError("unknown stream: " + name);
}

namespace {

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) return false;
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    return *end == '\0';
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_csv_row(const std::string& line, RawSample& sample) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) return false;
    double t, v;
    if (!parse_double(trim(line.substr(0, comma)), t)) return false;
    if (!parse_double(trim(line.substr(comma + 1)), v)) return false;
    sample = {t, v};
    return true;
}

bool parse_jsonl_row(const std::string& line, RawSample& sample) {
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return false;
    if (!j.contains("t") || !j.contains("v")) return false;
    if (!j["t"].is_number() || !j["v"].is_number()) return false;
    sample = {j["t"].get<double>(), j["v"].get<double>()};
    return true;
}

}  // namespace

ParseResult parse_stream(std::istream& source, SourceFormat format, const StreamSpec& spec) {
    if (!source) throw DataError("stream " + spec.name + ": unreadable source");
    ParseResult result;
    std::string line;
    bool first = true;
    while (std::getline(source, line)) {
        const std::string row = trim(line);
        if (row.empty()) continue;
        if (first && format == SourceFormat::Csv && row == "timestamp,value") {
            first = false;
            continue;  // header
        }
        first = false;
        RawSample sample;
        const bool ok = format == SourceFormat::Csv ? parse_csv_row(row, sample)
                                                    : parse_jsonl_row(row, sample);
        if (!ok || !std::isfinite(sample.timestamp) || !std::isfinite(sample.value)) {
            ++result.skipped;
            continue;
        }
        result.samples.push_back(sample);
    }
    if (result.samples.empty())
        throw DataError("stream " + spec.name + ": zero valid rows (" +
                        std::to_string(result.skipped) + " skipped)");
    std::stable_sort(result.samples.begin(), result.samples.end(),
                     [](const RawSample& a, const RawSample& b) { return a.timestamp < b.timestamp; });
    return result;
}

ParseResult parse_stream_file(const std::string& path, const StreamSpec& spec) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    const auto format = path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl"
                            ? SourceFormat::Jsonl
                            : SourceFormat::Csv;
    return parse_stream(in, format, spec);
}

FilterResult filter_outliers(const std::vector<RawSample>& samples,
                             std::pair<double, double> bounds) {
    if (bounds.first > bounds.second)
        throw DataError("outlier bounds: min > max");
    FilterResult result;
    result.samples.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.value < bounds.first || s.value > bounds.second) {
            ++result.removed;
        } else {
            result.samples.push_back(s);
        }
    }
    return result;
}

std::vector<RawSample> extract_window(const std::vector<RawSample>& samples, double end_time,
                                      double span_s) {
    if (span_s <= 0) throw DataError("extract_window: span_s must be > 0");
    const double start = end_time - span_s;
    std::vector<RawSample> out;
    for (const auto& s : samples)
        if (s.timestamp > start && s.timestamp <= end_time) out.push_back(s);
    return out;
}

namespace {

// Slot i covers (start + i*p, start + (i+1)*p]; consistent with the
// half-open window so a sample at exactly end_time lands in the last slot.
std::size_t slot_index(double t, double start, double period, std::size_t len) {
    const double off = t - start;
    auto idx = static_cast<long long>(std::ceil(off / period)) - 1;
    if (idx < 0) idx = 0;
    if (idx >= static_cast<long long>(len)) idx = static_cast<long long>(len) - 1;
    return static_cast<std::size_t>(idx);
}

void fill_gaps(ResampledSeries& series) {
    // Forward-fill; leading gaps take the first observed value.
    std::optional<double> first;
    for (std::size_t i = 0; i < series.values.size(); ++i) {
        if (!series.missing_mask[i]) {
            first = series.values[i];
            break;
        }
    }
    if (!first) return;  // all-missing stays zeros
    double prev = *first;
    for (std::size_t i = 0; i < series.values.size(); ++i) {
        if (series.missing_mask[i]) {
            series.values[i] = prev;
        } else {
            prev = series.values[i];
        }
    }
}

}  // namespace

ResampledSeries resample(const std::vector<RawSample>& window_samples, const StreamSpec& spec,
                         double end_time) {
    if (spec.kind != StreamKind::Continuous)
        throw DataError("resample: stream " + spec.name + " is not continuous");
    spec.validate();

    const std::size_t len = spec.expected_len;
    const double start = end_time - kWindowSpanS;

    ResampledSeries series;
    series.period_s = spec.period_s;
    series.start_time = start;
    series.values.assign(len, 0.0);
    series.missing_mask.assign(len, true);

    std::vector<double> acc(len, 0.0);
    std::vector<std::size_t> count(len, 0);
    for (const auto& s : window_samples) {
        if (s.timestamp <= start || s.timestamp > end_time) continue;
        const std::size_t i = slot_index(s.timestamp, start, spec.period_s, len);
        switch (spec.aggregate) {
            case SlotAggregate::Mean:
            case SlotAggregate::Sum:
                acc[i] += s.value;
                break;
            case SlotAggregate::Max:
                acc[i] = count[i] == 0 ? s.value : std::max(acc[i], s.value);
                break;
        }
        ++count[i];
    }
    for (std::size_t i = 0; i < len; ++i) {
        if (count[i] == 0) continue;
        series.missing_mask[i] = false;
        series.values[i] = spec.aggregate == SlotAggregate::Mean
                               ? acc[i] / static_cast<double>(count[i])
                               : acc[i];
    }
    fill_gaps(series);
    return series;
}

ResampledSeries encode_lock_state(const std::vector<LockEvent>& transitions, double end_time,
                                  const StreamSpec& spec) {
    spec.validate();
    const std::size_t len = spec.expected_len;
    const double start = end_time - kWindowSpanS;
    const auto seconds = static_cast<std::size_t>(kWindowSpanS);
    const auto per_slot = static_cast<std::size_t>(spec.period_s);

    std::vector<LockEvent> sorted = transitions;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const LockEvent& a, const LockEvent& b) { return a.timestamp < b.timestamp; });

    ResampledSeries series;
    series.period_s = spec.period_s;
    series.start_time = start;
    series.values.assign(len, 0.0);
    series.missing_mask.assign(len, false);

    int state = 0;  // locked until an event says otherwise
    std::size_t next = 0;
    while (next < sorted.size() && sorted[next].timestamp <= start) {
        state = static_cast<int>(sorted[next].state);
        ++next;
    }
    for (std::size_t sec = 0; sec < seconds; ++sec) {
        const double t = start + static_cast<double>(sec + 1);
        while (next < sorted.size() && sorted[next].timestamp <= t) {
            state = static_cast<int>(sorted[next].state);
            ++next;
        }
        if (state == 1) {
            const std::size_t slot = std::min(sec / per_slot, len - 1);
            series.values[slot] = 1.0;
        }
    }
    return series;
}

double sum_conversation(const std::vector<ConversationEvent>& events, double end_time,
                        double span_s) {
    const double start = end_time - span_s;
    double total = 0.0;
    for (const auto& e : events) {
        if (e.duration_s < 0) throw DataError("conversation event with negative duration");
        if (e.start <= start || e.start > end_time) continue;
        total += std::min(e.duration_s, end_time - e.start);
    }
    return std::min(total, span_s);
}

Json to_json(const ResampledSeries& series) {
    Json j;
    j["values"] = series.values;
    j["period_s"] = series.period_s;
    j["start_time"] = series.start_time;
    j["missing_mask"] = series.missing_mask;
    return j;
}

Json to_json(const SensorWindow& window) {
    Json j;
    j["ema_id"] = window.ema_id;
    j["participant_id"] = window.participant_id;
    j["end_time"] = window.end_time;
    Json streams = Json::object();
    for (const auto& [name, series] : window.streams) streams[name] = to_json(series);
    j["streams"] = streams;
    j["sleep_hours"] = window.sleep_hours;
    j["conversation_s"] = window.conversation_s;
    return j;
}

ResampledSeries series_from_json(const Json& j) {
    ResampledSeries s;
    s.values = j.at("values").get<std::vector<double>>();
    s.period_s = j.at("period_s").get<double>();
    s.start_time = j.at("start_time").get<double>();
    s.missing_mask = j.at("missing_mask").get<std::vector<bool>>();
    if (s.missing_mask.size() != s.values.size())
        throw DataError("resampled series: mask/value length mismatch");
    return s;
}

SensorWindow window_from_json(const Json& j) {
    SensorWindow w;
    w.ema_id = j.at("ema_id").get<std::string>();
    w.participant_id = j.at("participant_id").get<std::string>();
    w.end_time = j.at("end_time").get<double>();
    for (const auto& [name, series] : j.at("streams").items())
        w.streams[name] = series_from_json(series);
    w.sleep_hours = j.at("sleep_hours").get<double>();
    w.conversation_s = j.at("conversation_s").get<double>();
    return w;
}

}  // namespace lens::ingest
