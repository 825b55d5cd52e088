#include <doctest.h>

#include <sstream>

#include "lens/errors.hpp"
#include "lens/rng.hpp"
#include "lens/sensor_ingest.hpp"

using namespace lens;
using namespace lens::ingest;

namespace {
constexpr double kEnd = 1700014400.0;  // window start at 1700000000
}

TEST_CASE("parse_stream maps csv rows and skips malformed ones") {
    const auto spec = spec_by_name("heart_rate");
    std::istringstream src(
        "timestamp,value\n"
        "1700000000,72.0\n"
        "garbage line\n"
        "1700000010,NaN\n"
        "1700000020,80.5\n");
    const auto result = parse_stream(src, SourceFormat::Csv, spec);
    REQUIRE(result.samples.size() == 2);
    CHECK(result.samples[0].timestamp == doctest::Approx(1700000000.0));
    CHECK(result.samples[0].value == doctest::Approx(72.0));
    CHECK(result.skipped == 2);
}

TEST_CASE("parse_stream sorts out-of-order rows ascending") {
    const auto spec = spec_by_name("steps");
    std::istringstream src("30,3\n10,1\n20,2\n");
    const auto result = parse_stream(src, SourceFormat::Csv, spec);
    REQUIRE(result.samples.size() == 3);
    CHECK(result.samples[0].timestamp == 10);
    CHECK(result.samples[1].timestamp == 20);
    CHECK(result.samples[2].timestamp == 30);
}

TEST_CASE("parse_stream jsonl format and zero-valid-rows error") {
    const auto spec = spec_by_name("stress");
    std::istringstream src("{\"t\": 5, \"v\": 42.5}\n{\"v\": 1}\n");
    const auto result = parse_stream(src, SourceFormat::Jsonl, spec);
    REQUIRE(result.samples.size() == 1);
    CHECK(result.samples[0].value == doctest::Approx(42.5));
    CHECK(result.skipped == 1);

    std::istringstream empty("not json\n");
    CHECK_THROWS_AS(parse_stream(empty, SourceFormat::Jsonl, spec), DataError);
}

TEST_CASE("filter_outliers applies bounds and reports removals") {
    const std::vector<RawSample> samples{{1, 55}, {2, 72}, {3, 300}};
    const auto result = filter_outliers(samples, {25, 220});
    REQUIRE(result.samples.size() == 2);
    CHECK(result.samples[0].value == 55);
    CHECK(result.samples[1].value == 72);
    CHECK(result.removed == 1);

    SUBCASE("infinite bounds are the identity") {
        const auto all = filter_outliers(samples,
                                         {-std::numeric_limits<double>::infinity(),
                                          std::numeric_limits<double>::infinity()});
        CHECK(all.samples.size() == 3);
        CHECK(all.removed == 0);
    }
    SUBCASE("all out of bounds empties the sequence") {
        const auto none = filter_outliers(samples, {1000, 2000});
        CHECK(none.samples.empty());
        CHECK(none.removed == 3);
    }
}

TEST_CASE("extract_window keeps the half-open interval (end-span, end]") {
    const std::vector<RawSample> samples{
        {kEnd - 14400, 1}, {kEnd - 14399, 2}, {kEnd, 3}, {kEnd + 1, 4}};
    const auto kept = extract_window(samples, kEnd);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].value == 2);
    CHECK(kept[1].value == 3);

    CHECK(extract_window({}, kEnd).empty());

    SUBCASE("idempotent on its own output") {
        const auto twice = extract_window(kept, kEnd);
        REQUIRE(twice.size() == kept.size());
        for (std::size_t i = 0; i < kept.size(); ++i)
            CHECK(twice[i].timestamp == kept[i].timestamp);
    }
}

TEST_CASE("resample: 1 Hz heart rate collapses to 1440 mean slots") {
    const auto spec = spec_by_name("heart_rate");
    std::vector<RawSample> samples;
    for (int s = 1; s <= 14400; ++s)
        samples.push_back({kEnd - 14400 + s, 60.0 + (s % 10)});
    const auto series = resample(samples, spec, kEnd);
    REQUIRE(series.values.size() == 1440);
    for (const bool missing : series.missing_mask) CHECK_FALSE(missing);
    // each 10 s slot sees values 60+1 .. 60+0 once -> mean 64.5
    CHECK(series.values[0] == doctest::Approx(64.5));
    CHECK(series.values[1439] == doctest::Approx(64.5));
}

TEST_CASE("resample: steps slots sum their raw samples") {
    const auto spec = spec_by_name("steps");
    // two samples in the first 60 s slot
    const std::vector<RawSample> samples{{kEnd - 14400 + 10, 3}, {kEnd - 14400 + 50, 4}};
    const auto series = resample(samples, spec, kEnd);
    REQUIRE(series.values.size() == 240);
    CHECK(series.values[0] == doctest::Approx(7.0));
    CHECK_FALSE(series.missing_mask[0]);
}

TEST_CASE("resample: empty window is all-missing zeros") {
    const auto spec = spec_by_name("gps_lon");
    const auto series = resample({}, spec, kEnd);
    REQUIRE(series.values.size() == 24);
    for (std::size_t i = 0; i < 24; ++i) {
        CHECK(series.missing_mask[i]);
        CHECK(series.values[i] == 0.0);
    }
}

TEST_CASE("resample: gaps forward-fill and leading gaps back-fill") {
    const auto spec = spec_by_name("stress");
    // slots 2 and 5 observed; 0..1 lead, 3..4 interior, 6+ trail
    const double start = kEnd - 14400;
    const std::vector<RawSample> samples{{start + 2 * 60 + 30, 40}, {start + 5 * 60 + 30, 80}};
    const auto series = resample(samples, spec, kEnd);
    CHECK(series.values[0] == doctest::Approx(40));  // leading back-fill
    CHECK(series.values[1] == doctest::Approx(40));
    CHECK(series.values[2] == doctest::Approx(40));
    CHECK(series.values[3] == doctest::Approx(40));  // forward fill
    CHECK(series.values[4] == doctest::Approx(40));
    CHECK(series.values[5] == doctest::Approx(80));
    CHECK(series.values[239] == doctest::Approx(80));
    CHECK(series.missing_mask[0]);
    CHECK_FALSE(series.missing_mask[2]);
}

TEST_CASE("resample is idempotent on aligned input") {
    for (const auto& spec : canonical_specs()) {
        std::vector<RawSample> aligned;
        Rng rng(42 + spec.expected_len);
        const double start = kEnd - 14400;
        for (std::size_t i = 0; i < spec.expected_len; ++i) {
            const double value = spec.aggregate == SlotAggregate::Max
                                     ? static_cast<double>(rng.uniform_int(0, 1))
                                     : rng.uniform(0.0, 100.0);
            // one sample per slot, timestamped at the slot's interval end
            aligned.push_back({start + (static_cast<double>(i) + 1.0) * spec.period_s, value});
        }
        const auto once = resample(aligned, spec, kEnd);
        REQUIRE(once.values.size() == spec.expected_len);
        for (std::size_t i = 0; i < spec.expected_len; ++i) {
            CHECK_FALSE(once.missing_mask[i]);
            CHECK(once.values[i] == doctest::Approx(aligned[i].value).epsilon(1e-12));
        }
    }
}

TEST_CASE("resample output length equals span/period for every canonical spec") {
    for (const auto& spec : canonical_specs()) {
        const auto series = resample({{kEnd - 100, 1.0}}, spec, kEnd);
        CHECK(series.values.size() == static_cast<std::size_t>(14400.0 / spec.period_s));
        CHECK(series.values.size() == spec.expected_len);
    }
}

TEST_CASE("encode_lock_state: unlock inside a minute flags it via max") {
    const auto spec = spec_by_name("phone_lock");
    const double start = kEnd - 14400;
    const std::vector<LockEvent> events{{start + 30, LockState::Unlocked},
                                        {start + 40, LockState::Locked}};
    const auto series = encode_lock_state(events, kEnd, spec);
    REQUIRE(series.values.size() == 240);
    CHECK(series.values[0] == 1.0);
    CHECK(series.values[1] == 0.0);
    for (const double v : series.values) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("encode_lock_state: no events means locked throughout") {
    const auto spec = spec_by_name("phone_lock");
    const auto series = encode_lock_state({}, kEnd, spec);
    for (const double v : series.values) CHECK(v == 0.0);
}

TEST_CASE("encode_lock_state: unlocked before the window stays unlocked") {
    const auto spec = spec_by_name("phone_lock");
    const std::vector<LockEvent> events{{kEnd - 20000, LockState::Unlocked}};
    const auto series = encode_lock_state(events, kEnd, spec);
    for (const double v : series.values) CHECK(v == 1.0);
}

TEST_CASE("sum_conversation adds in-window events and clamps at the edge") {
    const std::vector<ConversationEvent> events{{kEnd - 600, 120}, {kEnd - 100, 60}};
    CHECK(sum_conversation(events, kEnd) == doctest::Approx(120 + 60));

    CHECK(sum_conversation({}, kEnd) == 0.0);

    SUBCASE("event running past the edge contributes only to the edge") {
        CHECK(sum_conversation({{kEnd - 100, 200}}, kEnd) == doctest::Approx(100));
    }
    SUBCASE("events before the window are ignored") {
        CHECK(sum_conversation({{kEnd - 20000, 500}}, kEnd) == 0.0);
    }
    SUBCASE("total never exceeds the window span") {
        std::vector<ConversationEvent> many;
        for (int i = 0; i < 10; ++i) many.push_back({kEnd - 14000 + i, 14000});
        CHECK(sum_conversation(many, kEnd) <= 14400.0);
    }
}

TEST_CASE("steps slots stay non-negative through the filter+resample path") {
    const auto spec = spec_by_name("steps");
    Rng rng(7);
    std::vector<RawSample> raw;
    for (int i = 0; i < 500; ++i)
        raw.push_back({kEnd - 14400 + rng.uniform(1.0, 14400.0), rng.uniform(-50.0, 350.0)});
    const auto filtered = filter_outliers(raw, *spec.outlier_bounds);
    const auto series = resample(filtered.samples, spec, kEnd);
    for (const double v : series.values) CHECK(v >= 0.0);
}

TEST_CASE("sensor window json round-trip keeps the wire field names") {
    SensorWindow w;
    w.ema_id = "P001-e001";
    w.participant_id = "P001";
    w.end_time = kEnd;
    w.sleep_hours = 7.5;
    w.conversation_s = 180.0;
    w.streams["steps"] = resample({{kEnd - 30, 5}}, spec_by_name("steps"), kEnd);

    const Json j = to_json(w);
    CHECK(j.contains("ema_id"));
    CHECK(j.contains("participant_id"));
    CHECK(j.contains("end_time"));
    CHECK(j.contains("streams"));
    CHECK(j.contains("sleep_hours"));
    CHECK(j.contains("conversation_s"));
    CHECK(j["streams"]["steps"].contains("values"));
    CHECK(j["streams"]["steps"].contains("period_s"));
    CHECK(j["streams"]["steps"].contains("start_time"));
    CHECK(j["streams"]["steps"].contains("missing_mask"));

    const auto back = window_from_json(j);
    CHECK(back.ema_id == w.ema_id);
    CHECK(back.streams.at("steps").values == w.streams.at("steps").values);
}
