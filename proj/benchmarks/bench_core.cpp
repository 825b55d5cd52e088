#include <benchmark/benchmark.h>

#include <vector>

#include "lens/metrics.hpp"
#include "lens/patch_encoder.hpp"
#include "lens/rng.hpp"
#include "lens/sensor_ingest.hpp"

namespace {

std::vector<lens::ingest::RawSample> make_samples(std::size_t n, double end_time) {
    lens::Rng rng(5);
    std::vector<lens::ingest::RawSample> samples;
    samples.reserve(n);
    const double start = end_time - lens::ingest::kWindowSpanS;
    for (std::size_t i = 0; i < n; ++i)
        samples.push_back({start + (static_cast<double>(i) + 0.5) * lens::ingest::kWindowSpanS /
                                       static_cast<double>(n),
                           60.0 + rng.uniform(0.0, 40.0)});
    return samples;
}

void BM_Resample(benchmark::State& state) {
    const auto spec = lens::ingest::spec_by_name("heart_rate");
    const double end = 1700000000.0;
    const auto samples = make_samples(static_cast<std::size_t>(state.range(0)), end);
    for (auto _ : state) {
        auto series = lens::ingest::resample(samples, spec, end);
        benchmark::DoNotOptimize(series);
    }
}
BENCHMARK(BM_Resample)->Arg(1440)->Arg(14400);

void BM_PatchifyForward(benchmark::State& state) {
    lens::encoder::EncoderConfig config;
    config.hidden = 64;
    config.d = 32;
    config.seed = 3;
    const lens::encoder::PositionalTable positions(config.d_p, config.seed);
    const auto weights = lens::encoder::MlpWeights::seeded(config.layer_dims(), 9);
    lens::Rng rng(11);
    std::vector<double> series(static_cast<std::size_t>(state.range(0)));
    for (auto& v : series) v = rng.uniform(-2.0, 2.0);
    for (auto _ : state) {
        const auto patches = lens::encoder::patchify(series, config, positions);
        double acc = 0.0;
        for (const auto& patch : patches.patches) {
            const auto z = lens::encoder::mlp_forward(patch, weights);
            acc += z.front();
        }
        benchmark::DoNotOptimize(acc);
    }
}
BENCHMARK(BM_PatchifyForward)->Arg(240)->Arg(1440);

void BM_RougeL(benchmark::State& state) {
    lens::Rng rng(17);
    const char* vocab[] = {"the", "user", "often", "felt", "tired", "anxious", "calm", "slept"};
    std::vector<std::string> a, b;
    for (long i = 0; i < state.range(0); ++i) {
        a.push_back(vocab[rng.uniform_int(0, 7)]);
        b.push_back(vocab[rng.uniform_int(0, 7)]);
    }
    for (auto _ : state) {
        auto score = lens::metrics::rouge_l(a, b);
        benchmark::DoNotOptimize(score);
    }
}
BENCHMARK(BM_RougeL)->Arg(64)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
