// lens-forge: dataset construction and evaluation pipeline driver.
//
//   lens-forge <command> --config <path> [--seed N] [--out DIR]
//
// Commands: fixture, ingest, synthesize, judge, assemble, encode, evaluate,
// tokens, run-all. Exit codes: 0 ok, 1 config error, 2 data error,
// 3 gateway error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lens/errors.hpp"
#include "lens/hash.hpp"
#include "lens/pipeline.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};

lens::RunConfig load_config(const CommonOpts& opts) {
    lens::RunConfig config = lens::RunConfig::load(opts.config_path);
    if (opts.out_dir) config.out_dir = *opts.out_dir;
    if (opts.seed) {
        // one user-facing seed fans out to stable per-stage seeds
        const std::uint64_t s = *opts.seed;
        config.split_seed = lens::mix64(s, 1);
        config.mix_seed = lens::mix64(s, 2);
        config.paraphrase_seed = lens::mix64(s, 3);
        config.rewrite_seed = lens::mix64(s, 4);
        config.enc.seed = lens::mix64(s, 5);
    }
    return config;
}

void print_manifest(const lens::pipeline::RunManifest& manifest) {
    std::cout << manifest.to_json().dump(2) << std::endl;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config = true) {
    auto* c = cmd->add_option("--config", opts.config_path, "Run configuration JSON");
    if (needs_config) c->required();
    cmd->add_option("--seed", opts.seed, "Override all stage seeds from one value");
    cmd->add_option("--out", opts.out_dir, "Override the configured output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sensor-text QA dataset construction and evaluation pipeline"};
    app.require_subcommand(1);

    CommonOpts opts;

    // fixture
    auto* fixture = app.add_subcommand("fixture", "Generate a synthetic study fixture");
    std::string fixture_dir = "fixture";
    std::size_t participants = 5;
    std::size_t emas = 6;
    std::uint64_t fixture_seed = 7;
    std::string data_dir;
    fixture->add_option("--dir", fixture_dir, "Fixture output directory");
    fixture->add_option("--participants", participants, "Synthetic participant count");
    fixture->add_option("--emas", emas, "Assessments per participant");
    fixture->add_option("--seed", fixture_seed, "Fixture generator seed");
    fixture->add_option("--data-dir", data_dir,
                        "Template/paraphrase data directory for the emitted config");

    auto* ingest = app.add_subcommand("ingest", "Parse raw streams into aligned windows");
    add_common(ingest, opts);
    auto* synthesize = app.add_subcommand("synthesize", "Render template narratives from EMAs");
    add_common(synthesize, opts);
    auto* judge = app.add_subcommand("judge", "Rewrite narratives and gate them by the QC panel");
    add_common(judge, opts);
    auto* assemble = app.add_subcommand("assemble", "Build split QA datasets and the training mix");
    add_common(assemble, opts);
    auto* encode = app.add_subcommand("encode", "Emit multimodal layouts and token budgets");
    add_common(encode, opts);
    auto* tokens = app.add_subcommand("tokens", "Per-modality token consumption table");
    add_common(tokens, opts);
    auto* run_all = app.add_subcommand("run-all", "Run every pipeline stage in order");
    add_common(run_all, opts);

    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against references");
    add_common(evaluate, opts);
    std::string refs_path, preds_path;
    evaluate->add_option("--refs", refs_path, "Reference JSONL (id, kind, question, answer)")
        ->required();
    evaluate->add_option("--preds", preds_path, "Prediction JSONL (id, answer)")->required();

    auto* paraphrase_gen = app.add_subcommand(
        "paraphrase-gen", "Regenerate the paraphrase bank against the configured backend");
    add_common(paraphrase_gen, opts);
    std::string bank_out;
    paraphrase_gen->add_option("--out-file", bank_out,
                               "Destination bank JSON (default: <out_dir>/paraphrases_generated.json)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fixture->parsed()) {
            print_manifest(
                lens::pipeline::generate_fixture(fixture_dir, participants, emas, fixture_seed,
                                                 data_dir));
            return 0;
        }
        const lens::RunConfig config = load_config(opts);
        if (ingest->parsed()) print_manifest(lens::pipeline::cmd_ingest(config));
        if (synthesize->parsed()) print_manifest(lens::pipeline::cmd_synthesize(config));
        if (judge->parsed()) print_manifest(lens::pipeline::cmd_judge(config));
        if (assemble->parsed()) print_manifest(lens::pipeline::cmd_assemble(config));
        if (encode->parsed()) print_manifest(lens::pipeline::cmd_encode(config));
        if (tokens->parsed()) print_manifest(lens::pipeline::cmd_tokens(config));
        if (evaluate->parsed())
            print_manifest(lens::pipeline::cmd_evaluate(config, refs_path, preds_path));
        if (paraphrase_gen->parsed())
            print_manifest(lens::pipeline::cmd_paraphrase_gen(config, bank_out));
        if (run_all->parsed()) {
            for (const auto& [name, manifest] : lens::pipeline::run_all(config))
                print_manifest(manifest);
        }
        return 0;
    } catch (const lens::ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return 1;
    } catch (const lens::GatewayError& e) {
        std::cerr << "gateway error: " << e.what() << std::endl;
        return 3;
    } catch (const lens::DataError& e) {
        std::cerr << "data error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
}
