#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lens/jsonl.hpp"
#include "lens/sensor_ingest.hpp"

namespace lens::encoder {

// Per-stream statistics carried as prompt metadata so original magnitudes
// stay recoverable after z-scoring.
struct NormStats {
    double mu = 0.0;
    double sigma = 0.0;  // population std of the raw series, even when degenerate
    double m_min = 0.0;
    double m_max = 0.0;
    bool degenerate = false;  // sigma below floor; unit scale used instead
};

inline constexpr double kSigmaFloor = 1e-8;

std::pair<std::vector<double>, NormStats> normalize(std::span<const double> series);
std::vector<double> denormalize(std::span<const double> normed, const NormStats& stats);

// "<stream>: mean=<mu> std=<sigma> min=<min> max=<max>" with 4-decimal values.
std::string format_metadata(const NormStats& stats, const std::string& stream_name);

struct EncoderConfig {
    std::size_t k = 8;       // patch width
    std::size_t d_p = 16;    // positional code dimension
    std::size_t layers = 5;
    std::size_t hidden = 5120;
    std::size_t d = 5120;    // output dimension, matches the LLM embedding width
    std::uint64_t seed = 0;
    bool per_stream_positional = false;

    std::size_t input_dim() const { return k * (1 + d_p); }
    std::vector<std::size_t> layer_dims() const;
    void validate() const;

    Json to_json() const;
    static EncoderConfig from_json(const Json& j);
};

// Learned positional codes; fixed capacity, indexed t mod capacity.
class PositionalTable {
public:
    static constexpr std::size_t kMaxLen = 2048;
    static constexpr double kInitRange = 0.05;

    PositionalTable(std::size_t d_p, std::uint64_t seed);
    std::span<const double> code(std::size_t t) const;
    std::size_t dim() const { return d_p_; }

private:
    std::size_t d_p_;
    std::vector<double> table_;  // kMaxLen x d_p_, row-major
};

struct PatchSequence {
    std::vector<std::vector<double>> patches;  // each of dimension k*(1+d_p)
    std::size_t series_len = 0;
    std::size_t pad_len = 0;  // zero-padded trailing timesteps in the last patch

    std::size_t count() const { return patches.size(); }
};

// ceil(T/k) non-overlapping patches; each timestep contributes its scalar
// followed by its positional code. Padded timesteps keep their positional
// codes and zero the scalar slot.
PatchSequence patchify(std::span<const double> normed, const EncoderConfig& config,
                       const PositionalTable& positions);

struct MlpWeights {
    std::vector<std::size_t> dims;               // [in, hidden..., out]
    std::vector<std::vector<double>> weights;    // layer l: dims[l+1] x dims[l], row-major
    std::vector<std::vector<double>> biases;     // layer l: dims[l+1]

    std::size_t layer_count() const { return weights.size(); }
    void validate() const;

    static MlpWeights seeded(const std::vector<std::size_t>& dims, std::uint64_t seed);

    // Flat little-endian f64 payload after a one-line JSON header.
    void save(const std::string& path) const;
    static MlpWeights load(const std::string& path);
};

// Affine chain with rectified-linear activations between hidden layers and
// an identity output layer.
std::vector<double> mlp_forward(std::span<const double> input, const MlpWeights& weights);

struct MlpGradients {
    std::vector<std::vector<double>> d_weights;
    std::vector<std::vector<double>> d_biases;
    std::vector<double> d_input;
};

MlpGradients mlp_backward(std::span<const double> input, const MlpWeights& weights,
                          std::span<const double> upstream);

struct MmElement {
    enum class Tag { TextToken, PatchEmbedding };
    Tag tag = Tag::TextToken;
    std::size_t text_index = 0;   // index into the text embedding sequence
    std::size_t stream = 0;       // stream ordinal, patch entries only
    std::size_t patch_index = 0;
};

struct MultimodalSequence {
    std::vector<MmElement> elements;
    std::size_t text_len = 0;
    std::size_t patch_len = 0;

    std::size_t size() const { return elements.size(); }
    Json to_json() const;
};

// Replaces each placeholder span with that stream's patch entries.
// placeholder_positions[i] is the slot in the text-token sequence where
// stream i's span sat (== text length appends at the end); positions arrive
// in prompt order.
MultimodalSequence splice(const std::vector<std::size_t>& text_embedding_indices,
                          const std::vector<std::size_t>& patch_counts,
                          const std::vector<std::size_t>& placeholder_positions);

struct TokenBudget {
    std::size_t text_tokens = 0;
    std::size_t patch_tokens = 0;
    std::size_t total = 0;

    Json to_json() const;
};

using Tokenizer = std::function<std::size_t(const std::string&)>;

std::size_t whitespace_token_count(const std::string& text);

// Removes every `<ts>`/`</ts>` marker before counting text tokens.
std::string strip_placeholders(const std::string& prompt);

// Effective prefill budget: one token per patch plus the tokenized prompt.
TokenBudget count_tokens(const ingest::SensorWindow& window, const std::string& prompt,
                         const Tokenizer& tokenizer = {}, std::size_t patch_width = 8);

// Negated sum of per-step log-probabilities; rejects positive or non-finite
// entries.
double nll_loss(std::span<const double> target_logprobs);

}  // namespace lens::encoder
