#include "lens/patch_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lens/errors.hpp"
#include "lens/rng.hpp"

namespace lens::encoder {

std::pair<std::vector<double>, NormStats> normalize(std::span<const double> series) {
    if (series.empty()) throw DataError("normalize: empty series");
    NormStats stats;
    double sum = 0.0;
    stats.m_min = series.front();
    stats.m_max = series.front();
    for (const double v : series) {
        if (!std::isfinite(v)) throw DataError("normalize: non-finite input");
        sum += v;
        stats.m_min = std::min(stats.m_min, v);
        stats.m_max = std::max(stats.m_max, v);
    }
    const auto n = static_cast<double>(series.size());
    stats.mu = sum / n;
    double var = 0.0;
    for (const double v : series) var += (v - stats.mu) * (v - stats.mu);
    stats.sigma = std::sqrt(var / n);  // population std
    stats.degenerate = stats.sigma < kSigmaFloor;

    const double scale = stats.degenerate ? 1.0 : stats.sigma;
    std::vector<double> normed(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) normed[i] = (series[i] - stats.mu) / scale;
    return {std::move(normed), stats};
}

std::vector<double> denormalize(std::span<const double> normed, const NormStats& stats) {
    const double scale = stats.degenerate ? 1.0 : stats.sigma;
    std::vector<double> out(normed.size());
    for (std::size_t i = 0; i < normed.size(); ++i) {
        if (!std::isfinite(normed[i])) throw DataError("denormalize: non-finite input");
        out[i] = normed[i] * scale + stats.mu;
    }
    return out;
}

std::string format_metadata(const NormStats& stats, const std::string& stream_name) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s: mean=%.4f std=%.4f min=%.4f max=%.4f",
                  stream_name.c_str(), stats.mu, stats.sigma, stats.m_min, stats.m_max);
    return buf;
}

std::vector<std::size_t> EncoderConfig::layer_dims() const {
    std::vector<std::size_t> dims;
    dims.push_back(input_dim());
    for (std::size_t l = 0; l + 1 < layers; ++l) dims.push_back(hidden);
    dims.push_back(d);
    return dims;
}

void EncoderConfig::validate() const {
    if (k < 1) throw ConfigError("encoder: k must be >= 1");
    if (layers < 1) throw ConfigError("encoder: layers must be >= 1");
    if (hidden < 1 || d < 1) throw ConfigError("encoder: widths must be >= 1");
}

Json EncoderConfig::to_json() const {
    return Json{{"k", k},
                {"d_p", d_p},
                {"layers", layers},
                {"hidden", hidden},
                {"d", d},
                {"seed", seed},
                {"per_stream_positional", per_stream_positional}};
}

EncoderConfig EncoderConfig::from_json(const Json& j) {
    EncoderConfig c;
    c.k = j.value("k", std::size_t{8});
    c.d_p = j.value("d_p", std::size_t{16});
    c.layers = j.value("layers", std::size_t{5});
    c.hidden = j.value("hidden", std::size_t{5120});
    c.d = j.value("d", std::size_t{5120});
    c.seed = j.value("seed", std::uint64_t{0});
    c.per_stream_positional = j.value("per_stream_positional", false);
    c.validate();
    return c;
}

PositionalTable::PositionalTable(std::size_t d_p, std::uint64_t seed) : d_p_(d_p) {
    table_.resize(kMaxLen * d_p_);
    Rng rng(seed);
    for (auto& v : table_) v = rng.uniform(-kInitRange, kInitRange);
}

std::span<const double> PositionalTable::code(std::size_t t) const {
    const std::size_t row = t % kMaxLen;
    return {table_.data() + row * d_p_, d_p_};
}

PatchSequence patchify(std::span<const double> normed, const EncoderConfig& config,
                       const PositionalTable& positions) {
    config.validate();
    if (normed.empty()) throw DataError("patchify: empty series");
    if (positions.dim() != config.d_p)
        throw DataError("patchify: positional table dimension mismatch");

    const std::size_t k = config.k;
    const std::size_t n_patches = (normed.size() + k - 1) / k;

    PatchSequence seq;
    seq.series_len = normed.size();
    seq.pad_len = n_patches * k - normed.size();
    seq.patches.reserve(n_patches);

    for (std::size_t p = 0; p < n_patches; ++p) {
        std::vector<double> patch;
        patch.reserve(k * (1 + config.d_p));
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t t = p * k + j;
            patch.push_back(t < normed.size() ? normed[t] : 0.0);
            const auto code = positions.code(t);
            patch.insert(patch.end(), code.begin(), code.end());
        }
        seq.patches.push_back(std::move(patch));
    }
    return seq;
}

void MlpWeights::validate() const {
    if (dims.size() < 2) throw DataError("mlp weights: need at least one layer");
    if (weights.size() != dims.size() - 1 || biases.size() != dims.size() - 1)
        throw DataError("mlp weights: layer count mismatch");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        if (weights[l].size() != dims[l + 1] * dims[l])
            throw DataError("mlp weights: layer " + std::to_string(l) + " shape mismatch");
        if (biases[l].size() != dims[l + 1])
            throw DataError("mlp weights: layer " + std::to_string(l) + " bias shape mismatch");
        for (const double w : weights[l])
            if (!std::isfinite(w)) throw DataError("mlp weights: non-finite entry");
        for (const double b : biases[l])
            if (!std::isfinite(b)) throw DataError("mlp weights: non-finite bias");
    }
}

MlpWeights MlpWeights::seeded(const std::vector<std::size_t>& dims, std::uint64_t seed) {
    if (dims.size() < 2) throw DataError("mlp weights: need at least one layer");
    MlpWeights w;
    w.dims = dims;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
        std::vector<double> layer(dims[l + 1] * dims[l]);
        for (auto& v : layer) v = rng.uniform(-bound, bound);
        w.weights.push_back(std::move(layer));
        std::vector<double> bias(dims[l + 1]);
        for (auto& v : bias) v = rng.uniform(-0.01, 0.01);
        w.biases.push_back(std::move(bias));
    }
    return w;
}

void MlpWeights::save(const std::string& path) const {
    validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    const Json header{{"dims", dims}, {"dtype", "f64"}, {"order", "weights-then-bias-per-layer"}};
    out << header.dump() << '\n';
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.write(reinterpret_cast<const char*>(weights[l].data()),
                  static_cast<std::streamsize>(weights[l].size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(biases[l].data()),
                  static_cast<std::streamsize>(biases[l].size() * sizeof(double)));
    }
}

MlpWeights MlpWeights::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw DataError(path + ": missing weight header");
    const Json header = Json::parse(header_line, nullptr, false);
    if (header.is_discarded() || !header.contains("dims"))
        throw DataError(path + ": malformed weight header");

    MlpWeights w;
    w.dims = header["dims"].get<std::vector<std::size_t>>();
    if (w.dims.size() < 2) throw DataError(path + ": bad dims");
    for (std::size_t l = 0; l + 1 < w.dims.size(); ++l) {
        std::vector<double> layer(w.dims[l + 1] * w.dims[l]);
        in.read(reinterpret_cast<char*>(layer.data()),
                static_cast<std::streamsize>(layer.size() * sizeof(double)));
        std::vector<double> bias(w.dims[l + 1]);
        in.read(reinterpret_cast<char*>(bias.data()),
                static_cast<std::streamsize>(bias.size() * sizeof(double)));
        if (!in) throw DataError(path + ": truncated weight payload");
        w.weights.push_back(std::move(layer));
        w.biases.push_back(std::move(bias));
    }
    w.validate();
    return w;
}

namespace {

// Returns pre-activations per layer; `acts[l]` is the input to layer l.
std::vector<std::vector<double>> forward_pass(std::span<const double> input,
                                              const MlpWeights& w,
                                              std::vector<std::vector<double>>* preacts) {
    std::vector<std::vector<double>> acts;
    acts.emplace_back(input.begin(), input.end());
    const std::size_t n_layers = w.layer_count();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t in_dim = w.dims[l];
        const std::size_t out_dim = w.dims[l + 1];
        std::vector<double> z(out_dim, 0.0);
        const auto& x = acts.back();
        for (std::size_t r = 0; r < out_dim; ++r) {
            const double* row = w.weights[l].data() + r * in_dim;
            double acc = w.biases[l][r];
            for (std::size_t c = 0; c < in_dim; ++c) acc += row[c] * x[c];
            z[r] = acc;
        }
        if (preacts) preacts->push_back(z);
        if (l + 1 < n_layers)
            for (auto& v : z) v = v > 0.0 ? v : 0.0;  // rectify hidden layers only
        acts.push_back(std::move(z));
    }
    return acts;
}

}  // namespace

std::vector<double> mlp_forward(std::span<const double> input, const MlpWeights& w) {
    w.validate();
    if (input.size() != w.dims.front())
        throw DataError("mlp_forward: input dimension " + std::to_string(input.size()) +
                        " != " + std::to_string(w.dims.front()));
    auto acts = forward_pass(input, w, nullptr);
    for (const double v : acts.back())
        if (!std::isfinite(v)) throw DataError("mlp_forward: non-finite output");
    return acts.back();
}

MlpGradients mlp_backward(std::span<const double> input, const MlpWeights& w,
                          std::span<const double> upstream) {
    w.validate();
    if (input.size() != w.dims.front()) throw DataError("mlp_backward: input shape mismatch");
    if (upstream.size() != w.dims.back()) throw DataError("mlp_backward: upstream shape mismatch");

    std::vector<std::vector<double>> preacts;
    auto acts = forward_pass(input, w, &preacts);

    const std::size_t n_layers = w.layer_count();
    MlpGradients grads;
    grads.d_weights.resize(n_layers);
    grads.d_biases.resize(n_layers);

    std::vector<double> delta(upstream.begin(), upstream.end());
    for (std::size_t li = n_layers; li-- > 0;) {
        const std::size_t in_dim = w.dims[li];
        const std::size_t out_dim = w.dims[li + 1];
        if (li + 1 < n_layers) {
            // through the rectifier of this layer's output
            for (std::size_t r = 0; r < out_dim; ++r)
                if (preacts[li][r] <= 0.0) delta[r] = 0.0;
        }
        grads.d_biases[li] = delta;
        grads.d_weights[li].assign(out_dim * in_dim, 0.0);
        const auto& x = acts[li];
        for (std::size_t r = 0; r < out_dim; ++r) {
            double* row = grads.d_weights[li].data() + r * in_dim;
            const double dr = delta[r];
            for (std::size_t c = 0; c < in_dim; ++c) row[c] = dr * x[c];
        }
        std::vector<double> prev(in_dim, 0.0);
        for (std::size_t r = 0; r < out_dim; ++r) {
            const double* row = w.weights[li].data() + r * in_dim;
            const double dr = delta[r];
            for (std::size_t c = 0; c < in_dim; ++c) prev[c] += dr * row[c];
        }
        delta = std::move(prev);
    }
    grads.d_input = std::move(delta);
    return grads;
}

Json MultimodalSequence::to_json() const {
    Json rows = Json::array();
    for (const auto& e : elements) {
        if (e.tag == MmElement::Tag::TextToken) {
            rows.push_back(Json{{"t", e.text_index}});
        } else {
            rows.push_back(Json{{"p", Json::array({e.stream, e.patch_index})}});
        }
    }
    return Json{{"elements", rows}, {"text_len", text_len}, {"patch_len", patch_len}};
}

MultimodalSequence splice(const std::vector<std::size_t>& text_embedding_indices,
                          const std::vector<std::size_t>& patch_counts,
                          const std::vector<std::size_t>& placeholder_positions) {
    if (patch_counts.size() != placeholder_positions.size())
        throw DataError("splice: placeholder/stream count mismatch (" +
                        std::to_string(placeholder_positions.size()) + " placeholders, " +
                        std::to_string(patch_counts.size()) + " streams)");
    const std::size_t text_len = text_embedding_indices.size();
    for (std::size_t i = 0; i < placeholder_positions.size(); ++i) {
        if (placeholder_positions[i] > text_len)
            throw DataError("splice: placeholder position beyond text length");
        if (i > 0 && placeholder_positions[i] < placeholder_positions[i - 1])
            throw DataError("splice: placeholder positions must be in prompt order");
    }

    MultimodalSequence seq;
    seq.text_len = text_len;
    for (const std::size_t n : patch_counts) seq.patch_len += n;
    seq.elements.reserve(text_len + seq.patch_len);

    std::size_t stream = 0;
    for (std::size_t pos = 0; pos <= text_len; ++pos) {
        while (stream < placeholder_positions.size() && placeholder_positions[stream] == pos) {
            for (std::size_t p = 0; p < patch_counts[stream]; ++p) {
                MmElement e;
                e.tag = MmElement::Tag::PatchEmbedding;
                e.stream = stream;
                e.patch_index = p;
                seq.elements.push_back(e);
            }
            ++stream;
        }
        if (pos < text_len) {
            MmElement e;
            e.tag = MmElement::Tag::TextToken;
            e.text_index = text_embedding_indices[pos];
            seq.elements.push_back(e);
        }
    }
    return seq;
}

Json TokenBudget::to_json() const {
    return Json{{"text_tokens", text_tokens}, {"patch_tokens", patch_tokens}, {"total", total}};
}

std::size_t whitespace_token_count(const std::string& text) {
    std::size_t count = 0;
    bool in_token = false;
    for (const char c : text) {
        const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (!ws && !in_token) ++count;
        in_token = !ws;
    }
    return count;
}

std::string strip_placeholders(const std::string& prompt) {
    std::string out = prompt;
    for (const char* marker : {"<ts>", "</ts>"}) {
        std::size_t pos = 0;
        while ((pos = out.find(marker, pos)) != std::string::npos)
            out.erase(pos, std::strlen(marker));
    }
    return out;
}

TokenBudget count_tokens(const ingest::SensorWindow& window, const std::string& prompt,
                         const Tokenizer& tokenizer, std::size_t patch_width) {
    if (patch_width < 1) throw DataError("count_tokens: patch width must be >= 1");
    TokenBudget budget;
    for (const auto& [name, series] : window.streams)
        budget.patch_tokens += (series.values.size() + patch_width - 1) / patch_width;
    const std::string stripped = strip_placeholders(prompt);
    budget.text_tokens = tokenizer ? tokenizer(stripped) : whitespace_token_count(stripped);
    budget.total = budget.text_tokens + budget.patch_tokens;
    return budget;
}

double nll_loss(std::span<const double> target_logprobs) {
    double loss = 0.0;
    for (const double lp : target_logprobs) {
        if (!std::isfinite(lp) || lp > 0.0)
            throw DataError("nll_loss: log-probabilities must be finite and <= 0");
        loss -= lp;
    }
    return loss;
}

}  // namespace lens::encoder
