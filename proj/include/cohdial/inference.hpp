#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cohdial/corpus.hpp"
#include "cohdial/model.hpp"

namespace cohdial {

enum class CoherenceMode {
    Preset,  // c given by the caller
    Oracle,  // c = C(context, gold response)
};

enum class DecodeMode { Greedy, Beam };

struct DecodeSpec {
    DecodeMode mode = DecodeMode::Greedy;
    std::size_t width = 1;
};

// "greedy" or "beam:<width>".
DecodeSpec parse_decode(const std::string &text);
std::string to_string(const DecodeSpec &spec);

struct GenerationRequest {
    TokenIds context;
    CoherenceMode c_mode = CoherenceMode::Preset;
    double c = 1.0;
    // Required in oracle mode; EOS not included.
    TokenIds gold;
    DecodeSpec decode;
    std::size_t max_len = kMaxResponseTokens;
    std::uint64_t seed = 1;
    // Use the prior mean instead of a sample.
    bool mean_z = false;

    void validate() const;
};

struct GenerationResult {
    // Ends with EOS unless max_len was reached.
    TokenIds tokens;
    // Sum of the chosen tokens' log-probabilities.
    double log_prob = 0.0;
    // The c the decoder was conditioned on.
    double c = 0.0;
    std::optional<double> realized_coherence;
    std::vector<double> gates;

    // Tokens without the trailing EOS.
    std::span<const TokenId> response() const;
    double normalized_score() const;
};

// C(context, gold); throws UndefinedCoherence.
double oracle_c(std::span<const TokenId> context, std::span<const TokenId> gold,
                const EmbeddingMatrix &emb, const Vocabulary &vocab);

// Uses the model's coherence signal (if any) for c'_i, oracle c and the
// realized coherence. PAD, UNK and BOS are never emitted.
GenerationResult generate(const GeneratorModel &model, const GenerationRequest &request);

// Seed of request `index` in a batch.
std::uint64_t derive_seed(std::uint64_t base, std::size_t index);

struct BatchItem {
    std::optional<GenerationResult> result;
    std::string error_kind;
    std::string error;

    bool ok() const { return result.has_value(); }
};

// Order-preserving; request i runs with derive_seed(base_seed, i), so the
// output does not depend on `workers`. Failures are recorded per item.
std::vector<BatchItem> generate_batch(const GeneratorModel &model,
                                      std::vector<GenerationRequest> requests,
                                      std::uint64_t base_seed, unsigned workers);

// One generated response as written by the tool:
// `context<TAB>response<TAB>realized_coherence` (or "undefined").
struct GeneratedItem {
    std::string context;
    Tokens response;
    std::optional<double> realized_coherence;
};

std::string format_generated(const GeneratedItem &item);
std::vector<GeneratedItem> load_generated(const std::filesystem::path &path);
void save_generated(const std::filesystem::path &path, std::span<const GeneratedItem> items,
                    const std::vector<std::string> &header = {});

} // namespace cohdial
