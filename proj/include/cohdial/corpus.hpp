#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cohdial/embedding.hpp"
#include "cohdial/text.hpp"

namespace cohdial {

inline constexpr std::size_t kContextTurns = 3;
// Both limits are strict: a kept pair has fewer tokens than these.
inline constexpr std::size_t kMaxContextTokens = 120;
inline constexpr std::size_t kMaxResponseTokens = 30;
inline constexpr std::string_view kTurnSeparator = " ## ";

struct DialoguePair {
    std::array<Tokens, kContextTurns> context_turns;
    Tokens response;
    std::optional<double> coherence;

    // All turns concatenated in order.
    Tokens context() const;
    std::size_t context_length() const;
};

// Parses `turn1 ## turn2 ## turn3<TAB>response[<TAB>score]`. With
// `response_optional` a line holding only the context column is accepted
// and yields an empty response. Throws ParseError on malformed lines.
DialoguePair parse_pair(std::string_view line, std::size_t lineno, bool response_optional = false);

bool satisfies_length_limits(const DialoguePair &pair);

// TSV line for a pair (without newline); the score column is written when
// the pair is scored.
std::string format_pair(const DialoguePair &pair);
std::string format_context(const DialoguePair &pair);

struct LoadStats {
    std::size_t lines = 0;
    std::size_t kept = 0;
    std::size_t malformed = 0;
    std::size_t too_long = 0;

    std::size_t dropped() const { return malformed + too_long; }
};

// Pulls pairs one at a time from a stream; lines starting with the config
// header prefix and blank lines are skipped. Malformed lines are counted,
// or rethrown in strict mode.
class PairReader {
  public:
    explicit PairReader(std::istream &in, bool strict = false, bool response_optional = false);

    std::optional<DialoguePair> next();
    const LoadStats &stats() const { return stats_; }

  private:
    std::istream &in_;
    bool strict_;
    bool response_optional_;
    LoadStats stats_;
    std::string line_;
};

std::vector<DialoguePair> load_pairs(const std::filesystem::path &path, bool strict = false,
                                     LoadStats *stats = nullptr, bool response_optional = false);

// Writes atomically, with optional `#cfg` header lines.
void save_pairs(const std::filesystem::path &path, std::span<const DialoguePair> pairs,
                const std::vector<std::string> &header = {});

// nullopt when the coherence is undefined.
std::optional<double> score_pair(const DialoguePair &pair, const EmbeddingMatrix &emb,
                                 const Vocabulary &vocab);

struct ScoreStats {
    std::size_t scored = 0;
    std::size_t undefined = 0;
};

// Sets coherence on every pair; pairs with undefined coherence are dropped.
std::vector<DialoguePair> score_pairs(std::vector<DialoguePair> pairs, const EmbeddingMatrix &emb,
                                      const Vocabulary &vocab, ScoreStats *stats = nullptr,
                                      unsigned workers = 1);

struct CoherenceDistribution {
    double mu = 0.0;
    double sigma = 1.0;
    double cutoff = 2.0;
};

// Mergeable running mean/variance (population form).
class MomentAccumulator {
  public:
    void add(double x);
    void merge(const MomentAccumulator &other);
    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    double population_variance() const { return n_ ? m2_ / double(n_) : 0.0; }

  private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

// Normal fit: sample mean, population standard deviation, cutoff mu + 2 sigma.
CoherenceDistribution fit_coherence_distribution(std::span<const double> scores);
CoherenceDistribution fit_coherence_distribution(const MomentAccumulator &moments);

// Keeps pairs with coherence >= threshold, in order. Throws MissingScore
// on unscored pairs.
std::vector<DialoguePair> filter_corpus(std::span<const DialoguePair> pairs, double threshold);
bool passes_filter(const DialoguePair &pair, double threshold);

struct SplitSizes {
    std::size_t train = 0;
    std::size_t dev = 0;
    std::size_t test = 0;
};

struct CorpusSplit {
    std::vector<DialoguePair> train;
    std::vector<DialoguePair> dev;
    std::vector<DialoguePair> test;
};

// Uniform sampling without replacement, deterministic in seed.
CorpusSplit split_corpus(std::span<const DialoguePair> pairs, SplitSizes sizes,
                         std::uint64_t seed);

struct StreamConfig {
    // Pairs held in memory at once.
    std::size_t buffer = 4096;
    unsigned workers = 1;
    bool strict = false;
    // Recompute scores even if the input already carries them.
    bool rescore = true;
};

struct StreamStats {
    LoadStats load;
    std::size_t undefined = 0;
    std::size_t emitted = 0;
    std::size_t max_buffered = 0;
};

// Reads pairs, scores them in buffer-sized chunks across workers and hands
// the scored pairs to `sink` in input order. Memory is bounded by the
// buffer regardless of corpus size.
StreamStats score_stream(std::istream &in, const EmbeddingMatrix &emb, const Vocabulary &vocab,
                         const StreamConfig &config,
                         const std::function<void(const DialoguePair &)> &sink);

struct SynthCorpus {
    std::vector<DialoguePair> pairs;
    std::vector<int> context_topic;
    std::vector<int> response_topic;
};

struct SynthConfig {
    int topics = 4;
    int pairs_per_topic = 100;
    double noise = 0.0;
    int words_per_topic = 6;
    std::uint64_t seed = 1;
};

// Topic-clustered toy dialogues. Content words are named `t<topic>w<k>`;
// with probability 1 - noise the response draws from the context's topic,
// otherwise from a different one.
SynthCorpus synth_corpus(const SynthConfig &config);

// Topic index of a synthetic content word, or -1.
int synth_topic_of(std::string_view token);

} // namespace cohdial
