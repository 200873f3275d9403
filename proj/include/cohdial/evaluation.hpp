#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cohdial/embedding.hpp"
#include "cohdial/text.hpp"

namespace cohdial {

struct BleuResult {
    // scores[n-1] is corpus BLEU-n in percent (geometric mean of p1..pn
    // times the brevity penalty).
    std::vector<double> scores;
    // Clipped modified n-gram precisions, as fractions.
    std::vector<double> precisions;
    double brevity_penalty = 1.0;
    std::size_t hyp_length = 0;
    std::size_t ref_length = 0;
    // Some order had no matching n-gram, which zeroes that and higher scores.
    bool zero_matches = false;
};

// Corpus-level BLEU with one reference per hypothesis and no smoothing.
BleuResult bleu(std::span<const Tokens> hypotheses, std::span<const Tokens> references,
                int max_n = 4);

// Percentage of distinct n-grams among all n-grams of all hypotheses.
double distinct_n(std::span<const Tokens> hypotheses, int n);
// Percentage of distinct hypotheses (exact token match).
double distinct_sent(std::span<const Tokens> hypotheses);

// Sum in a fixed pairwise-tree order, independent of how values were produced.
double pairwise_sum(std::span<const double> values);

struct CohResult {
    double mean = 0.0;
    std::size_t defined = 0;
    std::size_t skipped = 0;
};

// Mean coherence over pairs; undefined pairs are skipped and counted.
CohResult coh_metric(std::span<const Tokens> contexts, std::span<const Tokens> hypotheses,
                     const EmbeddingMatrix &emb, const Vocabulary &vocab, unsigned workers = 1);

struct EvalReport {
    double bleu4 = 0.0;
    double b1 = 0.0;
    double b2 = 0.0;
    double b3 = 0.0;
    double coh = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double d_sent = 0.0;
    std::size_t n_items = 0;
    std::size_t coh_skipped = 0;
    std::size_t distinct_sample = 0;
    bool bleu_zero_matches = false;

    std::string to_key_value() const;
    // Columns: BLEU% B1% B2% B3% Coh D-1% D-2% D-Sent%.
    std::string to_table() const;
    static EvalReport from_key_value(const std::string &text);
};

struct EvalOptions {
    // Distinct metrics use a random subset of this many outputs (0 = all).
    std::size_t sample = 0;
    std::uint64_t seed = 1;
    unsigned workers = 1;
};

EvalReport evaluate(std::span<const Tokens> contexts, std::span<const Tokens> hypotheses,
                    std::span<const Tokens> references, const EmbeddingMatrix &emb,
                    const Vocabulary &vocab, const EvalOptions &options = {});

} // namespace cohdial
