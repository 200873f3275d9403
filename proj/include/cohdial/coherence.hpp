#pragma once

#include <span>
#include <vector>

#include "cohdial/embedding.hpp"
#include "cohdial/vocabulary.hpp"

namespace cohdial {

struct SentenceEmbedding {
    std::vector<double> vector;
    // Sum of the importance weights that contributed.
    double weight_mass = 0.0;
};

// 1 for content words, 0 for stop words, UNK and specials.
std::vector<double> importance_weights(std::span<const TokenId> tokens, const Vocabulary &vocab);

SentenceEmbedding sentence_embedding(std::span<const TokenId> tokens, const EmbeddingMatrix &emb,
                                     const Vocabulary &vocab);

// Cosine similarity; throws UndefinedCoherence when either side is zero.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Cosine similarity of the weighted sentence embeddings of context and
// response, in [-1, 1].
double coherence(std::span<const TokenId> context, std::span<const TokenId> response,
                 const EmbeddingMatrix &emb, const Vocabulary &vocab);
double coherence(const Tokens &context, const Tokens &response, const EmbeddingMatrix &emb,
                 const Vocabulary &vocab);

// Expected word vector under each position's distribution, summed over
// positions. No importance weighting: every row participates as stored.
SentenceEmbedding soft_sentence_embedding(std::span<const std::vector<double>> dists,
                                          const EmbeddingMatrix &emb);

double soft_coherence(std::span<const TokenId> context, std::span<const std::vector<double>> dists,
                      const EmbeddingMatrix &emb, const Vocabulary &vocab);

// Throws InvalidDistribution unless non-negative and summing to 1 within tol.
void check_distribution(std::span<const double> dist, double tol = 1e-6);

} // namespace cohdial
