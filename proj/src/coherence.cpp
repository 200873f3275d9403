#include "cohdial/coherence.hpp"

#include <algorithm>
#include <cmath>

#include "cohdial/errors.hpp"

namespace cohdial {

std::vector<double> importance_weights(std::span<const TokenId> tokens, const Vocabulary &vocab) {
    if (tokens.empty())
        throw EmptySequence("importance weights of an empty sequence");
    std::vector<double> w;
    w.reserve(tokens.size());
    for (auto t : tokens)
        w.push_back(Vocabulary::is_special(t) || vocab.is_stopword(t) ? 0.0 : 1.0);
    return w;
}

SentenceEmbedding sentence_embedding(std::span<const TokenId> tokens, const EmbeddingMatrix &emb,
                                     const Vocabulary &vocab) {
    auto weights = importance_weights(tokens, vocab);
    SentenceEmbedding out{std::vector<double>(emb.dim(), 0.0), 0.0};
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (weights[i] == 0.0)
            continue;
        auto row = emb.row(static_cast<std::size_t>(tokens[i]));
        for (std::size_t d = 0; d < row.size(); ++d)
            out.vector[d] += weights[i] * row[d];
        out.weight_mass += weights[i];
    }
    return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ShapeError("cosine of vectors with different lengths");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw UndefinedCoherence("zero sentence vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double coherence(std::span<const TokenId> context, std::span<const TokenId> response,
                 const EmbeddingMatrix &emb, const Vocabulary &vocab) {
    auto x = sentence_embedding(context, emb, vocab);
    auto y = sentence_embedding(response, emb, vocab);
    if (x.weight_mass == 0.0 || y.weight_mass == 0.0)
        throw UndefinedCoherence("no content words on one side");
    return cosine_similarity(x.vector, y.vector);
}

double coherence(const Tokens &context, const Tokens &response, const EmbeddingMatrix &emb,
                 const Vocabulary &vocab) {
    auto x = vocab.encode(context);
    auto y = vocab.encode(response);
    return coherence(x, y, emb, vocab);
}

void check_distribution(std::span<const double> dist, double tol) {
    double sum = 0.0;
    for (double p : dist) {
        if (!(p >= 0.0))
            throw InvalidDistribution("negative or non-finite probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > tol)
        throw InvalidDistribution("distribution sums to " + std::to_string(sum));
}

SentenceEmbedding soft_sentence_embedding(std::span<const std::vector<double>> dists,
                                          const EmbeddingMatrix &emb) {
    if (dists.empty())
        throw EmptySequence("soft embedding of an empty sequence");
    SentenceEmbedding out{std::vector<double>(emb.dim(), 0.0), 0.0};
    for (const auto &dist : dists) {
        if (dist.size() != emb.rows())
            throw ShapeError("distribution length does not match vocabulary");
        check_distribution(dist);
        for (std::size_t v = 0; v < dist.size(); ++v) {
            if (dist[v] == 0.0)
                continue;
            auto row = emb.row(v);
            for (std::size_t d = 0; d < row.size(); ++d)
                out.vector[d] += dist[v] * row[d];
        }
        out.weight_mass += 1.0;
    }
    return out;
}

double soft_coherence(std::span<const TokenId> context, std::span<const std::vector<double>> dists,
                      const EmbeddingMatrix &emb, const Vocabulary &vocab) {
    auto y = soft_sentence_embedding(dists, emb);
    auto x = sentence_embedding(context, emb, vocab);
    if (x.weight_mass == 0.0)
        throw UndefinedCoherence("no content words in context");
    return cosine_similarity(x.vector, y.vector);
}

} // namespace cohdial
