#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cohdial/vocabulary.hpp"

namespace cohdial {

// Sparse (center, context) -> distance-weighted count.
class CooccurrenceTable {
  public:
    explicit CooccurrenceTable(std::size_t vocab_size = 0) : vocab_size_(vocab_size) {}

    void add(TokenId center, TokenId context, double weight);
    double get(TokenId center, TokenId context) const;
    // Additive and commutative; used to merge shards.
    void merge(const CooccurrenceTable &other);

    std::size_t vocab_size() const { return vocab_size_; }
    std::size_t nonzeros() const { return counts_.size(); }
    bool empty() const { return counts_.empty(); }

    struct Entry {
        TokenId center;
        TokenId context;
        double count;
    };
    // Sorted by (center, context).
    std::vector<Entry> entries() const;

    bool operator==(const CooccurrenceTable &other) const {
        return vocab_size_ == other.vocab_size_ && counts_ == other.counts_;
    }

  private:
    static std::uint64_t key(TokenId a, TokenId b) {
        return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b);
    }

    std::size_t vocab_size_;
    std::unordered_map<std::uint64_t, double> counts_;
};

// Each sentence is one turn; windows never cross sentences. A pair at token
// distance d (1 <= d <= window) adds 1/d in both directions.
CooccurrenceTable count_cooccurrences(std::span<const Tokens> sentences, const Vocabulary &vocab,
                                      int window);

// Dense (vocab size x dim) row-major matrix of word vectors.
class EmbeddingMatrix {
  public:
    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t rows, std::size_t dim, double fill = 0.0)
        : rows_(rows), dim_(dim), data_(rows * dim, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t dim() const { return dim_; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * dim_, dim_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }
    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    void scale(double factor);

  private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

struct GloveConfig {
    std::size_t dim = 100;
    int epochs = 25;
    double x_max = 100.0;
    double alpha = 0.75;
    double lr = 0.05;
    std::uint64_t seed = 1;
};

// min(1, (x / x_max)^alpha), zero for x <= 0.
double glove_weight(double x, double x_max, double alpha);

struct GloveResult {
    EmbeddingMatrix embeddings;
    // Mean weighted squared error per epoch.
    std::vector<double> epoch_loss;
};

// Weighted least squares on log co-occurrence with AdaGrad updates,
// single-threaded and reproducible for a given seed. The exported vectors
// are center + context; rows of PAD, BOS and EOS are zero.
GloveResult train_glove(const CooccurrenceTable &table, const GloveConfig &config);

// `token v1 ... vdim`, one token per line, shortest round-trip decimals,
// after optional `#cfg` header lines.
void save_embeddings(const EmbeddingMatrix &m, const Vocabulary &vocab,
                     const std::filesystem::path &path,
                     const std::vector<std::string> &header = {});

struct LoadedEmbeddings {
    EmbeddingMatrix matrix;
    Vocabulary vocab;
};

// Blank and `#cfg` lines are skipped. Missing specials are inserted with
// zero rows. Stop-word flags are taken from `stopwords`; frequencies are
// unknown and recorded as 1.
LoadedEmbeddings load_embeddings(const std::filesystem::path &path,
                                 const StopWords &stopwords = {});

// Re-indexes rows of `emb` (ids of `from`) to the ids of `to`. Specials and
// tokens unknown to `from` get zero rows.
EmbeddingMatrix align_embeddings(const EmbeddingMatrix &emb, const Vocabulary &from,
                                 const Vocabulary &to);

} // namespace cohdial
