#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cohdial/text.hpp"

namespace cohdial {

using TokenId = std::int32_t;
using TokenIds = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr TokenId kNumSpecials = 4;

// Case-insensitive token set.
class StopWords {
  public:
    StopWords() = default;
    explicit StopWords(std::span<const std::string> words);

    // One token per line; blank lines ignored.
    static StopWords load(const std::filesystem::path &path);
    // The list shipped in data/stopwords.txt.
    static StopWords load_default();

    bool contains(std::string_view token) const;
    std::size_t size() const { return words_.size(); }

  private:
    std::unordered_set<std::string> words_;
};

class Vocabulary {
  public:
    Vocabulary();

    // Tokens ordered by descending frequency, ties by first occurrence.
    // max_size counts the four specials.
    static Vocabulary build(std::span<const Tokens> sentences, std::int64_t min_count,
                            std::size_t max_size, const StopWords &stopwords);

    std::size_t size() const { return tokens_.size(); }

    TokenId id(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string &token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::int64_t frequency(TokenId id) const { return freq_.at(static_cast<std::size_t>(id)); }
    bool is_stopword(TokenId id) const { return stop_.at(static_cast<std::size_t>(id)) != 0; }
    static bool is_special(TokenId id) { return id >= 0 && id < kNumSpecials; }

    TokenIds encode(const Tokens &tokens) const;
    Tokens decode(std::span<const TokenId> ids) const;

    // Adds a token after construction (used when loading embeddings).
    TokenId add(std::string token, std::int64_t frequency, bool stopword);
    void set_stopwords(const StopWords &stopwords);

    // FNV-1a over the token list; identifies the vocabulary in checkpoints.
    std::uint64_t hash() const;

    // `token<TAB>frequency<TAB>stopword(0|1)` per line, specials first.
    void save(const std::filesystem::path &path) const;
    static Vocabulary load(const std::filesystem::path &path);

  private:
    std::vector<std::string> tokens_;
    std::vector<std::int64_t> freq_;
    std::vector<char> stop_;
    std::unordered_map<std::string, TokenId> index_;
};

} // namespace cohdial
