#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "cohdial/embedding.hpp"
#include "cohdial/vocabulary.hpp"

namespace testing {

// Vocabulary of `words` (in order, after the specials) with the given
// vectors; words listed in `stop` are flagged as stop words.
struct Lexicon {
    cohdial::Vocabulary vocab;
    cohdial::EmbeddingMatrix emb;

    cohdial::TokenIds ids(const std::vector<std::string> &tokens) const {
        cohdial::TokenIds out;
        for (const auto &t : tokens)
            out.push_back(vocab.id(t));
        return out;
    }
};

inline Lexicon make_lexicon(const std::vector<std::pair<std::string, std::vector<double>>> &words,
                            const std::vector<std::string> &stop = {}) {
    Lexicon lex;
    const std::size_t dim = words.empty() ? 0 : words.front().second.size();
    for (const auto &[w, v] : words) {
        bool is_stop = false;
        for (const auto &s : stop)
            is_stop = is_stop || s == w;
        lex.vocab.add(w, 1, is_stop);
    }
    lex.emb = cohdial::EmbeddingMatrix(lex.vocab.size(), dim);
    for (const auto &[w, v] : words) {
        auto row = lex.emb.row(std::size_t(lex.vocab.id(w)));
        for (std::size_t i = 0; i < dim; ++i)
            row[i] = v[i];
    }
    return lex;
}

// Fresh scratch directory, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string &tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("cohdial_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path &path() const { return path_; }
    std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

} // namespace testing
