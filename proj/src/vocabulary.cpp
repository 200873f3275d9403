#include "cohdial/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cohdial/artifact.hpp"
#include "cohdial/errors.hpp"

namespace cohdial {

StopWords::StopWords(std::span<const std::string> words) {
    for (const auto &w : words)
        words_.insert(to_lower(w));
}

StopWords StopWords::load(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open stop-word list " + path.string());
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (!t.empty())
            words.emplace_back(t);
    }
    return StopWords(words);
}

StopWords StopWords::load_default() {
    return load(std::filesystem::path(COHDIAL_DATA_DIR) / "stopwords.txt");
}

bool StopWords::contains(std::string_view token) const {
    return words_.count(to_lower(token)) != 0;
}

Vocabulary::Vocabulary() {
    for (const char *s : {"<pad>", "<unk>", "<bos>", "<eos>"})
        add(s, 0, false);
}

Vocabulary Vocabulary::build(std::span<const Tokens> sentences, std::int64_t min_count,
                             std::size_t max_size, const StopWords &stopwords) {
    if (min_count < 1)
        throw InputError("min_count must be >= 1");
    struct Entry {
        std::int64_t count = 0;
        std::size_t first = 0;
    };
    std::unordered_map<std::string, Entry> counts;
    std::size_t position = 0;
    for (const auto &sentence : sentences) {
        for (const auto &tok : sentence) {
            auto [it, inserted] = counts.try_emplace(tok);
            if (inserted)
                it->second.first = position;
            ++it->second.count;
            ++position;
        }
    }
    if (position == 0)
        throw EmptyCorpus("corpus contains no tokens");

    std::vector<std::pair<std::string, Entry>> order(counts.begin(), counts.end());
    std::sort(order.begin(), order.end(), [](const auto &a, const auto &b) {
        if (a.second.count != b.second.count)
            return a.second.count > b.second.count;
        return a.second.first < b.second.first;
    });

    Vocabulary vocab;
    for (auto &[tok, entry] : order) {
        if (vocab.size() >= max_size)
            break;
        if (entry.count < min_count || vocab.contains(tok))
            continue;
        vocab.add(tok, entry.count, stopwords.contains(tok));
    }
    return vocab;
}

TokenId Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
    return index_.count(std::string(token)) != 0;
}

TokenIds Vocabulary::encode(const Tokens &tokens) const {
    TokenIds ids;
    ids.reserve(tokens.size());
    for (const auto &t : tokens)
        ids.push_back(id(t));
    return ids;
}

Tokens Vocabulary::decode(std::span<const TokenId> ids) const {
    Tokens out;
    out.reserve(ids.size());
    for (auto i : ids)
        out.push_back(token(i));
    return out;
}

TokenId Vocabulary::add(std::string token, std::int64_t frequency, bool stopword) {
    auto id = static_cast<TokenId>(tokens_.size());
    auto [it, inserted] = index_.emplace(token, id);
    if (!inserted)
        throw InputError("duplicate vocabulary token '" + token + "'");
    tokens_.push_back(std::move(token));
    freq_.push_back(frequency);
    stop_.push_back(stopword ? 1 : 0);
    return id;
}

void Vocabulary::set_stopwords(const StopWords &stopwords) {
    for (std::size_t i = kNumSpecials; i < tokens_.size(); ++i)
        stop_[i] = stopwords.contains(tokens_[i]) ? 1 : 0;
}

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto &t : tokens_) {
        for (unsigned char c : t) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= 0xff;
        h *= 1099511628211ull;
    }
    return h;
}

void Vocabulary::save(const std::filesystem::path &path) const {
    std::ostringstream out;
    for (std::size_t i = 0; i < tokens_.size(); ++i)
        out << tokens_[i] << '\t' << freq_[i] << '\t' << int(stop_[i]) << '\n';
    write_file_atomic(path, out.str());
}

Vocabulary Vocabulary::load(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open vocabulary " + path.string());
    Vocabulary vocab;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto fields = split(line, "\t");
        if (fields.size() != 3)
            throw ParseError(lineno, "expected token<TAB>frequency<TAB>stopword");
        std::int64_t freq = 0;
        try {
            freq = std::stoll(fields[1]);
        } catch (const std::exception &) {
            throw ParseError(lineno, "bad frequency '" + fields[1] + "'");
        }
        if (lineno <= static_cast<std::size_t>(kNumSpecials)) {
            if (fields[0] != vocab.token(static_cast<TokenId>(lineno - 1)))
                throw ParseError(lineno, "special token out of place");
            continue;
        }
        vocab.add(fields[0], freq, fields[2] == "1");
    }
    if (lineno == 0)
        throw EmptyCorpus("vocabulary file " + path.string() + " is empty");
    return vocab;
}

} // namespace cohdial
