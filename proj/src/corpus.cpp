#include "cohdial/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "cohdial/artifact.hpp"
#include "cohdial/coherence.hpp"
#include "cohdial/errors.hpp"
#include "cohdial/parallel.hpp"

namespace cohdial {

Tokens DialoguePair::context() const {
    Tokens out;
    out.reserve(context_length());
    for (const auto &turn : context_turns)
        out.insert(out.end(), turn.begin(), turn.end());
    return out;
}

std::size_t DialoguePair::context_length() const {
    std::size_t n = 0;
    for (const auto &turn : context_turns)
        n += turn.size();
    return n;
}

namespace {

double parse_score(std::string_view text, std::size_t lineno) {
    text = trim(text);
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v))
        throw ParseError(lineno, "bad coherence score '" + std::string(text) + "'");
    return v;
}

std::string format_score(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace

DialoguePair parse_pair(std::string_view line, std::size_t lineno, bool response_optional) {
    if (!line.empty() && line.back() == '\r')
        line.remove_suffix(1);
    auto columns = split(line, "\t");
    if (columns.size() > 3 || (columns.size() < 2 && !response_optional))
        throw ParseError(lineno, "expected context<TAB>response[<TAB>score], found " +
                                     std::to_string(columns.size()) + " columns");
    auto turns = split(columns[0], trim(kTurnSeparator));
    if (turns.size() != kContextTurns)
        throw ParseError(lineno, "expected 3 context turns, found " + std::to_string(turns.size()));

    DialoguePair pair;
    for (std::size_t i = 0; i < kContextTurns; ++i) {
        pair.context_turns[i] = tokenize(turns[i]);
        if (pair.context_turns[i].empty())
            throw ParseError(lineno, "empty context turn " + std::to_string(i + 1));
    }
    if (columns.size() >= 2) {
        pair.response = tokenize(columns[1]);
        if (pair.response.empty() && !response_optional)
            throw ParseError(lineno, "empty response");
    }
    if (columns.size() == 3)
        pair.coherence = parse_score(columns[2], lineno);
    return pair;
}

bool satisfies_length_limits(const DialoguePair &pair) {
    return pair.context_length() < kMaxContextTokens && pair.response.size() < kMaxResponseTokens;
}

std::string format_context(const DialoguePair &pair) {
    std::string out;
    for (std::size_t i = 0; i < kContextTurns; ++i) {
        if (i)
            out.append(kTurnSeparator);
        out.append(join(pair.context_turns[i]));
    }
    return out;
}

std::string format_pair(const DialoguePair &pair) {
    std::string out = format_context(pair);
    out.push_back('\t');
    out.append(join(pair.response));
    if (pair.coherence) {
        out.push_back('\t');
        out.append(format_score(*pair.coherence));
    }
    return out;
}

PairReader::PairReader(std::istream &in, bool strict, bool response_optional)
    : in_(in), strict_(strict), response_optional_(response_optional) {}

std::optional<DialoguePair> PairReader::next() {
    while (std::getline(in_, line_)) {
        ++stats_.lines;
        if (trim(line_).empty() || std::string_view(line_).starts_with(kHeaderPrefix))
            continue;
        DialoguePair pair;
        try {
            pair = parse_pair(line_, stats_.lines, response_optional_);
        } catch (const ParseError &) {
            if (strict_)
                throw;
            ++stats_.malformed;
            continue;
        }
        if (!satisfies_length_limits(pair)) {
            ++stats_.too_long;
            continue;
        }
        ++stats_.kept;
        return pair;
    }
    return std::nullopt;
}

std::vector<DialoguePair> load_pairs(const std::filesystem::path &path, bool strict,
                                     LoadStats *stats, bool response_optional) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open corpus " + path.string());
    PairReader reader(in, strict, response_optional);
    std::vector<DialoguePair> out;
    while (auto pair = reader.next())
        out.push_back(std::move(*pair));
    if (stats)
        *stats = reader.stats();
    return out;
}

void save_pairs(const std::filesystem::path &path, std::span<const DialoguePair> pairs,
                const std::vector<std::string> &header) {
    AtomicFile file(path);
    for (const auto &h : header)
        file.stream() << kHeaderPrefix << h << '\n';
    for (const auto &p : pairs)
        file.stream() << format_pair(p) << '\n';
    file.commit();
}

std::optional<double> score_pair(const DialoguePair &pair, const EmbeddingMatrix &emb,
                                 const Vocabulary &vocab) {
    auto x = vocab.encode(pair.context());
    auto y = vocab.encode(pair.response);
    try {
        return coherence(x, y, emb, vocab);
    } catch (const UndefinedCoherence &) {
        return std::nullopt;
    }
}

std::vector<DialoguePair> score_pairs(std::vector<DialoguePair> pairs, const EmbeddingMatrix &emb,
                                      const Vocabulary &vocab, ScoreStats *stats,
                                      unsigned workers) {
    std::vector<std::optional<double>> scores(pairs.size());
    parallel_for(pairs.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            scores[i] = score_pair(pairs[i], emb, vocab);
    });
    std::vector<DialoguePair> out;
    out.reserve(pairs.size());
    ScoreStats local;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!scores[i]) {
            ++local.undefined;
            continue;
        }
        pairs[i].coherence = scores[i];
        out.push_back(std::move(pairs[i]));
        ++local.scored;
    }
    if (stats)
        *stats = local;
    return out;
}

void MomentAccumulator::add(double x) {
    ++n_;
    double delta = x - mean_;
    mean_ += delta / double(n_);
    m2_ += delta * (x - mean_);
}

void MomentAccumulator::merge(const MomentAccumulator &other) {
    if (other.n_ == 0)
        return;
    if (n_ == 0) {
        *this = other;
        return;
    }
    double n = double(n_ + other.n_);
    double delta = other.mean_ - mean_;
    mean_ += delta * double(other.n_) / n;
    m2_ += other.m2_ + delta * delta * double(n_) * double(other.n_) / n;
    n_ += other.n_;
}

CoherenceDistribution fit_coherence_distribution(const MomentAccumulator &moments) {
    if (moments.count() < 2)
        throw InsufficientData("need at least two scores to fit a distribution");
    double sigma = std::sqrt(moments.population_variance());
    if (!(sigma > 0.0))
        throw DegenerateDistribution("all coherence scores are equal");
    return {moments.mean(), sigma, moments.mean() + 2.0 * sigma};
}

CoherenceDistribution fit_coherence_distribution(std::span<const double> scores) {
    if (scores.size() < 2)
        throw InsufficientData("need at least two scores to fit a distribution");
    double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / double(scores.size());
    double ss = 0.0;
    for (double s : scores)
        ss += (s - mean) * (s - mean);
    double sigma = std::sqrt(ss / double(scores.size()));
    if (!(sigma > 0.0))
        throw DegenerateDistribution("all coherence scores are equal");
    return {mean, sigma, mean + 2.0 * sigma};
}

bool passes_filter(const DialoguePair &pair, double threshold) {
    if (!pair.coherence)
        throw MissingScore("pair has no coherence score");
    return *pair.coherence >= threshold;
}

std::vector<DialoguePair> filter_corpus(std::span<const DialoguePair> pairs, double threshold) {
    std::vector<DialoguePair> out;
    for (const auto &p : pairs)
        if (passes_filter(p, threshold))
            out.push_back(p);
    return out;
}

CorpusSplit split_corpus(std::span<const DialoguePair> pairs, SplitSizes sizes,
                         std::uint64_t seed) {
    std::size_t need = sizes.train + sizes.dev + sizes.test;
    if (need > pairs.size())
        throw InsufficientData("split needs " + std::to_string(need) + " pairs, corpus has " +
                               std::to_string(pairs.size()));
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    CorpusSplit out;
    std::size_t pos = 0;
    auto take = [&](std::vector<DialoguePair> &dst, std::size_t n) {
        dst.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            dst.push_back(pairs[order[pos++]]);
    };
    take(out.train, sizes.train);
    take(out.dev, sizes.dev);
    take(out.test, sizes.test);
    return out;
}

StreamStats score_stream(std::istream &in, const EmbeddingMatrix &emb, const Vocabulary &vocab,
                         const StreamConfig &config,
                         const std::function<void(const DialoguePair &)> &sink) {
    const std::size_t buffer = std::max<std::size_t>(1, config.buffer);
    PairReader reader(in, config.strict);
    StreamStats stats;
    std::vector<DialoguePair> chunk;
    std::vector<char> defined;
    chunk.reserve(buffer);

    auto flush = [&] {
        stats.max_buffered = std::max(stats.max_buffered, chunk.size());
        defined.assign(chunk.size(), 1);
        parallel_for(chunk.size(), config.workers, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                if (chunk[i].coherence && !config.rescore)
                    continue;
                chunk[i].coherence = score_pair(chunk[i], emb, vocab);
                defined[i] = chunk[i].coherence.has_value();
            }
        });
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            if (!defined[i]) {
                ++stats.undefined;
                continue;
            }
            sink(chunk[i]);
            ++stats.emitted;
        }
        chunk.clear();
    };

    while (auto pair = reader.next()) {
        chunk.push_back(std::move(*pair));
        if (chunk.size() == buffer)
            flush();
    }
    if (!chunk.empty())
        flush();
    stats.load = reader.stats();
    return stats;
}

int synth_topic_of(std::string_view token) {
    if (token.size() < 4 || token[0] != 't')
        return -1;
    auto w = token.find('w');
    if (w == std::string_view::npos || w == 1)
        return -1;
    int topic = 0;
    auto res = std::from_chars(token.data() + 1, token.data() + w, topic);
    if (res.ec != std::errc() || res.ptr != token.data() + w)
        return -1;
    int word = 0;
    res = std::from_chars(token.data() + w + 1, token.data() + token.size(), word);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size())
        return -1;
    return topic;
}

SynthCorpus synth_corpus(const SynthConfig &config) {
    if (config.topics < 2)
        throw InputError("synthetic corpus needs at least two topics");
    if (config.noise < 0.0 || config.noise > 1.0)
        throw InputError("noise must lie in [0, 1]");
    static const char *fillers[] = {"the", "a", "and", "of", "to", "is", "it", "you"};

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform_int = [&](int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    };
    auto word = [&](int topic) {
        return "t" + std::to_string(topic) + "w" +
               std::to_string(uniform_int(0, config.words_per_topic - 1));
    };
    auto utterance = [&](int topic, int min_content, int max_content) {
        Tokens out;
        int content = uniform_int(min_content, max_content);
        for (int i = 0; i < content; ++i) {
            if (unit(rng) < 0.3)
                out.emplace_back(fillers[uniform_int(0, 7)]);
            out.push_back(word(topic));
        }
        return out;
    };

    SynthCorpus out;
    for (int topic = 0; topic < config.topics; ++topic) {
        for (int k = 0; k < config.pairs_per_topic; ++k) {
            DialoguePair pair;
            for (auto &turn : pair.context_turns)
                turn = utterance(topic, 1, 3);
            int response_topic = topic;
            if (unit(rng) < config.noise) {
                response_topic = uniform_int(0, config.topics - 2);
                if (response_topic >= topic)
                    ++response_topic;
            }
            pair.response = utterance(response_topic, 1, 3);
            out.pairs.push_back(std::move(pair));
            out.context_topic.push_back(topic);
            out.response_topic.push_back(response_topic);
        }
    }
    return out;
}

} // namespace cohdial
