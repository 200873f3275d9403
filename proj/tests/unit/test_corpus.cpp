#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "cohdial/coherence.hpp"
#include "cohdial/corpus.hpp"
#include "cohdial/errors.hpp"
#include "support.hpp"

using namespace cohdial;

namespace {

DialoguePair scored(double c) {
    DialoguePair p = parse_pair("a ## b ## c\td", 1);
    p.coherence = c;
    return p;
}

std::string repeat(const std::string &w, std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i)
        s += (i ? " " : "") + w;
    return s;
}

// Word vectors for synthetic topics: topic k points along axis k.
testing::Lexicon topic_lexicon(int topics, int words_per_topic) {
    std::vector<std::pair<std::string, std::vector<double>>> words;
    for (int t = 0; t < topics; ++t)
        for (int w = 0; w < words_per_topic; ++w) {
            std::vector<double> v(std::size_t(topics), 0.05 * w);
            v[std::size_t(t)] = 1.0;
            words.push_back({"t" + std::to_string(t) + "w" + std::to_string(w), v});
        }
    for (const char *f : {"the", "a", "and", "of", "to", "is", "it", "you"})
        words.push_back({f, std::vector<double>(std::size_t(topics), 1.0)});
    return testing::make_lexicon(words, {"the", "a", "and", "of", "to", "is", "it", "you"});
}

} // namespace

TEST_SUITE("corpus") {

TEST_CASE("parse a dialogue line") {
    auto p = parse_pair("a ## b ## c\td", 1);
    CHECK(p.context_turns[0] == Tokens{"a"});
    CHECK(p.context_turns[1] == Tokens{"b"});
    CHECK(p.context_turns[2] == Tokens{"c"});
    CHECK(p.response == Tokens{"d"});
    CHECK_FALSE(p.coherence.has_value());
    CHECK(p.context() == Tokens{"a", "b", "c"});

    auto s = parse_pair("Hi there ## how are you? ## fine\tgood.\t0.25", 7);
    CHECK(s.context_turns[1] == Tokens{"how", "are", "you", "?"});
    REQUIRE(s.coherence.has_value());
    CHECK(*s.coherence == 0.25);
    CHECK(parse_pair(format_pair(s), 1).context() == s.context());
    CHECK(*parse_pair(format_pair(s), 1).coherence == 0.25);
}

TEST_CASE("malformed lines raise ParseError with the line number") {
    try {
        parse_pair("a ## b\td", 12);
        FAIL("expected ParseError");
    } catch (const ParseError &e) {
        CHECK(e.line() == 12);
    }
    CHECK_THROWS_AS(parse_pair("a ## ## c\td", 1), ParseError);
    CHECK_THROWS_AS(parse_pair("a ## b ## c", 1), ParseError);
    CHECK_THROWS_AS(parse_pair("a ## b ## c\td\tnotanumber", 1), ParseError);
    CHECK(parse_pair("a ## b ## c", 1, true).response.empty());
}

TEST_CASE("length limits are strict") {
    auto ok = parse_pair("a ## b ## c\t" + repeat("w", 29), 1);
    auto long_resp = parse_pair("a ## b ## c\t" + repeat("w", 30), 1);
    CHECK(satisfies_length_limits(ok));
    CHECK_FALSE(satisfies_length_limits(long_resp));
    auto ctx_ok = parse_pair(repeat("w", 117) + " ## b ## c\td", 1);
    auto ctx_long = parse_pair(repeat("w", 118) + " ## b ## c\td", 1);
    CHECK(satisfies_length_limits(ctx_ok));
    CHECK_FALSE(satisfies_length_limits(ctx_long));
}

TEST_CASE("reader skips headers and counts dropped lines") {
    std::istringstream in("#cfg seed=1\n"
                          "a ## b ## c\td\n"
                          "\n"
                          "a ## b\td\n"
                          "a ## b ## c\t" +
                          repeat("w", 30) +
                          "\n"
                          "x ## y ## z\tq\t0.5\n");
    PairReader reader(in);
    std::vector<DialoguePair> got;
    while (auto p = reader.next())
        got.push_back(*p);
    REQUIRE(got.size() == 2);
    CHECK(got[1].coherence == 0.5);
    CHECK(reader.stats().kept == 2);
    CHECK(reader.stats().malformed == 1);
    CHECK(reader.stats().too_long == 1);

    std::istringstream strict_in("a ## b ## c\td\na ## b\td\n");
    PairReader strict(strict_in, true);
    CHECK(strict.next().has_value());
    CHECK_THROWS_AS(strict.next(), ParseError);
}

TEST_CASE("save and load round trip") {
    testing::TempDir dir("pairs");
    std::vector<DialoguePair> pairs{scored(0.5), parse_pair("x y ## z ## w\tv u", 1)};
    save_pairs(dir / "p.tsv", pairs, {"k=v"});
    LoadStats stats;
    auto back = load_pairs(dir / "p.tsv", false, &stats);
    REQUIRE(back.size() == 2);
    CHECK(back[0].coherence == 0.5);
    CHECK(back[1].response == Tokens{"v", "u"});
    CHECK(stats.kept == 2);
    CHECK_THROWS_AS(load_pairs(dir / "missing.tsv"), IoError);
}

TEST_CASE("scoring examples") {
    auto lex = testing::make_lexicon({{"water", {1.0, 0.0}}, {"fire", {0.0, 1.0}}, {"the", {1, 1}}},
                                     {"the"});
    auto same = parse_pair("the ## water ## the\twater", 1);
    auto ortho = parse_pair("water ## the ## water\tfire", 1);
    auto undef = parse_pair("water ## water ## water\tthe", 1);
    CHECK(score_pair(same, lex.emb, lex.vocab) == 1.0);
    CHECK(score_pair(ortho, lex.emb, lex.vocab) == 0.0);
    CHECK_FALSE(score_pair(undef, lex.emb, lex.vocab).has_value());
    ScoreStats stats;
    auto out = score_pairs({same, undef, ortho}, lex.emb, lex.vocab, &stats);
    REQUIRE(out.size() == 2);
    CHECK(out[0].coherence == 1.0);
    CHECK(out[1].coherence == 0.0);
    CHECK(stats.undefined == 1);
    CHECK(stats.scored == 2);
}

TEST_CASE("corpus scores match independent recomputation") {
    auto lex = topic_lexicon(4, 6);
    SynthConfig cfg;
    cfg.topics = 4;
    cfg.pairs_per_topic = 250;
    cfg.noise = 0.4;
    auto corpus = synth_corpus(cfg);
    auto out = score_pairs(corpus.pairs, lex.emb, lex.vocab, nullptr, 3);
    REQUIRE(out.size() == 1000);

    double mean = 0.0, oracle = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        mean += *out[i].coherence;
        // Weighted sums and cosine written out directly.
        std::vector<double> x(4, 0.0), y(4, 0.0);
        for (const auto &t : corpus.pairs[i].context())
            if (!lex.vocab.is_stopword(lex.vocab.id(t)))
                for (int k = 0; k < 4; ++k)
                    x[k] += lex.emb.row(std::size_t(lex.vocab.id(t)))[k];
        for (const auto &t : corpus.pairs[i].response)
            if (!lex.vocab.is_stopword(lex.vocab.id(t)))
                for (int k = 0; k < 4; ++k)
                    y[k] += lex.emb.row(std::size_t(lex.vocab.id(t)))[k];
        double dot = 0, nx = 0, ny = 0;
        for (int k = 0; k < 4; ++k) {
            dot += x[k] * y[k];
            nx += x[k] * x[k];
            ny += y[k] * y[k];
        }
        oracle += dot / std::sqrt(nx * ny);
    }
    CHECK(std::abs(mean / 1000.0 - oracle / 1000.0) <= 1e-9);
}

TEST_CASE("normal fit") {
    auto d = fit_coherence_distribution(std::vector<double>{0.0, 1.0});
    CHECK(d.mu == 0.5);
    CHECK(d.sigma == 0.5);
    CHECK(d.cutoff == 1.5);
    CHECK_THROWS_AS(fit_coherence_distribution(std::vector<double>{0.3, 0.3, 0.3}),
                    DegenerateDistribution);
    CHECK_THROWS_AS(fit_coherence_distribution(std::vector<double>{0.3}), InsufficientData);

    // mu 0.25 and sigma 0.22 put the cutoff at 0.69.
    std::vector<double> two_point{0.25 - 0.22, 0.25 + 0.22};
    auto fit = fit_coherence_distribution(two_point);
    CHECK(fit.mu == doctest::Approx(0.25));
    CHECK(fit.sigma == doctest::Approx(0.22));
    CHECK(fit.cutoff == doctest::Approx(0.69));
    CHECK(fit.cutoff >= fit.mu);
}

TEST_CASE("moment accumulator merges like a single pass") {
    std::vector<double> xs;
    for (int i = 0; i < 101; ++i)
        xs.push_back(std::sin(i * 0.7));
    MomentAccumulator all, a, b;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        all.add(xs[i]);
        (i < 40 ? a : b).add(xs[i]);
    }
    a.merge(b);
    CHECK(a.count() == all.count());
    CHECK(a.mean() == doctest::Approx(all.mean()).epsilon(1e-14));
    CHECK(a.population_variance() == doctest::Approx(all.population_variance()).epsilon(1e-12));
    double mu = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
    double var = 0.0;
    for (double x : xs)
        var += (x - mu) * (x - mu);
    CHECK(all.population_variance() == doctest::Approx(var / double(xs.size())).epsilon(1e-12));
}

TEST_CASE("filter keeps pairs at or above the threshold") {
    std::vector<DialoguePair> pairs{scored(0.2), scored(0.68), scored(0.9), scored(0.6799999)};
    auto kept = filter_corpus(pairs, 0.68);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].coherence == 0.68);
    CHECK(kept[1].coherence == 0.9);
    CHECK(filter_corpus(pairs, 1.1).empty());
    std::vector<DialoguePair> unscored{parse_pair("a ## b ## c\td", 1)};
    CHECK_THROWS_AS(filter_corpus(unscored, 0.5), MissingScore);
}

TEST_CASE("filter is idempotent and monotone in the threshold") {
    std::vector<DialoguePair> pairs;
    for (int i = 0; i < 200; ++i)
        pairs.push_back(scored(std::cos(i * 1.3)));
    for (double t0 : {-0.5, 0.0, 0.3, 0.68}) {
        auto once = filter_corpus(pairs, t0);
        auto twice = filter_corpus(once, t0);
        REQUIRE(once.size() == twice.size());
        for (std::size_t i = 0; i < once.size(); ++i)
            CHECK(once[i].coherence == twice[i].coherence);
        auto tighter = filter_corpus(pairs, t0 + 0.2);
        std::multiset<double> base;
        for (const auto &p : once)
            base.insert(*p.coherence);
        for (const auto &p : tighter)
            CHECK(base.count(*p.coherence) > 0);
        CHECK(tighter.size() <= once.size());
    }
}

TEST_CASE("split is a seeded partition") {
    std::vector<DialoguePair> pairs;
    for (int i = 0; i < 10; ++i)
        pairs.push_back(scored(i / 10.0));
    auto s = split_corpus(pairs, {8, 1, 1}, 4);
    CHECK(s.train.size() == 8);
    std::set<double> seen;
    for (const auto *part : {&s.train, &s.dev, &s.test})
        for (const auto &p : *part)
            CHECK(seen.insert(*p.coherence).second);
    CHECK(seen.size() == 10);
    auto again = split_corpus(pairs, {8, 1, 1}, 4);
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(again.train[i].coherence == s.train[i].coherence);
    std::span<const DialoguePair> nine(pairs.data(), 9);
    CHECK_THROWS_AS(split_corpus(nine, {8, 1, 1}, 4), InsufficientData);
}

TEST_CASE("synthetic corpus respects its noise level") {
    SynthConfig cfg;
    cfg.topics = 3;
    cfg.pairs_per_topic = 50;
    cfg.noise = 0.0;
    auto clean = synth_corpus(cfg);
    for (std::size_t i = 0; i < clean.pairs.size(); ++i) {
        CHECK(clean.context_topic[i] == clean.response_topic[i]);
        for (const auto &t : clean.pairs[i].response)
            CHECK((synth_topic_of(t) == -1 || synth_topic_of(t) == clean.context_topic[i]));
        CHECK(satisfies_length_limits(clean.pairs[i]));
    }
    cfg.noise = 1.0;
    auto flipped = synth_corpus(cfg);
    for (std::size_t i = 0; i < flipped.pairs.size(); ++i)
        CHECK(flipped.context_topic[i] != flipped.response_topic[i]);

    cfg.topics = 4;
    cfg.pairs_per_topic = 2500;
    cfg.noise = 0.5;
    auto half = synth_corpus(cfg);
    std::size_t shared = 0;
    for (std::size_t i = 0; i < half.pairs.size(); ++i)
        shared += half.context_topic[i] == half.response_topic[i];
    double frac = double(shared) / double(half.pairs.size());
    CHECK(frac >= 0.48);
    CHECK(frac <= 0.52);

    auto again = synth_corpus(cfg);
    CHECK(format_pair(again.pairs[123]) == format_pair(half.pairs[123]));
    CHECK(synth_topic_of("t12w3") == 12);
    CHECK(synth_topic_of("the") == -1);
    cfg.topics = 1;
    CHECK_THROWS_AS(synth_corpus(cfg), InputError);
}

TEST_CASE("streaming scoring is bounded and order-preserving") {
    auto lex = topic_lexicon(4, 6);
    SynthConfig cfg;
    cfg.topics = 4;
    cfg.pairs_per_topic = 300;
    cfg.noise = 0.5;
    auto corpus = synth_corpus(cfg);
    std::stringstream text;
    for (const auto &p : corpus.pairs)
        text << format_pair(p) << '\n';
    text << "broken line\n";

    auto expected = score_pairs(corpus.pairs, lex.emb, lex.vocab);
    for (unsigned workers : {1u, 3u}) {
        std::istringstream in(text.str());
        StreamConfig sc;
        sc.buffer = 64;
        sc.workers = workers;
        std::vector<DialoguePair> got;
        auto stats = score_stream(in, lex.emb, lex.vocab, sc,
                                  [&](const DialoguePair &p) { got.push_back(p); });
        CHECK(stats.max_buffered <= 64);
        CHECK(stats.load.malformed == 1);
        CHECK(stats.emitted == expected.size());
        REQUIRE(got.size() == expected.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(*got[i].coherence == *expected[i].coherence);
    }
}

TEST_CASE("bimodal corpus: fitted cutoff raises the mean coherence") {
    auto lex = topic_lexicon(4, 6);
    SynthConfig cfg;
    cfg.topics = 4;
    cfg.pairs_per_topic = 500;
    cfg.noise = 0.9;
    auto scored_pairs = score_pairs(synth_corpus(cfg).pairs, lex.emb, lex.vocab);
    std::vector<double> scores;
    for (const auto &p : scored_pairs)
        scores.push_back(*p.coherence);
    auto dist = fit_coherence_distribution(scores);
    auto kept = filter_corpus(scored_pairs, dist.cutoff);
    REQUIRE_FALSE(kept.empty());
    double kept_mean = 0.0;
    for (const auto &p : kept) {
        CHECK(*p.coherence >= dist.cutoff);
        kept_mean += *p.coherence;
    }
    kept_mean /= double(kept.size());
    CHECK(kept_mean - dist.mu >= 0.2);
}

} // TEST_SUITE
