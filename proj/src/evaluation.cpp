#include "cohdial/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cohdial/coherence.hpp"
#include "cohdial/errors.hpp"
#include "cohdial/parallel.hpp"

namespace cohdial {

namespace {

using NgramCounts = std::map<std::vector<std::string_view>, std::size_t>;

NgramCounts count_ngrams(const Tokens &tokens, std::size_t n) {
    NgramCounts counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string_view>(tokens.begin() + std::ptrdiff_t(i),
                                               tokens.begin() + std::ptrdiff_t(i + n))];
    return counts;
}

} // namespace

BleuResult bleu(std::span<const Tokens> hypotheses, std::span<const Tokens> references,
                int max_n) {
    if (hypotheses.size() != references.size())
        throw InputError("hypothesis and reference counts differ");
    if (references.empty())
        throw InputError("no references");
    if (max_n < 1)
        throw InputError("max_n must be >= 1");

    std::vector<std::size_t> matches(std::size_t(max_n), 0), totals(std::size_t(max_n), 0);
    BleuResult out;
    for (std::size_t k = 0; k < hypotheses.size(); ++k) {
        const auto &hyp = hypotheses[k];
        const auto &ref = references[k];
        out.hyp_length += hyp.size();
        out.ref_length += ref.size();
        for (std::size_t n = 1; n <= std::size_t(max_n); ++n) {
            auto h = count_ngrams(hyp, n);
            auto r = count_ngrams(ref, n);
            for (const auto &[gram, cnt] : h) {
                auto it = r.find(gram);
                if (it != r.end())
                    matches[n - 1] += std::min(cnt, it->second);
                totals[n - 1] += cnt;
            }
        }
    }

    if (out.hyp_length == 0)
        out.brevity_penalty = 0.0;
    else if (out.hyp_length < out.ref_length)
        out.brevity_penalty = std::exp(1.0 - double(out.ref_length) / double(out.hyp_length));

    double log_sum = 0.0;
    for (std::size_t n = 0; n < std::size_t(max_n); ++n) {
        double p = totals[n] ? double(matches[n]) / double(totals[n]) : 0.0;
        out.precisions.push_back(p);
        if (p == 0.0)
            out.zero_matches = true;
        log_sum += p > 0.0 ? std::log(p) : 0.0;
        double score = out.zero_matches ? 0.0
                                        : 100.0 * out.brevity_penalty *
                                              std::exp(log_sum / double(n + 1));
        out.scores.push_back(std::min(score, 100.0));
    }
    return out;
}

double distinct_n(std::span<const Tokens> hypotheses, int n) {
    if (n < 1)
        throw InputError("n must be >= 1");
    std::set<std::vector<std::string_view>> unique;
    std::size_t total = 0;
    for (const auto &h : hypotheses) {
        for (std::size_t i = 0; i + std::size_t(n) <= h.size(); ++i) {
            unique.emplace(h.begin() + std::ptrdiff_t(i), h.begin() + std::ptrdiff_t(i) + n);
            ++total;
        }
    }
    if (total == 0)
        throw InputError("no hypothesis has " + std::to_string(n) + " tokens");
    return 100.0 * double(unique.size()) / double(total);
}

double distinct_sent(std::span<const Tokens> hypotheses) {
    if (hypotheses.empty())
        throw InputError("no hypotheses");
    std::set<Tokens> unique(hypotheses.begin(), hypotheses.end());
    return 100.0 * double(unique.size()) / double(hypotheses.size());
}

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values)
            s += v;
        return s;
    }
    std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

CohResult coh_metric(std::span<const Tokens> contexts, std::span<const Tokens> hypotheses,
                     const EmbeddingMatrix &emb, const Vocabulary &vocab, unsigned workers) {
    if (contexts.size() != hypotheses.size())
        throw InputError("context and hypothesis counts differ");
    std::vector<double> scores(contexts.size(), 0.0);
    std::vector<char> defined(contexts.size(), 0);
    parallel_for(contexts.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                scores[i] = coherence(contexts[i], hypotheses[i], emb, vocab);
                defined[i] = 1;
            } catch (const UndefinedCoherence &) {
            } catch (const EmptySequence &) {
            }
        }
    });
    std::vector<double> kept;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (defined[i])
            kept.push_back(scores[i]);
    if (kept.empty())
        throw UndefinedCoherence("coherence is undefined for every pair");
    CohResult out;
    out.defined = kept.size();
    out.skipped = scores.size() - kept.size();
    out.mean = pairwise_sum(kept) / double(kept.size());
    return out;
}

namespace {

std::string shortest(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace

std::string EvalReport::to_key_value() const {
    std::ostringstream out;
    out << "bleu4=" << shortest(bleu4) << '\n'
        << "b1=" << shortest(b1) << '\n'
        << "b2=" << shortest(b2) << '\n'
        << "b3=" << shortest(b3) << '\n'
        << "coh=" << shortest(coh) << '\n'
        << "d1=" << shortest(d1) << '\n'
        << "d2=" << shortest(d2) << '\n'
        << "d_sent=" << shortest(d_sent) << '\n'
        << "n_items=" << n_items << '\n'
        << "coh_skipped=" << coh_skipped << '\n'
        << "distinct_sample=" << distinct_sample << '\n'
        << "bleu_zero_matches=" << (bleu_zero_matches ? 1 : 0) << '\n';
    return out.str();
}

std::string EvalReport::to_table() const {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "%8s %8s %8s %8s %8s %8s %8s %8s\n", "BLEU%", "B1%", "B2%",
                  "B3%", "Coh", "D-1%", "D-2%", "D-Sent%");
    out += buf;
    std::snprintf(buf, sizeof buf, "%8.2f %8.2f %8.2f %8.2f %8.3f %8.2f %8.2f %8.2f\n", bleu4, b1,
                  b2, b3, coh, d1, d2, d_sent);
    out += buf;
    return out;
}

EvalReport EvalReport::from_key_value(const std::string &text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty() || line[0] == '#')
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(lineno, "expected key=value");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto num = [&](const std::string &key) {
        auto it = kv.find(key);
        if (it == kv.end())
            throw ParseError(0, "missing report field '" + key + "'");
        double v = 0.0;
        const auto &s = it->second;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw ParseError(0, "bad value for '" + key + "'");
        return v;
    };
    EvalReport r;
    r.bleu4 = num("bleu4");
    r.b1 = num("b1");
    r.b2 = num("b2");
    r.b3 = num("b3");
    r.coh = num("coh");
    r.d1 = num("d1");
    r.d2 = num("d2");
    r.d_sent = num("d_sent");
    r.n_items = std::size_t(num("n_items"));
    r.coh_skipped = std::size_t(num("coh_skipped"));
    r.distinct_sample = std::size_t(num("distinct_sample"));
    r.bleu_zero_matches = num("bleu_zero_matches") != 0.0;
    return r;
}

EvalReport evaluate(std::span<const Tokens> contexts, std::span<const Tokens> hypotheses,
                    std::span<const Tokens> references, const EmbeddingMatrix &emb,
                    const Vocabulary &vocab, const EvalOptions &options) {
    if (hypotheses.empty())
        throw InputError("no outputs to evaluate");
    if (contexts.size() != hypotheses.size())
        throw InputError("context and hypothesis counts differ");

    EvalReport r;
    r.n_items = hypotheses.size();
    BleuResult b = bleu(hypotheses, references, 4);
    r.b1 = b.scores[0];
    r.b2 = b.scores[1];
    r.b3 = b.scores[2];
    r.bleu4 = b.scores[3];
    r.bleu_zero_matches = b.zero_matches;

    CohResult coh = coh_metric(contexts, hypotheses, emb, vocab, options.workers);
    r.coh = coh.mean;
    r.coh_skipped = coh.skipped;

    std::vector<Tokens> subset;
    std::span<const Tokens> distinct_set = hypotheses;
    if (options.sample > 0 && options.sample < hypotheses.size()) {
        std::vector<std::size_t> idx(hypotheses.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937_64 rng(options.seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(options.sample);
        std::sort(idx.begin(), idx.end());
        for (auto i : idx)
            subset.push_back(hypotheses[i]);
        distinct_set = subset;
    }
    r.distinct_sample = distinct_set.size();
    r.d1 = distinct_n(distinct_set, 1);
    r.d2 = distinct_n(distinct_set, 2);
    r.d_sent = distinct_sent(distinct_set);
    return r;
}

} // namespace cohdial
