#include "cohdial/embedding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "cohdial/artifact.hpp"
#include "cohdial/errors.hpp"

namespace cohdial {

void CooccurrenceTable::add(TokenId center, TokenId context, double weight) {
    counts_[key(center, context)] += weight;
}

double CooccurrenceTable::get(TokenId center, TokenId context) const {
    auto it = counts_.find(key(center, context));
    return it == counts_.end() ? 0.0 : it->second;
}

void CooccurrenceTable::merge(const CooccurrenceTable &other) {
    vocab_size_ = std::max(vocab_size_, other.vocab_size_);
    for (const auto &[k, v] : other.counts_)
        counts_[k] += v;
}

std::vector<CooccurrenceTable::Entry> CooccurrenceTable::entries() const {
    std::vector<Entry> out;
    out.reserve(counts_.size());
    for (const auto &[k, v] : counts_)
        out.push_back({TokenId(std::uint32_t(k >> 32)), TokenId(std::uint32_t(k)), v});
    std::sort(out.begin(), out.end(), [](const Entry &a, const Entry &b) {
        return a.center != b.center ? a.center < b.center : a.context < b.context;
    });
    return out;
}

CooccurrenceTable count_cooccurrences(std::span<const Tokens> sentences, const Vocabulary &vocab,
                                      int window) {
    if (window < 1)
        throw InputError("window must be >= 1");
    // Weights 1/d are accumulated as integer multiples of 1/L with
    // L = lcm(1..window), so the table does not depend on sentence order.
    // Past a window of 22 L outgrows 32 bits and plain doubles are summed.
    std::uint64_t L = 1;
    for (std::uint64_t d = 2; d <= std::uint64_t(window) && L != 0; ++d) {
        L = L / std::gcd(L, d) * d;
        if (L > (std::uint64_t(1) << 32))
            L = 0;
    }
    CooccurrenceTable table(vocab.size());
    std::unordered_map<std::uint64_t, std::uint64_t> exact;
    auto pair_key = [](TokenId a, TokenId b) {
        return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b);
    };
    TokenIds ids;
    for (const auto &sentence : sentences) {
        ids.clear();
        for (const auto &tok : sentence) {
            auto id = vocab.id(tok);
            if (id != kPad && id != kBos && id != kEos)
                ids.push_back(id);
        }
        for (std::size_t i = 0; i < ids.size(); ++i) {
            std::size_t stop = std::min(ids.size(), i + static_cast<std::size_t>(window) + 1);
            for (std::size_t j = i + 1; j < stop; ++j) {
                if (L) {
                    std::uint64_t w = L / (j - i);
                    exact[pair_key(ids[i], ids[j])] += w;
                    exact[pair_key(ids[j], ids[i])] += w;
                } else {
                    double w = 1.0 / static_cast<double>(j - i);
                    table.add(ids[i], ids[j], w);
                    table.add(ids[j], ids[i], w);
                }
            }
        }
    }
    for (const auto &[k, n] : exact)
        table.add(TokenId(k >> 32), TokenId(k & 0xffffffffu), double(n) / double(L));
    return table;
}

void EmbeddingMatrix::scale(double factor) {
    for (auto &v : data_)
        v *= factor;
}

double glove_weight(double x, double x_max, double alpha) {
    if (x <= 0.0)
        return 0.0;
    if (x >= x_max)
        return 1.0;
    return std::pow(x / x_max, alpha);
}

GloveResult train_glove(const CooccurrenceTable &table, const GloveConfig &config) {
    if (table.empty())
        throw EmptyCorpus("co-occurrence table is empty");
    if (config.dim < 1)
        throw InputError("embedding dim must be >= 1");

    const std::size_t n = table.vocab_size();
    const std::size_t dim = config.dim;
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> init(-0.5, 0.5);

    // Rows: [0, n) center vectors, [n, 2n) context vectors.
    std::vector<double> vec(2 * n * dim);
    for (auto &v : vec)
        v = init(rng) / static_cast<double>(dim);
    std::vector<double> bias(2 * n, 0.0);
    std::vector<double> vec_gsq(vec.size(), 1.0);
    std::vector<double> bias_gsq(bias.size(), 1.0);

    auto entries = table.entries();
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), 0);

    GloveResult result;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss = 0.0;
        for (auto idx : order) {
            const auto &e = entries[idx];
            const std::size_t a = static_cast<std::size_t>(e.center);
            const std::size_t b = n + static_cast<std::size_t>(e.context);
            double *wa = &vec[a * dim];
            double *wb = &vec[b * dim];
            double diff = bias[a] + bias[b] - std::log(e.count);
            for (std::size_t d = 0; d < dim; ++d)
                diff += wa[d] * wb[d];
            double fdiff = glove_weight(e.count, config.x_max, config.alpha) * diff;
            loss += 0.5 * fdiff * diff;

            double *ga = &vec_gsq[a * dim];
            double *gb = &vec_gsq[b * dim];
            for (std::size_t d = 0; d < dim; ++d) {
                double grad_a = fdiff * wb[d];
                double grad_b = fdiff * wa[d];
                wa[d] -= config.lr * grad_a / std::sqrt(ga[d]);
                wb[d] -= config.lr * grad_b / std::sqrt(gb[d]);
                ga[d] += grad_a * grad_a;
                gb[d] += grad_b * grad_b;
            }
            bias[a] -= config.lr * fdiff / std::sqrt(bias_gsq[a]);
            bias[b] -= config.lr * fdiff / std::sqrt(bias_gsq[b]);
            bias_gsq[a] += fdiff * fdiff;
            bias_gsq[b] += fdiff * fdiff;
        }
        loss /= static_cast<double>(entries.size());
        if (!std::isfinite(loss))
            throw DivergedTraining("GloVe loss became non-finite at epoch " +
                                   std::to_string(epoch + 1));
        result.epoch_loss.push_back(loss);
    }

    result.embeddings = EmbeddingMatrix(n, dim);
    for (std::size_t r = 0; r < n; ++r) {
        if (r == std::size_t(kPad) || r == std::size_t(kBos) || r == std::size_t(kEos))
            continue;
        auto row = result.embeddings.row(r);
        for (std::size_t d = 0; d < dim; ++d)
            row[d] = vec[r * dim + d] + vec[(n + r) * dim + d];
    }
    return result;
}

void save_embeddings(const EmbeddingMatrix &m, const Vocabulary &vocab,
                     const std::filesystem::path &path, const std::vector<std::string> &header) {
    if (m.rows() != vocab.size())
        throw ShapeError("embedding rows do not match vocabulary size");
    AtomicFile file(path);
    auto &out = file.stream();
    for (const auto &h : header)
        out << kHeaderPrefix << h << '\n';
    char buf[64];
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out << vocab.token(static_cast<TokenId>(r));
        for (double v : m.row(r)) {
            auto res = std::to_chars(buf, buf + sizeof buf, v);
            out << ' ' << std::string_view(buf, std::size_t(res.ptr - buf));
        }
        out << '\n';
    }
    file.commit();
}

LoadedEmbeddings load_embeddings(const std::filesystem::path &path, const StopWords &stopwords) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open embeddings " + path.string());

    std::vector<std::string> tokens;
    std::vector<std::size_t> token_line;
    std::vector<double> values;
    std::size_t dim = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty() || line.rfind(kHeaderPrefix, 0) == 0)
            continue;
        auto fields = split(trim(line), " ");
        if (fields.size() < 2)
            throw ParseError(lineno, "expected token followed by vector components");
        if (dim == 0)
            dim = fields.size() - 1;
        else if (fields.size() - 1 != dim)
            throw ParseError(lineno, "expected " + std::to_string(dim) + " components, found " +
                                         std::to_string(fields.size() - 1));
        tokens.push_back(fields[0]);
        token_line.push_back(lineno);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            double v = 0.0;
            const auto &f = fields[i];
            auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(v))
                throw ParseError(lineno, "bad number '" + f + "'");
            values.push_back(v);
        }
    }
    if (tokens.empty())
        throw EmptyCorpus("embedding file " + path.string() + " is empty");

    LoadedEmbeddings out;
    std::vector<std::size_t> source_row;
    // Specials keep ids 0-3 whether or not the file lists them.
    std::vector<std::ptrdiff_t> special_row(kNumSpecials, -1);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (out.vocab.contains(tokens[i])) {
            auto id = out.vocab.id(tokens[i]);
            if (Vocabulary::is_special(id) && special_row[std::size_t(id)] < 0) {
                special_row[std::size_t(id)] = std::ptrdiff_t(i);
                continue;
            }
            throw ParseError(token_line[i], "duplicate token '" + tokens[i] + "'");
        }
        out.vocab.add(tokens[i], 1, stopwords.contains(tokens[i]));
        source_row.push_back(i);
    }
    out.matrix = EmbeddingMatrix(out.vocab.size(), dim);
    for (TokenId s = 0; s < kNumSpecials; ++s) {
        if (special_row[std::size_t(s)] < 0)
            continue;
        auto src = std::size_t(special_row[std::size_t(s)]);
        std::copy_n(values.begin() + std::ptrdiff_t(src * dim), dim,
                    out.matrix.row(std::size_t(s)).begin());
    }
    for (std::size_t k = 0; k < source_row.size(); ++k)
        std::copy_n(values.begin() + std::ptrdiff_t(source_row[k] * dim), dim,
                    out.matrix.row(std::size_t(kNumSpecials) + k).begin());
    return out;
}

EmbeddingMatrix align_embeddings(const EmbeddingMatrix &emb, const Vocabulary &from,
                                 const Vocabulary &to) {
    if (emb.rows() != from.size())
        throw ShapeError("embedding rows do not match vocabulary size");
    EmbeddingMatrix out(to.size(), emb.dim());
    for (std::size_t r = 0; r < to.size(); ++r) {
        const auto &tok = to.token(TokenId(r));
        if (Vocabulary::is_special(TokenId(r)) || !from.contains(tok))
            continue;
        auto src = emb.row(std::size_t(from.id(tok)));
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

} // namespace cohdial
