#include "cohdial/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "cohdial/artifact.hpp"
#include "cohdial/coherence.hpp"
#include "cohdial/errors.hpp"
#include "cohdial/nn/ops.hpp"
#include "cohdial/parallel.hpp"

namespace cohdial {

using nn::Tape;
using nn::Tensor;
using nn::Var;

DecodeSpec parse_decode(const std::string &text) {
    if (text == "greedy")
        return {};
    if (text.rfind("beam:", 0) == 0) {
        std::size_t width = 0;
        const char *b = text.data() + 5, *e = text.data() + text.size();
        auto res = std::from_chars(b, e, width);
        if (res.ec == std::errc() && res.ptr == e && width >= 1)
            return {DecodeMode::Beam, width};
    }
    throw ConfigError("decode must be 'greedy' or 'beam:<width>', got '" + text + "'");
}

std::string to_string(const DecodeSpec &spec) {
    return spec.mode == DecodeMode::Greedy ? "greedy" : "beam:" + std::to_string(spec.width);
}

void GenerationRequest::validate() const {
    if (context.empty())
        throw EmptySequence("empty generation context");
    if (c_mode == CoherenceMode::Preset && !(c >= -1.0 && c <= 1.0))
        throw InputError("preset c must lie in [-1, 1]");
    if (c_mode == CoherenceMode::Oracle && gold.empty())
        throw InputError("oracle mode needs a gold response");
    if (decode.width < 1)
        throw InputError("beam width must be >= 1");
    if (max_len < 1)
        throw InputError("max_len must be >= 1");
}

std::span<const TokenId> GenerationResult::response() const {
    std::span<const TokenId> r(tokens);
    if (!r.empty() && r.back() == kEos)
        r = r.first(r.size() - 1);
    return r;
}

double GenerationResult::normalized_score() const {
    return tokens.empty() ? 0.0 : log_prob / double(tokens.size());
}

double oracle_c(std::span<const TokenId> context, std::span<const TokenId> gold,
                const EmbeddingMatrix &emb, const Vocabulary &vocab) {
    return coherence(context, gold, emb, vocab);
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Hypothesis {
    TokenIds tokens;
    DecoderState state;
    double log_prob = 0.0;
    std::vector<double> gates;
    bool done = false;

    double score() const { return tokens.empty() ? 0.0 : log_prob / double(tokens.size()); }
};

class Decoder {
  public:
    Decoder(const GeneratorModel &model, const GenerationRequest &req, double c)
        : model_(model), req_(req), tape_(false) {
        const auto &cfg = model.config();
        enc_ = model.encode_context(tape_, req.context);
        std::vector<double> z(cfg.latent_dim, 0.0);
        if (cfg.variant != Variant::AttentionBaseline) {
            GaussianParams p = model.prior(tape_, req.context).values();
            nn::Rng rng(req.seed);
            std::normal_distribution<double> normal(0.0, 1.0);
            for (std::size_t d = 0; d < z.size(); ++d) {
                z[d] = p.mean[d];
                if (!req.mean_z)
                    z[d] += std::exp(0.5 * p.log_var[d]) * normal(rng);
            }
        }
        z_ = tape_.constant(Tensor::vector(std::move(z)));
        c_ = tape_.constant(Tensor::scalar(c));
        init_ = model.init_decoder_state(tape_, enc_.summary, z_, c_);
    }

    Hypothesis start() const { return {{}, init_, 0.0, {}, false}; }

    // Log-probabilities of the next token, the state after it and the gate.
    struct Expansion {
        std::vector<double> log_probs;
        DecoderState state;
        double gate;
    };

    Expansion expand(const Hypothesis &h) {
        const CoherenceSignal *signal = model_.coherence_signal();
        double prefix = signal ? signal->prefix_coherence(req_.context, h.tokens) : 0.0;
        TokenId prev = h.tokens.empty() ? kBos : h.tokens.back();
        AttentionResult att = model_.attention(h.state.lstm.h.back(), enc_.memory);
        Var gate = model_.gate_for(tape_, c_, tape_.constant(Tensor::scalar(prefix)));
        StepOutput step = model_.decoder_step(tape_, model_.decoder_input(tape_, prev), h.state,
                                              att.context, gate);
        auto lp = step.log_probs.value().data();
        Expansion out{{lp.begin(), lp.end()}, std::move(step.state), step.gate};
        for (TokenId banned : {kPad, kUnk, kBos})
            if (std::size_t(banned) < out.log_probs.size())
                out.log_probs[std::size_t(banned)] = kNegInf;
        return out;
    }

    Hypothesis extend(const Hypothesis &h, const Expansion &e, TokenId token) const {
        Hypothesis n{h.tokens, e.state, h.log_prob + e.log_probs[std::size_t(token)], h.gates,
                     false};
        n.tokens.push_back(token);
        n.gates.push_back(e.gate);
        n.done = token == kEos || n.tokens.size() >= req_.max_len;
        return n;
    }

    Hypothesis greedy() {
        Hypothesis h = start();
        while (!h.done) {
            Expansion e = expand(h);
            auto best = std::max_element(e.log_probs.begin(), e.log_probs.end());
            h = extend(h, e, TokenId(best - e.log_probs.begin()));
        }
        return h;
    }

    Hypothesis beam(std::size_t width) {
        std::vector<Hypothesis> beam{start()};
        while (std::any_of(beam.begin(), beam.end(), [](const auto &h) { return !h.done; })) {
            std::vector<Hypothesis> next;
            for (const auto &h : beam) {
                if (h.done) {
                    next.push_back(h);
                    continue;
                }
                Expansion e = expand(h);
                std::vector<TokenId> order(e.log_probs.size());
                for (std::size_t t = 0; t < order.size(); ++t)
                    order[t] = TokenId(t);
                std::size_t k = std::min(width, order.size());
                std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(k), order.end(),
                                  [&](TokenId a, TokenId b) {
                                      double la = e.log_probs[std::size_t(a)];
                                      double lb = e.log_probs[std::size_t(b)];
                                      return la != lb ? la > lb : a < b;
                                  });
                for (std::size_t j = 0; j < k; ++j)
                    if (e.log_probs[std::size_t(order[j])] != kNegInf)
                        next.push_back(extend(h, e, order[j]));
            }
            std::stable_sort(next.begin(), next.end(), [](const auto &a, const auto &b) {
                return a.score() > b.score();
            });
            if (next.size() > width)
                next.resize(width);
            beam = std::move(next);
        }
        return beam.front();
    }

  private:
    const GeneratorModel &model_;
    const GenerationRequest &req_;
    Tape tape_;
    Encoding enc_;
    Var z_, c_;
    DecoderState init_;
};

} // namespace

GenerationResult generate(const GeneratorModel &model, const GenerationRequest &request) {
    request.validate();
    const CoherenceSignal *signal = model.coherence_signal();
    double c = request.c;
    if (request.c_mode == CoherenceMode::Oracle) {
        if (!signal)
            throw ConfigError("oracle mode needs word embeddings");
        c = oracle_c(request.context, request.gold, signal->embeddings(), signal->vocab());
    }

    Decoder decoder(model, request, c);
    Hypothesis best = decoder.greedy();
    if (request.decode.mode == DecodeMode::Beam && request.decode.width > 1) {
        // The beam can lose the greedy path to pruning; keep whichever scores higher.
        Hypothesis b = decoder.beam(request.decode.width);
        if (b.score() > best.score())
            best = std::move(b);
    }

    GenerationResult result;
    result.tokens = std::move(best.tokens);
    result.log_prob = best.log_prob;
    result.c = c;
    result.gates = std::move(best.gates);
    if (signal) {
        try {
            result.realized_coherence =
                coherence(request.context, result.response(), signal->embeddings(),
                          signal->vocab());
        } catch (const Error &) {
        }
    }
    return result;
}

std::uint64_t derive_seed(std::uint64_t base, std::size_t index) {
    // splitmix64 finalizer over base and index.
    std::uint64_t x = base + 0x9e3779b97f4a7c15ULL * (std::uint64_t(index) + 1);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<BatchItem> generate_batch(const GeneratorModel &model,
                                      std::vector<GenerationRequest> requests,
                                      std::uint64_t base_seed, unsigned workers) {
    std::vector<BatchItem> out(requests.size());
    parallel_for(requests.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            requests[i].seed = derive_seed(base_seed, i);
            try {
                out[i].result = generate(model, requests[i]);
            } catch (const Error &e) {
                out[i].error_kind = e.kind();
                out[i].error = e.what();
            } catch (const std::exception &e) {
                out[i].error_kind = "Error";
                out[i].error = e.what();
            }
        }
    });
    return out;
}

std::string format_generated(const GeneratedItem &item) {
    std::string line = item.context;
    line += '\t';
    line += join(item.response);
    line += '\t';
    if (item.realized_coherence) {
        char buf[32];
        auto res = std::to_chars(buf, buf + sizeof buf, *item.realized_coherence);
        line.append(buf, res.ptr);
    } else {
        line += "undefined";
    }
    return line;
}

std::vector<GeneratedItem> load_generated(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::vector<GeneratedItem> items;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty() || line.rfind(kHeaderPrefix, 0) == 0)
            continue;
        auto cols = split(line, "\t");
        if (cols.size() != 3)
            throw ParseError(lineno, "expected 3 tab-separated columns");
        GeneratedItem item{cols[0], {}, std::nullopt};
        for (auto &tok : split(cols[1], " "))
            if (!tok.empty())
                item.response.push_back(std::move(tok));
        if (cols[2] != "undefined") {
            double v = 0.0;
            auto res = std::from_chars(cols[2].data(), cols[2].data() + cols[2].size(), v);
            if (res.ec != std::errc() || res.ptr != cols[2].data() + cols[2].size())
                throw ParseError(lineno, "bad coherence value '" + cols[2] + "'");
            item.realized_coherence = v;
        }
        items.push_back(std::move(item));
    }
    return items;
}

void save_generated(const std::filesystem::path &path, std::span<const GeneratedItem> items,
                    const std::vector<std::string> &header) {
    AtomicFile file(path);
    for (const auto &h : header)
        file.stream() << kHeaderPrefix << h << '\n';
    for (const auto &item : items)
        file.stream() << format_generated(item) << '\n';
    file.commit();
}

} // namespace cohdial
