#include "cohdial/model.hpp"

#include <cmath>
#include <numbers>

#include "cohdial/coherence.hpp"
#include "cohdial/errors.hpp"
#include "cohdial/nn/ops.hpp"

namespace cohdial {

using nn::Tape;
using nn::Tensor;
using nn::Var;

std::string to_string(Variant v) {
    switch (v) {
    case Variant::CvaeXGate:
        return "xgate";
    case Variant::CvaeCGate:
        return "cgate";
    case Variant::AttentionBaseline:
        return "attention";
    }
    return "?";
}

Variant parse_variant(const std::string &name) {
    auto n = to_lower(name);
    if (n == "xgate" || n == "cvae-xgate")
        return Variant::CvaeXGate;
    if (n == "cgate" || n == "cvae-cgate")
        return Variant::CvaeCGate;
    if (n == "attention" || n == "baseline")
        return Variant::AttentionBaseline;
    throw ConfigError("unknown variant '" + name + "' (xgate, cgate, attention)");
}

void GeneratorConfig::validate() const {
    if (vocab_size <= std::size_t(kNumSpecials) || hidden == 0 || layers == 0 ||
        latent_dim == 0 || latent_hidden == 0 || latent_layers == 0)
        throw ConfigError("generator dimensions must be >= 1 (vocabulary beyond the specials)");
    if (gate_bias < 0.0)
        throw ConfigError("gate bias lambda must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0)
        throw ConfigError("dropout must lie in [0, 1)");
}

nn::ConfigHeader GeneratorConfig::to_header() const {
    char lambda[64];
    std::snprintf(lambda, sizeof lambda, "%.17g", gate_bias);
    char drop[64];
    std::snprintf(drop, sizeof drop, "%.17g", dropout);
    char init[64];
    std::snprintf(init, sizeof init, "%.17g", init_scale);
    return {
        {"variant", to_string(variant)},
        {"vocab_size", std::to_string(vocab_size)},
        {"hidden", std::to_string(hidden)},
        {"layers", std::to_string(layers)},
        {"latent_dim", std::to_string(latent_dim)},
        {"latent_hidden", std::to_string(latent_hidden)},
        {"latent_layers", std::to_string(latent_layers)},
        {"dropout", drop},
        {"gate_bias", lambda},
        {"init_scale", init},
    };
}

GeneratorConfig GeneratorConfig::from_header(const nn::ConfigHeader &h) {
    auto get = [&](const char *key) -> const std::string & {
        auto it = h.find(key);
        if (it == h.end())
            throw ConfigError(std::string("checkpoint header lacks '") + key + "'");
        return it->second;
    };
    GeneratorConfig c;
    try {
        c.variant = parse_variant(get("variant"));
        c.vocab_size = std::stoul(get("vocab_size"));
        c.hidden = std::stoul(get("hidden"));
        c.layers = std::stoul(get("layers"));
        c.latent_dim = std::stoul(get("latent_dim"));
        c.latent_hidden = std::stoul(get("latent_hidden"));
        c.latent_layers = std::stoul(get("latent_layers"));
        c.dropout = std::stod(get("dropout"));
        c.gate_bias = std::stod(get("gate_bias"));
        c.init_scale = std::stod(get("init_scale"));
    } catch (const std::logic_error &e) {
        throw ConfigError(std::string("bad checkpoint header value: ") + e.what());
    }
    c.validate();
    return c;
}

double kl_divergence(const GaussianParams &q, const GaussianParams &p) {
    if (q.mean.size() != p.mean.size() || q.log_var.size() != p.log_var.size() ||
        q.mean.size() != q.log_var.size())
        throw ShapeError("KL between Gaussians of different dimension");
    double kl = 0.0;
    for (std::size_t d = 0; d < q.mean.size(); ++d) {
        double diff = q.mean[d] - p.mean[d];
        kl += p.log_var[d] - q.log_var[d] +
              (std::exp(q.log_var[d]) + diff * diff) / std::exp(p.log_var[d]) - 1.0;
    }
    return 0.5 * kl;
}

GaussianParams GaussianVars::values() const {
    auto m = mean.value().data();
    auto v = log_var.value().data();
    return {{m.begin(), m.end()}, {v.begin(), v.end()}};
}

Var kl_divergence(const GaussianVars &q, const GaussianVars &p) {
    if (q.mean.shape() != p.mean.shape())
        throw ShapeError("KL between Gaussians of different dimension");
    Var diff = nn::sub(q.mean, p.mean);
    Var ratio = nn::mul(nn::add(nn::exp(q.log_var), nn::square(diff)),
                        nn::exp(nn::neg(p.log_var)));
    Var terms = nn::add_scalar(nn::add(nn::sub(p.log_var, q.log_var), ratio), -1.0);
    return nn::mul_scalar(nn::sum(terms), 0.5);
}

Var gaussian_nll(Var z, const GaussianVars &g) {
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    Var quad = nn::mul(nn::square(nn::sub(z, g.mean)), nn::exp(nn::neg(g.log_var)));
    Var terms = nn::add_scalar(nn::add(g.log_var, quad), log_2pi);
    return nn::mul_scalar(nn::sum(terms), 0.5);
}

Var sample_latent(const GaussianVars &g, std::span<const double> eps) {
    if (eps.size() != g.mean.size())
        throw ShapeError("noise vector does not match latent dimension");
    Tape &tape = *g.mean.tape();
    Var noise = tape.constant(Tensor::vector({eps.begin(), eps.end()}));
    return nn::add(g.mean, nn::mul(nn::exp(nn::mul_scalar(g.log_var, 0.5)), noise));
}

Var sample_latent(const GaussianVars &g, nn::Rng &rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> eps(g.mean.size());
    for (auto &e : eps)
        e = normal(rng);
    return sample_latent(g, eps);
}

double context_gate(double c, double c_prefix, double lambda) {
    double x = c - c_prefix;
    double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return lambda * s;
}

Var context_gate(Var c, Var c_prefix, double lambda) {
    return nn::mul_scalar(nn::sigmoid(nn::sub(c, c_prefix)), lambda);
}

CoherenceSignal::CoherenceSignal(const EmbeddingMatrix &emb, const Vocabulary &vocab)
    : emb_(&emb), vocab_(&vocab) {
    if (emb.rows() != vocab.size())
        throw ShapeError("embedding rows do not match vocabulary size");
    glove_ = Tensor({emb.rows(), emb.dim()}, {emb.data().begin(), emb.data().end()});
}

double CoherenceSignal::prefix_coherence(std::span<const TokenId> context,
                                         std::span<const TokenId> prefix) const {
    if (prefix.empty() || context.empty())
        return 0.0;
    try {
        return coherence(context, prefix, *emb_, *vocab_);
    } catch (const UndefinedCoherence &) {
        return 0.0;
    }
}

std::optional<Tensor> CoherenceSignal::context_embedding(std::span<const TokenId> context) const {
    auto e = sentence_embedding(context, *emb_, *vocab_);
    if (e.weight_mass == 0.0)
        return std::nullopt;
    bool nonzero = false;
    for (double v : e.vector)
        nonzero = nonzero || v != 0.0;
    if (!nonzero)
        return std::nullopt;
    return Tensor::vector(std::move(e.vector));
}

TokenIds with_eos(std::span<const TokenId> tokens) {
    TokenIds out(tokens.begin(), tokens.end());
    out.push_back(kEos);
    return out;
}

GeneratorModel::GeneratorModel(GeneratorConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
    config_.validate();
    const auto V = config_.vocab_size, H = config_.hidden, Z = config_.latent_dim,
               L = config_.latent_hidden;

    params_.create("enc.embed", {V, H});
    encoder_ = nn::LSTMStack(params_, "enc.lstm", H, H, config_.layers);

    for (const char *net : {"post", "prior"}) {
        std::string p = net;
        params_.create(p + ".embed", {V, L});
        auto rnn = nn::LSTMStack(params_, p + ".lstm", L, L, config_.latent_layers);
        (p == "post" ? posterior_rnn_ : prior_rnn_) = rnn;
        params_.create(p + ".mu.weight", {Z, L});
        params_.create(p + ".mu.bias", {Z});
        params_.create(p + ".logvar.weight", {Z, L});
        params_.create(p + ".logvar.bias", {Z});
    }

    params_.create("dec.embed", {V, H});
    // Input: [y_prev embedding; gated attention vector].
    decoder_ = nn::LSTMStack(params_, "dec.lstm", 2 * H, H, config_.layers);
    for (std::size_t l = 0; l < config_.layers; ++l) {
        params_.create("dec.init.l" + std::to_string(l) + ".weight", {H, H + Z + 1});
        params_.create("dec.init.l" + std::to_string(l) + ".bias", {H});
    }
    if (config_.variant == Variant::CvaeCGate) {
        params_.create("cgate.weight", {H, 3 * H});
        params_.create("cgate.bias", {H});
    }
    params_.create("out.weight", {V, 2 * H});
    params_.create("out.bias", {V});

    nn::Rng rng(seed);
    params_.init_uniform(rng, config_.init_scale);
}

nn::ConfigHeader GeneratorModel::header(const Vocabulary *vocab) const {
    auto h = config_.to_header();
    if (vocab)
        h["vocab_hash"] = std::to_string(vocab->hash());
    return h;
}

Var GeneratorModel::zeros(Tape &tape, std::size_t n) const { return tape.constant(Tensor({n})); }

Var GeneratorModel::param(Tape &tape, const std::string &name) const {
    // Gradients land in Parameter::grad only through a tape with gradients
    // enabled, which callers own alongside the model.
    return tape.param(const_cast<nn::Parameter &>(*params_.find(name)));
}

Encoding GeneratorModel::encode_context(Tape &tape, std::span<const TokenId> context,
                                        const RunMode &mode) const {
    if (context.empty())
        throw EmptySequence("empty dialogue context");
    Var embed = param(tape, "enc.embed");
    std::vector<Var> inputs;
    inputs.reserve(context.size());
    for (auto t : context)
        inputs.push_back(nn::row(embed, std::size_t(t)));
    auto out = encoder_.forward(tape, inputs, encoder_.zero_state(tape), config_.dropout,
                                mode.training, mode.rng);
    Encoding enc;
    enc.states = std::move(out.top);
    enc.memory = nn::stack(enc.states);
    enc.summary = out.final.h.back();
    return enc;
}

GaussianVars GeneratorModel::latent_head(Tape &tape, const std::string &prefix,
                                         std::span<const Var> inputs, const RunMode &mode) const {
    const auto &rnn = prefix == "post" ? posterior_rnn_ : prior_rnn_;
    auto out = rnn.forward(tape, inputs, rnn.zero_state(tape), config_.dropout, mode.training,
                           mode.rng);
    Var h = out.final.h.back();
    auto p = [&](const std::string &name) {
        return param(tape, prefix + name);
    };
    GaussianVars g;
    g.mean = nn::add(nn::matmul(p(".mu.weight"), h), p(".mu.bias"));
    g.log_var = nn::add(nn::matmul(p(".logvar.weight"), h), p(".logvar.bias"));
    return g;
}

GaussianVars GeneratorModel::posterior(Tape &tape, std::span<const TokenId> context,
                                       std::span<const TokenId> response,
                                       const RunMode &mode) const {
    if (context.empty() || response.empty())
        throw EmptySequence("posterior needs a non-empty context and response");
    Var embed = param(tape, "post.embed");
    std::vector<Var> inputs;
    for (auto t : context)
        inputs.push_back(nn::row(embed, std::size_t(t)));
    inputs.push_back(nn::row(embed, std::size_t(kBos)));
    for (auto t : response)
        inputs.push_back(nn::row(embed, std::size_t(t)));
    return latent_head(tape, "post", inputs, mode);
}

GaussianVars GeneratorModel::posterior_soft(Tape &tape, std::span<const TokenId> context,
                                            std::span<const Var> dists,
                                            const RunMode &mode) const {
    if (context.empty() || dists.empty())
        throw EmptySequence("posterior needs a non-empty context and response");
    Var embed = param(tape, "post.embed");
    std::vector<Var> inputs;
    for (auto t : context)
        inputs.push_back(nn::row(embed, std::size_t(t)));
    inputs.push_back(nn::row(embed, std::size_t(kBos)));
    for (const Var &d : dists)
        inputs.push_back(nn::vecmat(d, embed));
    return latent_head(tape, "post", inputs, mode);
}

GaussianVars GeneratorModel::prior(Tape &tape, std::span<const TokenId> context,
                                   const RunMode &mode) const {
    if (context.empty())
        throw EmptySequence("prior needs a non-empty context");
    Var embed = param(tape, "prior.embed");
    std::vector<Var> inputs;
    for (auto t : context)
        inputs.push_back(nn::row(embed, std::size_t(t)));
    return latent_head(tape, "prior", inputs, mode);
}

DecoderState GeneratorModel::init_decoder_state(Tape &tape, Var summary, Var z, Var c) const {
    const auto H = config_.hidden, Z = config_.latent_dim;
    if (summary.size() != H)
        throw ShapeError("encoder summary has " + std::to_string(summary.size()) +
                         " elements, expected " + std::to_string(H));
    if (config_.variant == Variant::AttentionBaseline) {
        z = zeros(tape, Z);
        c = zeros(tape, 1);
    }
    if (z.size() != Z || c.size() != 1)
        throw ShapeError("latent z or code c has the wrong size");
    Var parts[] = {summary, z, c};
    Var s = nn::concat(parts);
    DecoderState state;
    for (std::size_t l = 0; l < config_.layers; ++l) {
        auto tag = "dec.init.l" + std::to_string(l);
        Var w = param(tape, tag + ".weight");
        Var b = param(tape, tag + ".bias");
        state.lstm.h.push_back(nn::add(nn::matmul(w, s), b));
        state.lstm.c.push_back(zeros(tape, H));
    }
    return state;
}

AttentionResult GeneratorModel::attention(Var query, Var memory) const {
    Var scores = nn::matmul(memory, query);
    Var weights = nn::softmax(scores);
    return {nn::vecmat(weights, memory), weights};
}

Var GeneratorModel::decoder_input(Tape &tape, TokenId token) const {
    Var embed = param(tape, "dec.embed");
    return nn::row(embed, std::size_t(token));
}

Var GeneratorModel::decoder_input(Tape &tape, Var dist) const {
    Var embed = param(tape, "dec.embed");
    return nn::vecmat(dist, embed);
}

Var GeneratorModel::gate_for(Tape &tape, Var c, Var c_prefix) const {
    if (config_.variant != Variant::CvaeXGate)
        return zeros(tape, 1);
    return context_gate(c, c_prefix, config_.gate_bias);
}

StepOutput GeneratorModel::decoder_step(Tape &tape, Var prev_embedding, const DecoderState &state,
                                        Var attention, Var gate, const RunMode &mode) const {
    const auto H = config_.hidden;
    if (prev_embedding.size() != H || attention.size() != H)
        throw ShapeError("decoder step inputs must have the hidden size");
    StepOutput out;
    nn::LSTMState carried = state.lstm;
    Var fed;
    switch (config_.variant) {
    case Variant::CvaeXGate: {
        if (gate.size() != 1)
            throw ShapeError("scalar gate expected");
        Var keep = nn::add_scalar(nn::neg(gate), 1.0);
        fed = nn::scale(attention, gate);
        for (auto &h : carried.h)
            h = nn::scale(h, keep);
        out.gate = gate.item();
        break;
    }
    case Variant::CvaeCGate: {
        Var w = param(tape, "cgate.weight");
        Var b = param(tape, "cgate.bias");
        Var gin[] = {prev_embedding, state.lstm.h.back(), attention};
        Var g = nn::sigmoid(nn::add(nn::matmul(w, nn::concat(gin)), b));
        Var keep = nn::add_scalar(nn::neg(g), 1.0);
        fed = nn::mul(g, attention);
        for (auto &h : carried.h)
            h = nn::mul(h, keep);
        double mean = 0.0;
        for (double v : g.value().data())
            mean += v;
        out.gate = mean / double(H);
        break;
    }
    case Variant::AttentionBaseline:
        fed = zeros(tape, H);
        break;
    }
    Var input_parts[] = {prev_embedding, fed};
    out.state.lstm = decoder_.step(tape, nn::concat(input_parts), carried, config_.dropout,
                                   mode.training, mode.rng);
    Var feat_parts[] = {out.state.lstm.h.back(), attention};
    Var features = nn::concat(feat_parts);
    if (mode.training && config_.dropout > 0.0) {
        if (!mode.rng)
            throw InputError("training mode needs a random generator");
        features = nn::dropout(features, config_.dropout, true, *mode.rng);
    }
    Var w = param(tape, "out.weight");
    Var b = param(tape, "out.bias");
    out.log_probs = nn::log_softmax(nn::add(nn::matmul(w, features), b));
    out.attention = attention;
    return out;
}

TeacherForcedResult GeneratorModel::forward_teacher_forced(Tape &tape,
                                                           std::span<const TokenId> context,
                                                           std::span<const TokenId> response,
                                                           Var z, Var c,
                                                           const RunMode &mode) const {
    if (response.empty())
        throw EmptySequence("empty response");
    if (response.back() != kEos)
        throw InputError("teacher-forced response must end with EOS");
    Encoding enc = encode_context(tape, context, mode);
    DecoderState state = init_decoder_state(tape, enc.summary, z, c);

    TeacherForcedResult result;
    std::vector<Var> terms;
    TokenId prev = kBos;
    for (std::size_t i = 0; i < response.size(); ++i) {
        AttentionResult att = attention(state.lstm.h.back(), enc.memory);
        double prefix = signal_ ? signal_->prefix_coherence(context, response.first(i)) : 0.0;
        Var gate = gate_for(tape, c, tape.constant(Tensor::scalar(prefix)));
        StepOutput step =
            decoder_step(tape, decoder_input(tape, prev), state, att.context, gate, mode);
        terms.push_back(nn::pick(step.log_probs, std::size_t(response[i])));
        result.log_probs.push_back(step.log_probs);
        result.gates.push_back(step.gate);
        state = std::move(step.state);
        prev = response[i];
    }
    result.log_likelihood = nn::sum(nn::concat(terms));
    return result;
}

SoftRunResult GeneratorModel::forward_soft_freerun(Tape &tape, std::span<const TokenId> context,
                                                   Var z, Var c, std::size_t max_len,
                                                   const RunMode &mode) const {
    if (max_len == 0)
        throw InputError("max_len must be >= 1");
    Encoding enc = encode_context(tape, context, mode);
    DecoderState state = init_decoder_state(tape, enc.summary, z, c);

    std::optional<Var> context_vec;
    if (signal_) {
        if (auto e = signal_->context_embedding(context))
            context_vec = tape.constant(std::move(*e));
    }

    SoftRunResult result;
    Var input = decoder_input(tape, kBos);
    std::optional<Var> prefix_sum;
    for (std::size_t i = 0; i < max_len; ++i) {
        AttentionResult att = attention(state.lstm.h.back(), enc.memory);
        Var prefix_coh = tape.constant(Tensor::scalar(0.0));
        if (context_vec && prefix_sum) {
            bool nonzero = false;
            for (double v : prefix_sum->value().data())
                nonzero = nonzero || v != 0.0;
            if (nonzero)
                prefix_coh = nn::cosine(*context_vec, *prefix_sum);
        }
        Var gate = gate_for(tape, c, prefix_coh);
        StepOutput step = decoder_step(tape, input, state, att.context, gate, mode);
        Var dist = nn::exp(step.log_probs);
        result.dists.push_back(dist);
        result.gates.push_back(step.gate);
        if (signal_) {
            Var contrib = nn::vecmat(dist, signal_->glove());
            prefix_sum = prefix_sum ? nn::add(*prefix_sum, contrib) : contrib;
        }
        state = std::move(step.state);
        if (dist.value()[std::size_t(kEos)] > 0.5)
            break;
        input = decoder_input(tape, dist);
    }
    return result;
}

} // namespace cohdial
