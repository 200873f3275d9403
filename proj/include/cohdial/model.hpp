#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cohdial/embedding.hpp"
#include "cohdial/nn/checkpoint.hpp"
#include "cohdial/nn/lstm.hpp"
#include "cohdial/vocabulary.hpp"

namespace cohdial {

enum class Variant {
    // Scalar coherence gate k = lambda * sigmoid(c - c'), cVAE latents.
    CvaeXGate,
    // Elementwise gate from (y_prev, s_prev, a), cVAE latents.
    CvaeCGate,
    // Plain attention decoder: no latents, no gate.
    AttentionBaseline,
};

std::string to_string(Variant v);
Variant parse_variant(const std::string &name);

struct GeneratorConfig {
    std::size_t vocab_size = 25000;
    // Embedding and hidden size of context encoder and decoder.
    std::size_t hidden = 128;
    std::size_t layers = 2;
    std::size_t latent_dim = 20;
    // Embedding and hidden size of the posterior and prior networks.
    std::size_t latent_hidden = 64;
    std::size_t latent_layers = 2;
    double dropout = 0.2;
    double gate_bias = 1.0;
    double init_scale = 0.08;
    Variant variant = Variant::CvaeXGate;

    void validate() const;
    nn::ConfigHeader to_header() const;
    static GeneratorConfig from_header(const nn::ConfigHeader &header);
};

// Value-level diagonal Gaussian.
struct GaussianParams {
    std::vector<double> mean;
    std::vector<double> log_var;
};

// Closed-form KL(q || p) between diagonal Gaussians, summed over dimensions.
double kl_divergence(const GaussianParams &q, const GaussianParams &p);

// Same quantity on the tape.
struct GaussianVars {
    nn::Var mean;
    nn::Var log_var;

    GaussianParams values() const;
};
nn::Var kl_divergence(const GaussianVars &q, const GaussianVars &p);

// -log N(z; mean, diag(exp(log_var))).
nn::Var gaussian_nll(nn::Var z, const GaussianVars &g);

// z = mean + exp(log_var / 2) * eps.
nn::Var sample_latent(const GaussianVars &g, std::span<const double> eps);
nn::Var sample_latent(const GaussianVars &g, nn::Rng &rng);

// lambda * sigmoid(c - c_prefix).
double context_gate(double c, double c_prefix, double lambda);
nn::Var context_gate(nn::Var c, nn::Var c_prefix, double lambda);

// Word vectors used to measure the coherence of decoded prefixes while
// decoding. Ids must coincide with the model vocabulary.
class CoherenceSignal {
  public:
    CoherenceSignal(const EmbeddingMatrix &emb, const Vocabulary &vocab);

    const nn::Tensor &glove() const { return glove_; }
    const EmbeddingMatrix &embeddings() const { return *emb_; }
    const Vocabulary &vocab() const { return *vocab_; }

    // C(context, prefix); 0 for an empty prefix or undefined coherence.
    double prefix_coherence(std::span<const TokenId> context,
                            std::span<const TokenId> prefix) const;
    // Weighted context embedding, nullopt when it has no content words.
    std::optional<nn::Tensor> context_embedding(std::span<const TokenId> context) const;

  private:
    const EmbeddingMatrix *emb_;
    const Vocabulary *vocab_;
    nn::Tensor glove_;
};

struct RunMode {
    bool training = false;
    nn::Rng *rng = nullptr;
};

struct Encoding {
    std::vector<nn::Var> states;  // top layer, one per context token
    nn::Var memory;               // states stacked, (J x hidden)
    nn::Var summary;              // final top-layer hidden state
};

struct DecoderState {
    nn::LSTMState lstm;
};

struct AttentionResult {
    nn::Var context;  // a_i
    nn::Var weights;  // w_ij over encoder states
};

struct StepOutput {
    DecoderState state;
    nn::Var log_probs;   // over the vocabulary
    nn::Var attention;   // a_i used at this step
    double gate = 0.0;   // k_i (mean gate value for the elementwise gate)
};

struct TeacherForcedResult {
    std::vector<nn::Var> log_probs;  // per step
    nn::Var log_likelihood;          // sum of gold-token log-probs
    std::vector<double> gates;
};

struct SoftRunResult {
    std::vector<nn::Var> dists;  // y^s, one probability vector per step
    std::vector<double> gates;
};

class GeneratorModel {
  public:
    GeneratorModel(GeneratorConfig config, std::uint64_t seed);

    const GeneratorConfig &config() const { return config_; }
    nn::ParameterStore &params() { return params_; }
    const nn::ParameterStore &params() const { return params_; }

    // Optional; without it every prefix coherence c'_i is 0.
    void set_coherence_signal(const CoherenceSignal *signal) { signal_ = signal; }
    const CoherenceSignal *coherence_signal() const { return signal_; }

    Encoding encode_context(nn::Tape &tape, std::span<const TokenId> context,
                            const RunMode &mode = {}) const;

    // q(z | x, y): x, a separator and y through the posterior network.
    GaussianVars posterior(nn::Tape &tape, std::span<const TokenId> context,
                           std::span<const TokenId> response, const RunMode &mode = {}) const;
    // Same network fed the soft response y^s (expected embeddings).
    GaussianVars posterior_soft(nn::Tape &tape, std::span<const TokenId> context,
                                std::span<const nn::Var> dists, const RunMode &mode = {}) const;
    // p(z | x).
    GaussianVars prior(nn::Tape &tape, std::span<const TokenId> context,
                       const RunMode &mode = {}) const;

    // Projects [h; z; c] to every decoder layer's initial hidden state; cells
    // start at zero. The baseline substitutes zeros for z and c.
    DecoderState init_decoder_state(nn::Tape &tape, nn::Var summary, nn::Var z, nn::Var c) const;

    // Dot-product attention of `query` over the encoder memory.
    AttentionResult attention(nn::Var query, nn::Var memory) const;

    // One decoder step. `gate` is k_i for the scalar gate (ignored by the
    // other variants).
    StepOutput decoder_step(nn::Tape &tape, nn::Var prev_embedding, const DecoderState &state,
                            nn::Var attention, nn::Var gate, const RunMode &mode = {}) const;

    // Embedding of a hard token / expected embedding of a distribution.
    nn::Var decoder_input(nn::Tape &tape, TokenId token) const;
    nn::Var decoder_input(nn::Tape &tape, nn::Var dist) const;

    // log p(y | x, z, c) with teacher forcing. `response` must end with EOS.
    // c'_i is measured on the gold prefix.
    TeacherForcedResult forward_teacher_forced(nn::Tape &tape, std::span<const TokenId> context,
                                               std::span<const TokenId> response, nn::Var z,
                                               nn::Var c, const RunMode &mode = {}) const;

    // Soft free-running decode: feeds back expected embeddings and stops at
    // max_len or once EOS holds more than half the mass.
    SoftRunResult forward_soft_freerun(nn::Tape &tape, std::span<const TokenId> context,
                                       nn::Var z, nn::Var c, std::size_t max_len,
                                       const RunMode &mode = {}) const;

    // Scalar gate input for step i given the coherence of the prefix.
    nn::Var gate_for(nn::Tape &tape, nn::Var c, nn::Var c_prefix) const;

    nn::ConfigHeader header(const Vocabulary *vocab = nullptr) const;

  private:
    GaussianVars latent_head(nn::Tape &tape, const std::string &prefix,
                             std::span<const nn::Var> inputs, const RunMode &mode) const;
    nn::Var zeros(nn::Tape &tape, std::size_t n) const;
    nn::Var param(nn::Tape &tape, const std::string &name) const;

    GeneratorConfig config_;
    nn::ParameterStore params_;
    nn::LSTMStack encoder_;
    nn::LSTMStack posterior_rnn_;
    nn::LSTMStack prior_rnn_;
    nn::LSTMStack decoder_;
    const CoherenceSignal *signal_ = nullptr;
};

// Appends EOS.
TokenIds with_eos(std::span<const TokenId> tokens);

} // namespace cohdial
