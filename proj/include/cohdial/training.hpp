#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "cohdial/corpus.hpp"
#include "cohdial/model.hpp"
#include "cohdial/nn/adam.hpp"
#include "cohdial/nn/grad_check.hpp"

namespace cohdial {

struct TrainingConfig {
    double lambda_c = 0.1;
    double lambda_z = 0.1;
    std::size_t batch_size = 32;
    int epochs = 10;
    double lr = 1e-3;
    // Linear KL weight ramp 0 -> 1 over this many updates; 0 disables it.
    std::int64_t kl_anneal_steps = 5000;
    std::uint64_t seed = 1;
    std::size_t max_free_run = kMaxResponseTokens;
    double clip_norm = 5.0;
    // Ablation: z = 0 and c = 0, no posterior/prior and no KL.
    bool zero_codes = false;
    // ckpt-<epoch>.bin, config and vocab are written here when set.
    std::filesystem::path checkpoint_dir;
    int checkpoint_every = 1;

    void validate() const;
    nn::ConfigHeader to_header() const;
};

double kl_weight(std::int64_t step, std::int64_t anneal_steps);

// Token ids ready for the model; the response ends with EOS.
struct TrainingExample {
    TokenIds context;
    TokenIds response;
    double coherence = 0.0;
};

// Throws MissingScore for unscored pairs.
std::vector<TrainingExample> prepare_examples(std::span<const DialoguePair> pairs,
                                              const Vocabulary &vocab);

struct GenerationLoss {
    nn::Var reconstruction;  // -log p(y | x, z, c)
    nn::Var kl;              // KL(q(z|x,y) || p(z|x))
    std::size_t tokens = 0;
};

// Single-sample estimate with z ~ q(z | x, y) and c = C(x, y).
GenerationLoss loss_generation(nn::Tape &tape, const GeneratorModel &model,
                               const TrainingExample &example, nn::Rng &rng,
                               const RunMode &mode, bool zero_codes = false);

// c ~ N(0, 1) restricted to [-1, 1] by rejection.
double sample_coherence_code(nn::Rng &rng);

// Soft embedding of y^s against the coherence signal's word vectors and its
// cosine with the context; nullopt when undefined.
std::optional<nn::Var> soft_coherence_var(nn::Tape &tape, const GeneratorModel &model,
                                          std::span<const TokenId> context,
                                          std::span<const nn::Var> dists);

// (c - C(x, y^s))^2, or 1 + c^2 when the soft coherence is undefined.
nn::Var loss_coherence(nn::Tape &tape, const GeneratorModel &model,
                       std::span<const TokenId> context, const SoftRunResult &soft, double c);

// -log q(z | x, y^s) with y^s fed to the posterior network as soft input.
nn::Var loss_diversity(nn::Tape &tape, const GeneratorModel &model,
                       std::span<const TokenId> context, const SoftRunResult &soft, nn::Var z,
                       const RunMode &mode = {});

struct PriorSample {
    nn::Var z;
    double c = 0.0;
    SoftRunResult soft;
};

// z ~ p(z | x) (reparameterized), c ~ p(c), then the soft free run.
PriorSample sample_and_free_run(nn::Tape &tape, const GeneratorModel &model,
                                std::span<const TokenId> context, std::size_t max_len,
                                nn::Rng &rng, const RunMode &mode);

struct LossReport {
    std::int64_t step = 0;
    double total = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
    double kl_weight = 0.0;
    double coherence = 0.0;  // L_c
    double diversity = 0.0;  // L_z
    double lambda_c = 0.0;
    double lambda_z = 0.0;
    std::size_t pairs = 0;
    std::size_t tokens = 0;
    double reconstruction_sum = 0.0;

    // exp(reconstruction per token).
    double perplexity() const;
    // reconstruction + kl_weight * kl + lambda_c * L_c + lambda_z * L_z.
    double recomposed() const;
};

// Full composite loss over a batch (mean over pairs), on one tape.
struct BatchLoss {
    nn::Var total;
    LossReport report;
};
BatchLoss composite_loss(nn::Tape &tape, const GeneratorModel &model,
                         std::span<const TrainingExample> batch, const TrainingConfig &config,
                         double kl_w, nn::Rng &rng, const RunMode &mode);

class Trainer {
  public:
    Trainer(GeneratorModel &model, TrainingConfig config, const Vocabulary *vocab = nullptr);

    // One Adam update on a batch.
    LossReport step(std::span<const TrainingExample> batch);
    // Shuffled mini-batch pass; returns the epoch aggregate.
    LossReport epoch(std::span<const TrainingExample> examples);

    std::int64_t steps() const { return step_; }
    int epochs_done() const { return epoch_; }
    nn::Rng &rng() { return rng_; }

    void save_checkpoint(const std::filesystem::path &path) const;

  private:
    GeneratorModel &model_;
    TrainingConfig config_;
    const Vocabulary *vocab_;
    std::vector<nn::Parameter *> params_;
    nn::AdamState adam_;
    nn::Rng rng_;
    std::int64_t step_ = 0;
    int epoch_ = 0;
};

struct TrainResult {
    std::vector<LossReport> epochs;
};

// Runs config.epochs epochs; `on_epoch` (optional) sees every epoch report.
TrainResult train(GeneratorModel &model, std::span<const TrainingExample> examples,
                  const TrainingConfig &config, const Vocabulary *vocab = nullptr,
                  const std::function<void(const LossReport &)> &on_epoch = {});

// Smallest configuration exercising every part of the model: vocabulary
// 20, hidden 8, latent 4, latent hidden 4, dropout off.
GeneratorConfig micro_config(Variant variant = Variant::CvaeXGate);

struct GradCheckSetup {
    Variant variant = Variant::CvaeXGate;
    std::uint64_t seed = 1;
    double tolerance = 1e-3;
    double lambda_c = 1.0;
    double lambda_z = 1.0;
    std::size_t examples = 2;
    std::size_t max_free_run = 6;
};

// Finite-difference check of the full composite loss on random micro data
// with random word vectors.
nn::GradCheckReport composite_grad_check(const GradCheckSetup &setup);

} // namespace cohdial
