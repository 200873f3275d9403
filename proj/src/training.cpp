#include "cohdial/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "cohdial/artifact.hpp"
#include "cohdial/coherence.hpp"
#include "cohdial/errors.hpp"
#include "cohdial/nn/checkpoint.hpp"
#include "cohdial/nn/ops.hpp"

namespace cohdial {

using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void TrainingConfig::validate() const {
    if (lambda_c < 0.0 || lambda_z < 0.0)
        throw ConfigError("loss weights must be >= 0");
    if (batch_size == 0 || epochs < 0 || !(lr > 0.0) || kl_anneal_steps < 0 ||
        max_free_run == 0 || clip_norm < 0.0 || checkpoint_every < 0)
        throw ConfigError("invalid training configuration");
}

nn::ConfigHeader TrainingConfig::to_header() const {
    return {
        {"train.lambda_c", fmt(lambda_c)},
        {"train.lambda_z", fmt(lambda_z)},
        {"train.batch_size", std::to_string(batch_size)},
        {"train.epochs", std::to_string(epochs)},
        {"train.lr", fmt(lr)},
        {"train.kl_anneal_steps", std::to_string(kl_anneal_steps)},
        {"train.seed", std::to_string(seed)},
        {"train.max_free_run", std::to_string(max_free_run)},
        {"train.clip_norm", fmt(clip_norm)},
        {"train.zero_codes", zero_codes ? "1" : "0"},
    };
}

double kl_weight(std::int64_t step, std::int64_t anneal_steps) {
    if (anneal_steps <= 0)
        return 1.0;
    return std::min(1.0, double(std::max<std::int64_t>(step, 0)) / double(anneal_steps));
}

std::vector<TrainingExample> prepare_examples(std::span<const DialoguePair> pairs,
                                              const Vocabulary &vocab) {
    std::vector<TrainingExample> out;
    out.reserve(pairs.size());
    for (const auto &p : pairs) {
        if (!p.coherence)
            throw MissingScore("training pair has no coherence score");
        out.push_back({vocab.encode(p.context()), with_eos(vocab.encode(p.response)),
                       *p.coherence});
    }
    return out;
}

GenerationLoss loss_generation(Tape &tape, const GeneratorModel &model,
                               const TrainingExample &example, nn::Rng &rng, const RunMode &mode,
                               bool zero_codes) {
    const auto &cfg = model.config();
    GenerationLoss out;
    Var z, c;
    if (zero_codes || cfg.variant == Variant::AttentionBaseline) {
        z = tape.constant(Tensor({cfg.latent_dim}));
        c = tape.constant(Tensor::scalar(0.0));
        out.kl = tape.constant(Tensor::scalar(0.0));
    } else {
        std::span<const TokenId> response(example.response);
        if (!response.empty() && response.back() == kEos)
            response = response.first(response.size() - 1);
        GaussianVars q = model.posterior(tape, example.context, response, mode);
        GaussianVars p = model.prior(tape, example.context, mode);
        z = sample_latent(q, rng);
        c = tape.constant(Tensor::scalar(example.coherence));
        out.kl = kl_divergence(q, p);
    }
    auto tf = model.forward_teacher_forced(tape, example.context, example.response, z, c, mode);
    out.reconstruction = nn::neg(tf.log_likelihood);
    out.tokens = example.response.size();
    return out;
}

double sample_coherence_code(nn::Rng &rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    while (true) {
        double c = normal(rng);
        if (c >= -1.0 && c <= 1.0)
            return c;
    }
}

std::optional<Var> soft_coherence_var(Tape &tape, const GeneratorModel &model,
                                      std::span<const TokenId> context,
                                      std::span<const Var> dists) {
    const CoherenceSignal *signal = model.coherence_signal();
    if (!signal || dists.empty())
        return std::nullopt;
    auto ctx = signal->context_embedding(context);
    if (!ctx)
        return std::nullopt;
    std::optional<Var> y;
    for (const Var &d : dists) {
        Var contrib = nn::vecmat(d, signal->glove());
        y = y ? nn::add(*y, contrib) : contrib;
    }
    bool nonzero = false;
    for (double v : y->value().data())
        nonzero = nonzero || v != 0.0;
    if (!nonzero)
        return std::nullopt;
    return nn::cosine(tape.constant(std::move(*ctx)), *y);
}

Var loss_coherence(Tape &tape, const GeneratorModel &model, std::span<const TokenId> context,
                   const SoftRunResult &soft, double c) {
    auto coh = soft_coherence_var(tape, model, context, soft.dists);
    if (!coh)
        return tape.constant(Tensor::scalar(1.0 + c * c));
    return nn::square(nn::add_scalar(nn::neg(*coh), c));
}

Var loss_diversity(Tape &tape, const GeneratorModel &model, std::span<const TokenId> context,
                   const SoftRunResult &soft, Var z, const RunMode &mode) {
    GaussianVars q = model.posterior_soft(tape, context, soft.dists, mode);
    return gaussian_nll(z, q);
}

PriorSample sample_and_free_run(Tape &tape, const GeneratorModel &model,
                                std::span<const TokenId> context, std::size_t max_len,
                                nn::Rng &rng, const RunMode &mode) {
    PriorSample out;
    out.z = sample_latent(model.prior(tape, context, mode), rng);
    out.c = sample_coherence_code(rng);
    Var c = tape.constant(Tensor::scalar(out.c));
    out.soft = model.forward_soft_freerun(tape, context, out.z, c, max_len, mode);
    return out;
}

double LossReport::perplexity() const {
    return tokens ? std::exp(reconstruction_sum / double(tokens)) : 0.0;
}

double LossReport::recomposed() const {
    return reconstruction + kl_weight * kl + lambda_c * coherence + lambda_z * diversity;
}

BatchLoss composite_loss(Tape &tape, const GeneratorModel &model,
                         std::span<const TrainingExample> batch, const TrainingConfig &config,
                         double kl_w, nn::Rng &rng, const RunMode &mode) {
    if (batch.empty())
        throw InputError("empty batch");
    const bool latent = !config.zero_codes && model.config().variant != Variant::AttentionBaseline;
    const bool free_run = latent && (config.lambda_c > 0.0 || config.lambda_z > 0.0);

    BatchLoss out;
    auto &r = out.report;
    r.kl_weight = kl_w;
    r.lambda_c = config.lambda_c;
    r.lambda_z = config.lambda_z;
    r.pairs = batch.size();

    std::vector<Var> terms;
    for (const auto &ex : batch) {
        GenerationLoss g = loss_generation(tape, model, ex, rng, mode, config.zero_codes);
        Var term = nn::add(g.reconstruction, nn::mul_scalar(g.kl, kl_w));
        r.reconstruction_sum += g.reconstruction.item();
        r.kl += g.kl.item();
        r.tokens += g.tokens;
        if (free_run) {
            PriorSample ps = sample_and_free_run(tape, model, ex.context, config.max_free_run,
                                                 rng, mode);
            if (config.lambda_c > 0.0) {
                Var lc = loss_coherence(tape, model, ex.context, ps.soft, ps.c);
                r.coherence += lc.item();
                term = nn::add(term, nn::mul_scalar(lc, config.lambda_c));
            }
            if (config.lambda_z > 0.0) {
                Var lz = loss_diversity(tape, model, ex.context, ps.soft, ps.z, mode);
                r.diversity += lz.item();
                term = nn::add(term, nn::mul_scalar(lz, config.lambda_z));
            }
        }
        terms.push_back(term);
    }
    const double n = double(batch.size());
    out.total = nn::mul_scalar(nn::sum(nn::concat(terms)), 1.0 / n);
    r.reconstruction = r.reconstruction_sum / n;
    r.kl /= n;
    r.coherence /= n;
    r.diversity /= n;
    r.total = out.total.item();
    return out;
}

Trainer::Trainer(GeneratorModel &model, TrainingConfig config, const Vocabulary *vocab)
    : model_(model), config_(std::move(config)), vocab_(vocab), params_(model.params().all()),
      adam_(params_, nn::AdamConfig{config_.lr}), rng_(config_.seed) {
    config_.validate();
}

LossReport Trainer::step(std::span<const TrainingExample> batch) {
    model_.params().zero_grad();
    RunMode mode{true, &rng_};
    double w = kl_weight(step_, config_.kl_anneal_steps);
    LossReport report;
    try {
        Tape tape;
        BatchLoss loss = composite_loss(tape, model_, batch, config_, w, rng_, mode);
        tape.backward(loss.total);
        report = loss.report;
    } catch (const NumericalError &e) {
        throw DivergedTraining(std::string("non-finite value during training: ") + e.what());
    }
    if (!std::isfinite(report.total))
        throw DivergedTraining("training loss became non-finite");
    nn::clip_grad_norm(params_, config_.clip_norm);
    adam_.step(params_);
    report.step = ++step_;
    return report;
}

LossReport Trainer::epoch(std::span<const TrainingExample> examples) {
    if (examples.empty())
        throw InsufficientData("no training examples");
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);

    LossReport agg;
    std::vector<TrainingExample> batch;
    for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
        batch.clear();
        std::size_t end = std::min(order.size(), begin + config_.batch_size);
        for (std::size_t i = begin; i < end; ++i)
            batch.push_back(examples[order[i]]);
        LossReport r = step(batch);
        const double n = double(r.pairs);
        agg.total += r.total * n;
        agg.reconstruction += r.reconstruction * n;
        agg.kl += r.kl * n;
        agg.coherence += r.coherence * n;
        agg.diversity += r.diversity * n;
        agg.reconstruction_sum += r.reconstruction_sum;
        agg.tokens += r.tokens;
        agg.pairs += r.pairs;
        agg.kl_weight = r.kl_weight;
        agg.step = r.step;
    }
    const double n = double(agg.pairs);
    agg.total /= n;
    agg.reconstruction /= n;
    agg.kl /= n;
    agg.coherence /= n;
    agg.diversity /= n;
    agg.lambda_c = config_.lambda_c;
    agg.lambda_z = config_.lambda_z;
    ++epoch_;
    return agg;
}

void Trainer::save_checkpoint(const std::filesystem::path &path) const {
    auto header = model_.header(vocab_);
    for (auto &[k, v] : config_.to_header())
        header[k] = v;
    header["train.step"] = std::to_string(step_);
    header["train.epoch"] = std::to_string(epoch_);
    nn::save_checkpoint(path, header, model_.params());
}

TrainResult train(GeneratorModel &model, std::span<const TrainingExample> examples,
                  const TrainingConfig &config, const Vocabulary *vocab,
                  const std::function<void(const LossReport &)> &on_epoch) {
    Trainer trainer(model, config, vocab);
    const auto &dir = config.checkpoint_dir;
    if (!dir.empty()) {
        std::filesystem::create_directories(dir);
        auto header = model.header(vocab);
        for (auto &[k, v] : config.to_header())
            header[k] = v;
        write_file_atomic(dir / "config", nn::format_header(header));
        if (vocab)
            vocab->save(dir / "vocab");
    }
    TrainResult result;
    for (int e = 1; e <= config.epochs; ++e) {
        result.epochs.push_back(trainer.epoch(examples));
        if (on_epoch)
            on_epoch(result.epochs.back());
        if (!dir.empty() && config.checkpoint_every > 0 && e % config.checkpoint_every == 0)
            trainer.save_checkpoint(dir / ("ckpt-" + std::to_string(e) + ".bin"));
    }
    return result;
}

GeneratorConfig micro_config(Variant variant) {
    GeneratorConfig cfg;
    cfg.vocab_size = 20;
    cfg.hidden = 8;
    cfg.layers = 2;
    cfg.latent_dim = 4;
    cfg.latent_hidden = 4;
    cfg.latent_layers = 2;
    cfg.dropout = 0.0;
    cfg.variant = variant;
    return cfg;
}

nn::GradCheckReport composite_grad_check(const GradCheckSetup &setup) {
    GeneratorConfig cfg = micro_config(setup.variant);
    nn::Rng rng(setup.seed);

    Vocabulary vocab;
    while (vocab.size() < cfg.vocab_size)
        vocab.add("w" + std::to_string(vocab.size()), 1, false);
    EmbeddingMatrix emb(vocab.size(), 6);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (std::size_t r = kNumSpecials; r < emb.rows(); ++r)
        for (double &v : emb.row(r))
            v = unit(rng);
    CoherenceSignal signal(emb, vocab);

    GeneratorModel model(cfg, setup.seed);
    model.set_coherence_signal(&signal);

    std::uniform_int_distribution<TokenId> word(kNumSpecials, TokenId(cfg.vocab_size) - 1);
    std::vector<TrainingExample> batch;
    for (std::size_t i = 0; i < setup.examples; ++i) {
        TrainingExample ex;
        for (int k = 0; k < 5; ++k)
            ex.context.push_back(word(rng));
        for (int k = 0; k < 3; ++k)
            ex.response.push_back(word(rng));
        ex.coherence = coherence(ex.context, ex.response, emb, vocab);
        ex.response.push_back(kEos);
        batch.push_back(std::move(ex));
    }

    TrainingConfig tc;
    tc.lambda_c = setup.lambda_c;
    tc.lambda_z = setup.lambda_z;
    tc.max_free_run = setup.max_free_run;
    const std::uint64_t loss_seed = setup.seed + 1;
    nn::LossClosure closure = [&](Tape &tape) {
        nn::Rng r(loss_seed);
        return composite_loss(tape, model, batch, tc, 1.0, r, RunMode{false, &r}).total;
    };
    auto params = model.params().all();
    return nn::grad_check(closure, params, setup.tolerance);
}

} // namespace cohdial
