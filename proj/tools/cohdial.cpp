// Command-line entry point: one subcommand per pipeline stage.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "cohdial/artifact.hpp"
#include "cohdial/coherence.hpp"
#include "cohdial/corpus.hpp"
#include "cohdial/embedding.hpp"
#include "cohdial/errors.hpp"
#include "cohdial/evaluation.hpp"
#include "cohdial/inference.hpp"
#include "cohdial/model.hpp"
#include "cohdial/nn/checkpoint.hpp"
#include "cohdial/parallel.hpp"
#include "cohdial/training.hpp"

namespace fs = std::filesystem;
using namespace cohdial;

namespace {

struct Globals {
    std::uint64_t seed = 1;
    unsigned workers = 0;
    fs::path stopwords;
};

fs::path data_dir() {
    if (const char *env = std::getenv("COHDIAL_DATA_DIR"); env && *env)
        return env;
    return COHDIAL_DATA_DIR;
}

StopWords load_stopwords(const Globals &g) {
    return g.stopwords.empty() ? StopWords::load(data_dir() / "stopwords.txt")
                               : StopWords::load(g.stopwords);
}

unsigned workers_or(const Globals &g, unsigned fallback) {
    return g.workers ? g.workers : fallback;
}

void progress(const std::string &stage, const std::string &fields) {
    std::cerr << "progress: stage=" << stage << ' ' << fields << std::endl;
}

std::string num(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

// Effective options of the running subcommand, one `key=value` per entry.
std::vector<std::string> echo_config(const CLI::App &app, const Globals &g) {
    std::vector<std::string> lines{"command=" + app.get_name(), "seed=" + std::to_string(g.seed)};
    std::istringstream in(app.config_to_str(true, false));
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (!t.empty() && t[0] != '[' && t[0] != '#')
            lines.emplace_back(t);
    }
    return lines;
}

void require_file(const fs::path &p, const char *what) {
    if (!fs::is_regular_file(p))
        throw IoError(std::string(what) + " not found: " + p.string());
}

void require_parent(const fs::path &p) {
    auto parent = p.parent_path();
    if (!parent.empty() && !fs::is_directory(parent))
        throw IoError("output directory does not exist: " + parent.string());
}

std::vector<Tokens> sentences_of(std::span<const DialoguePair> pairs) {
    std::vector<Tokens> out;
    out.reserve(pairs.size() * (kContextTurns + 1));
    for (const auto &p : pairs) {
        for (const auto &t : p.context_turns)
            out.push_back(t);
        out.push_back(p.response);
    }
    return out;
}

// ---- train-embeddings -------------------------------------------------------

struct EmbedOpts {
    fs::path corpus, out;
    GloveConfig glove;
    int window = 10;
    std::int64_t min_count = 1;
    std::size_t max_vocab = 25000;
};

void run_train_embeddings(const CLI::App &app, const EmbedOpts &o, const Globals &g) {
    require_file(o.corpus, "corpus");
    require_parent(o.out);
    auto stop = load_stopwords(g);
    LoadStats stats;
    auto pairs = load_pairs(o.corpus, false, &stats);
    progress("train-embeddings", "pairs=" + std::to_string(pairs.size()) +
                                     " dropped=" + std::to_string(stats.dropped()));
    auto sentences = sentences_of(pairs);
    auto vocab = Vocabulary::build(sentences, o.min_count, o.max_vocab, stop);
    auto table = count_cooccurrences(sentences, vocab, o.window);
    progress("train-embeddings", "vocab=" + std::to_string(vocab.size()) +
                                     " nonzeros=" + std::to_string(table.nonzeros()));
    GloveConfig cfg = o.glove;
    cfg.seed = g.seed;
    auto result = train_glove(table, cfg);
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
        progress("train-embeddings",
                 "epoch=" + std::to_string(e + 1) + " loss=" + num(result.epoch_loss[e]));
    save_embeddings(result.embeddings, vocab, o.out, echo_config(app, g));
}

// ---- score / filter ---------------------------------------------------------

struct ScoreOpts {
    fs::path corpus, embeddings, out;
    std::size_t buffer = 4096;
    bool strict = false;
};

void run_score(const CLI::App &app, const ScoreOpts &o, const Globals &g) {
    require_file(o.corpus, "corpus");
    require_file(o.embeddings, "embeddings");
    require_parent(o.out);
    auto emb = load_embeddings(o.embeddings, load_stopwords(g));
    std::ifstream in(o.corpus);
    AtomicFile out(o.out);
    for (const auto &h : echo_config(app, g))
        out.stream() << kHeaderPrefix << h << '\n';
    MomentAccumulator moments;
    StreamConfig sc;
    sc.buffer = o.buffer;
    sc.workers = workers_or(g, default_workers());
    sc.strict = o.strict;
    auto stats = score_stream(in, emb.matrix, emb.vocab, sc, [&](const DialoguePair &p) {
        moments.add(*p.coherence);
        out.stream() << format_pair(p) << '\n';
    });
    out.commit();
    std::string fields = "kept=" + std::to_string(stats.emitted) +
                         " undefined=" + std::to_string(stats.undefined) +
                         " malformed=" + std::to_string(stats.load.malformed) +
                         " too_long=" + std::to_string(stats.load.too_long);
    if (moments.count() >= 2 && moments.population_variance() > 0.0) {
        auto dist = fit_coherence_distribution(moments);
        fields += " mu=" + num(dist.mu) + " sigma=" + num(dist.sigma) +
                  " cutoff=" + num(dist.cutoff);
    }
    progress("score", fields);
}

struct FilterOpts {
    fs::path corpus, out;
    std::optional<double> threshold;
};

void run_filter(const CLI::App &app, const FilterOpts &o, const Globals &g) {
    require_file(o.corpus, "corpus");
    require_parent(o.out);
    double threshold = 0.0;
    std::vector<std::string> header = echo_config(app, g);
    if (o.threshold) {
        threshold = *o.threshold;
    } else {
        std::ifstream in(o.corpus);
        PairReader reader(in);
        MomentAccumulator moments;
        while (auto p = reader.next()) {
            if (!p->coherence)
                throw MissingScore("pair without a coherence score; run `score` first");
            moments.add(*p->coherence);
        }
        auto dist = fit_coherence_distribution(moments);
        threshold = dist.cutoff;
        header.push_back("fitted_mu=" + num(dist.mu));
        header.push_back("fitted_sigma=" + num(dist.sigma));
        progress("filter", "mu=" + num(dist.mu) + " sigma=" + num(dist.sigma));
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", threshold);
    header.push_back(std::string("applied_threshold=") + buf);

    std::ifstream in(o.corpus);
    PairReader reader(in);
    AtomicFile out(o.out);
    for (const auto &h : header)
        out.stream() << kHeaderPrefix << h << '\n';
    std::size_t kept = 0, total = 0;
    while (auto p = reader.next()) {
        ++total;
        if (passes_filter(*p, threshold)) {
            out.stream() << format_pair(*p) << '\n';
            ++kept;
        }
    }
    out.commit();
    progress("filter", "threshold=" + num(threshold) + " kept=" + std::to_string(kept) +
                           " total=" + std::to_string(total));
}

// ---- split / synth ----------------------------------------------------------

struct SplitOpts {
    fs::path corpus, out_dir;
    SplitSizes sizes;
};

void run_split(const CLI::App &app, const SplitOpts &o, const Globals &g) {
    require_file(o.corpus, "corpus");
    auto pairs = load_pairs(o.corpus);
    auto split = split_corpus(pairs, o.sizes, g.seed);
    fs::create_directories(o.out_dir);
    auto header = echo_config(app, g);
    save_pairs(o.out_dir / "train.tsv", split.train, header);
    save_pairs(o.out_dir / "dev.tsv", split.dev, header);
    save_pairs(o.out_dir / "test.tsv", split.test, header);
    progress("split", "train=" + std::to_string(split.train.size()) +
                          " dev=" + std::to_string(split.dev.size()) +
                          " test=" + std::to_string(split.test.size()));
}

struct SynthOpts {
    fs::path out;
    SynthConfig synth;
};

void run_synth(const CLI::App &app, const SynthOpts &o, const Globals &g) {
    require_parent(o.out);
    SynthConfig cfg = o.synth;
    cfg.seed = g.seed;
    auto corpus = synth_corpus(cfg);
    save_pairs(o.out, corpus.pairs, echo_config(app, g));
    progress("synth", "pairs=" + std::to_string(corpus.pairs.size()));
}

// ---- train ------------------------------------------------------------------

struct TrainOpts {
    fs::path corpus, embeddings, out_dir;
    std::string variant = "xgate";
    GeneratorConfig model;
    TrainingConfig train;
    std::int64_t min_count = 1;
    std::size_t max_vocab = 25000;
};

void run_train(const CLI::App &app, TrainOpts o, const Globals &g) {
    require_file(o.corpus, "training corpus");
    require_file(o.embeddings, "embeddings");
    auto stop = load_stopwords(g);
    auto pairs = load_pairs(o.corpus);
    auto vocab = Vocabulary::build(sentences_of(pairs), o.min_count, o.max_vocab, stop);
    auto loaded = load_embeddings(o.embeddings, stop);
    auto emb = align_embeddings(loaded.matrix, loaded.vocab, vocab);
    CoherenceSignal signal(emb, vocab);

    o.model.variant = parse_variant(o.variant);
    o.model.vocab_size = vocab.size();
    o.model.validate();
    o.train.seed = g.seed;
    o.train.checkpoint_dir = o.out_dir;
    o.train.validate();
    auto examples = prepare_examples(pairs, vocab);

    GeneratorModel model(o.model, g.seed);
    model.set_coherence_signal(&signal);
    progress("train", "pairs=" + std::to_string(examples.size()) + " vocab=" +
                          std::to_string(vocab.size()) + " params=" +
                          std::to_string(model.params().element_count()));
    fs::create_directories(o.out_dir);
    auto header = echo_config(app, g);
    std::string echoed;
    for (const auto &h : header)
        echoed += std::string(kHeaderPrefix) + h + '\n';
    write_file_atomic(o.out_dir / "cli.cfg", echoed);
    int epoch = 0;
    train(model, examples, o.train, &vocab, [&](const LossReport &r) {
        progress("train", "epoch=" + std::to_string(++epoch) + " step=" +
                              std::to_string(r.step) + " loss=" + num(r.total) +
                              " rec=" + num(r.reconstruction) + " kl=" + num(r.kl) +
                              " lc=" + num(r.coherence) + " lz=" + num(r.diversity) +
                              " ppl=" + num(r.perplexity()));
    });
}

// ---- generate ---------------------------------------------------------------

struct GenerateOpts {
    fs::path checkpoint, vocab, embeddings, input, out;
    std::optional<double> c;
    bool oracle = false;
    std::string decode = "greedy";
    std::size_t max_len = kMaxResponseTokens;
    bool mean_z = false;
};

void run_generate(const CLI::App &app, const GenerateOpts &o, const Globals &g) {
    require_file(o.checkpoint, "checkpoint");
    fs::path vocab_path = o.vocab.empty() ? o.checkpoint.parent_path() / "vocab" : o.vocab;
    require_file(vocab_path, "vocabulary");
    require_file(o.embeddings, "embeddings");
    require_file(o.input, "input corpus");
    require_parent(o.out);
    if (o.oracle == o.c.has_value())
        throw ConfigError("give exactly one of --c and --oracle");
    DecodeSpec decode = parse_decode(o.decode);

    auto ckpt = nn::load_checkpoint(o.checkpoint);
    auto cfg = GeneratorConfig::from_header(ckpt.header);
    auto vocab = Vocabulary::load(vocab_path);
    if (auto it = ckpt.header.find("vocab_hash");
        it != ckpt.header.end() && it->second != std::to_string(vocab.hash()))
        throw ConfigError("vocabulary does not match the checkpoint");
    GeneratorModel model(cfg, 0);
    nn::restore_parameters(ckpt, model.params());
    auto stop = load_stopwords(g);
    vocab.set_stopwords(stop);
    auto loaded = load_embeddings(o.embeddings, stop);
    auto emb = align_embeddings(loaded.matrix, loaded.vocab, vocab);
    CoherenceSignal signal(emb, vocab);
    model.set_coherence_signal(&signal);

    auto pairs = load_pairs(o.input, false, nullptr, true);
    std::vector<GenerationRequest> requests;
    for (const auto &p : pairs) {
        GenerationRequest r;
        r.context = vocab.encode(p.context());
        r.c_mode = o.oracle ? CoherenceMode::Oracle : CoherenceMode::Preset;
        r.c = o.c.value_or(0.0);
        r.gold = vocab.encode(p.response);
        r.decode = decode;
        r.max_len = o.max_len;
        r.mean_z = o.mean_z;
        requests.push_back(std::move(r));
    }
    auto t0 = std::chrono::steady_clock::now();
    auto results = generate_batch(model, std::move(requests), g.seed,
                                  workers_or(g, default_workers()));
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<GeneratedItem> items;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        GeneratedItem item{format_context(pairs[i]), {}, std::nullopt};
        if (results[i].ok()) {
            item.response = vocab.decode(results[i].result->response());
            item.realized_coherence = results[i].result->realized_coherence;
        } else {
            ++failed;
            std::cerr << "warning: item " << i + 1 << ": " << results[i].error_kind << ": "
                      << results[i].error << '\n';
        }
        items.push_back(std::move(item));
    }
    auto header = echo_config(app, g);
    header.push_back("decode=" + to_string(decode));
    header.push_back("variant=" + to_string(cfg.variant));
    save_generated(o.out, items, header);
    progress("generate", "items=" + std::to_string(items.size()) + " failed=" +
                             std::to_string(failed) + " seconds=" + num(secs));
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateOpts {
    fs::path outputs, test, embeddings, out;
    std::size_t sample = 0;
};

void run_evaluate(const CLI::App &app, const EvaluateOpts &o, const Globals &g) {
    require_file(o.outputs, "generated outputs");
    require_file(o.test, "test corpus");
    require_file(o.embeddings, "embeddings");
    if (!o.out.empty())
        require_parent(o.out);
    auto generated = load_generated(o.outputs);
    if (generated.empty())
        throw InputError("output file " + o.outputs.string() + " holds no responses");
    auto test = load_pairs(o.test);
    if (test.size() != generated.size())
        throw InputError("outputs have " + std::to_string(generated.size()) +
                         " lines but the test corpus has " + std::to_string(test.size()));
    auto emb = load_embeddings(o.embeddings, load_stopwords(g));
    std::vector<Tokens> contexts, hyps, refs;
    for (std::size_t i = 0; i < test.size(); ++i) {
        contexts.push_back(test[i].context());
        refs.push_back(test[i].response);
        hyps.push_back(generated[i].response);
    }
    EvalOptions opts{o.sample, g.seed, workers_or(g, default_workers())};
    auto report = evaluate(contexts, hyps, refs, emb.matrix, emb.vocab, opts);
    if (report.bleu_zero_matches)
        std::cerr << "warning: some n-gram order has no matches; BLEU at that order is 0\n";
    if (!o.out.empty()) {
        std::string text;
        for (const auto &h : echo_config(app, g))
            text += std::string(kHeaderPrefix) + h + '\n';
        text += report.to_key_value();
        write_file_atomic(o.out, text);
    }
    std::cout << report.to_table();
}

// ---- grad-check -------------------------------------------------------------

struct GradCheckOpts {
    std::string variant = "xgate";
    double tolerance = 1e-3;
};

int run_grad_check(const GradCheckOpts &o, const Globals &g) {
    GradCheckSetup setup;
    setup.variant = parse_variant(o.variant);
    setup.seed = g.seed;
    setup.tolerance = o.tolerance;
    auto report = composite_grad_check(setup);
    for (const auto &p : report.params)
        std::cout << p.name << " checked=" << p.checked << " max_rel_error=" << p.max_rel_error
                  << '\n';
    std::cout << "max_rel_error=" << report.max_rel_error
              << " deterministic=" << report.deterministic
              << " result=" << (report.passed() ? "pass" : "fail") << '\n';
    return report.passed() ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Coherence-controlled dialogue generation pipeline"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value file; command-line flags take precedence");
    Globals g;
    app.add_option("--seed", g.seed, "Global random seed");
    app.add_option("--workers", g.workers,
                   "Worker threads (default: all cores; training always uses one)");
    app.add_option("--stopwords", g.stopwords,
                   "Stop-word list (default: $COHDIAL_DATA_DIR/stopwords.txt)");

    EmbedOpts emb;
    auto *c_emb = app.add_subcommand("train-embeddings", "Train GloVe vectors on a corpus");
    c_emb->add_option("--corpus", emb.corpus)->required();
    c_emb->add_option("--out", emb.out)->required();
    c_emb->add_option("--dim", emb.glove.dim);
    c_emb->add_option("--epochs", emb.glove.epochs);
    c_emb->add_option("--x-max", emb.glove.x_max);
    c_emb->add_option("--alpha", emb.glove.alpha);
    c_emb->add_option("--lr", emb.glove.lr);
    c_emb->add_option("--window", emb.window);
    c_emb->add_option("--min-count", emb.min_count);
    c_emb->add_option("--max-vocab", emb.max_vocab);

    ScoreOpts score;
    auto *c_score = app.add_subcommand("score", "Attach coherence scores to dialogue pairs");
    c_score->add_option("--corpus", score.corpus)->required();
    c_score->add_option("--embeddings", score.embeddings)->required();
    c_score->add_option("--out", score.out)->required();
    c_score->add_option("--buffer", score.buffer, "Pairs held in memory at once");
    c_score->add_flag("--strict", score.strict, "Fail on malformed lines");

    FilterOpts filter;
    auto *c_filter = app.add_subcommand("filter", "Keep pairs at or above a coherence cutoff");
    c_filter->add_option("--corpus", filter.corpus)->required();
    c_filter->add_option("--out", filter.out)->required();
    c_filter->add_option("--threshold", filter.threshold,
                         "Fixed cutoff (default: fitted mean + 2 standard deviations)");

    SplitOpts split;
    auto *c_split = app.add_subcommand("split", "Sample train/dev/test subsets");
    c_split->add_option("--corpus", split.corpus)->required();
    c_split->add_option("--out-dir", split.out_dir)->required();
    c_split->add_option("--train", split.sizes.train)->required();
    c_split->add_option("--dev", split.sizes.dev)->required();
    c_split->add_option("--test", split.sizes.test)->required();

    SynthOpts synth;
    auto *c_synth = app.add_subcommand("synth", "Write a topic-clustered toy corpus");
    c_synth->add_option("--out", synth.out)->required();
    c_synth->add_option("--topics", synth.synth.topics);
    c_synth->add_option("--pairs-per-topic", synth.synth.pairs_per_topic);
    c_synth->add_option("--words-per-topic", synth.synth.words_per_topic);
    c_synth->add_option("--noise", synth.synth.noise, "Probability of an off-topic response");

    TrainOpts tr;
    auto *c_train = app.add_subcommand("train", "Train a response generator");
    c_train->add_option("--corpus", tr.corpus, "Scored training pairs")->required();
    c_train->add_option("--embeddings", tr.embeddings)->required();
    c_train->add_option("--out-dir", tr.out_dir)->required();
    c_train->add_option("--variant", tr.variant)
        ->check(CLI::IsMember({"xgate", "cgate", "attention"}));
    c_train->add_option("--epochs", tr.train.epochs);
    c_train->add_option("--batch-size", tr.train.batch_size);
    c_train->add_option("--lr", tr.train.lr);
    c_train->add_option("--lambda-c", tr.train.lambda_c);
    c_train->add_option("--lambda-z", tr.train.lambda_z);
    c_train->add_option("--kl-anneal-steps", tr.train.kl_anneal_steps);
    c_train->add_option("--max-free-run", tr.train.max_free_run);
    c_train->add_option("--clip-norm", tr.train.clip_norm);
    c_train->add_option("--checkpoint-every", tr.train.checkpoint_every);
    c_train->add_option("--hidden", tr.model.hidden);
    c_train->add_option("--layers", tr.model.layers);
    c_train->add_option("--latent-dim", tr.model.latent_dim);
    c_train->add_option("--latent-hidden", tr.model.latent_hidden);
    c_train->add_option("--dropout", tr.model.dropout);
    c_train->add_option("--gate-lambda", tr.model.gate_bias, "Scale of the context gate");
    c_train->add_option("--min-count", tr.min_count);
    c_train->add_option("--max-vocab", tr.max_vocab);

    GenerateOpts gen;
    auto *c_gen = app.add_subcommand("generate", "Generate responses for dialogue contexts");
    c_gen->add_option("--checkpoint", gen.checkpoint)->required();
    c_gen->add_option("--vocab", gen.vocab, "Default: `vocab` next to the checkpoint");
    c_gen->add_option("--embeddings", gen.embeddings)->required();
    c_gen->add_option("--input", gen.input, "Dialogue TSV; response column optional")
        ->required();
    c_gen->add_option("--out", gen.out)->required();
    c_gen->add_option("--c", gen.c, "Preset coherence code in [-1, 1]")
        ->check(CLI::Range(-1.0, 1.0));
    c_gen->add_flag("--oracle", gen.oracle, "Use C(context, gold response) as the code");
    c_gen->add_option("--decode", gen.decode, "greedy or beam:<width>");
    c_gen->add_option("--max-len", gen.max_len);
    c_gen->add_flag("--mean-z", gen.mean_z, "Use the prior mean instead of sampling z");

    EvaluateOpts ev;
    auto *c_eval = app.add_subcommand("evaluate", "Score generated responses");
    c_eval->add_option("--outputs", ev.outputs)->required();
    c_eval->add_option("--test", ev.test, "Test pairs aligned with the outputs")->required();
    c_eval->add_option("--embeddings", ev.embeddings)->required();
    c_eval->add_option("--out", ev.out, "Key-value report file");
    c_eval->add_option("--sample", ev.sample, "Distinct metrics on a random subset (0 = all)");

    GradCheckOpts gc;
    auto *c_gc = app.add_subcommand("grad-check", "Finite-difference check on a micro model");
    c_gc->add_option("--variant", gc.variant)
        ->check(CLI::IsMember({"xgate", "cgate", "attention"}));
    c_gc->add_option("--tolerance", gc.tolerance);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        std::cerr << "error: ConfigError: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*c_emb)
            run_train_embeddings(*c_emb, emb, g);
        else if (*c_score)
            run_score(*c_score, score, g);
        else if (*c_filter)
            run_filter(*c_filter, filter, g);
        else if (*c_split)
            run_split(*c_split, split, g);
        else if (*c_synth)
            run_synth(*c_synth, synth, g);
        else if (*c_train)
            run_train(*c_train, tr, g);
        else if (*c_gen)
            run_generate(*c_gen, gen, g);
        else if (*c_eval)
            run_evaluate(*c_eval, ev, g);
        else if (*c_gc)
            return run_grad_check(gc, g);
    } catch (const Error &e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "error: Error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
