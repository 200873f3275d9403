#include <doctest.h>

#include <cmath>

#include "cohdial/errors.hpp"
#include "cohdial/model.hpp"
#include "cohdial/training.hpp"

using namespace cohdial;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

GaussianVars gaussian(Tape &tape, std::vector<double> mean, std::vector<double> log_var) {
    return {tape.variable(Tensor::vector(std::move(mean))),
            tape.variable(Tensor::vector(std::move(log_var)))};
}

void zero_all(GeneratorModel &m) {
    for (auto *p : m.params().all())
        p->value.fill(0.0);
}

const TokenIds kContext{4, 5, 6, 7, 8};
const TokenIds kResponse{9, 10, kEos};

} // namespace

TEST_SUITE("model") {

TEST_CASE("config validation and header round trip") {
    auto cfg = micro_config(Variant::CvaeCGate);
    cfg.gate_bias = 0.75;
    auto back = GeneratorConfig::from_header(cfg.to_header());
    CHECK(back.hidden == cfg.hidden);
    CHECK(back.variant == Variant::CvaeCGate);
    CHECK(back.gate_bias == 0.75);
    cfg.hidden = 0;
    CHECK_THROWS(cfg.validate());
    CHECK(parse_variant(to_string(Variant::AttentionBaseline)) == Variant::AttentionBaseline);
    CHECK_THROWS(parse_variant("transformer"));
}

TEST_CASE("shapes") {
    GeneratorModel m(micro_config(), 1);
    const auto &cfg = m.config();
    Tape tape;
    auto enc = m.encode_context(tape, kContext);
    CHECK(enc.states.size() == kContext.size());
    CHECK(enc.memory.shape() == nn::Shape{kContext.size(), cfg.hidden});
    CHECK(enc.summary.size() == cfg.hidden);
    auto q = m.posterior(tape, kContext, kResponse);
    auto p = m.prior(tape, kContext);
    CHECK(q.mean.size() == cfg.latent_dim);
    CHECK(p.log_var.size() == cfg.latent_dim);
    auto z = sample_latent(p, std::vector<double>(cfg.latent_dim, 0.0));
    auto s = m.init_decoder_state(tape, enc.summary, z, tape.constant(Tensor::scalar(0.5)));
    CHECK(s.lstm.h.size() == cfg.layers);
    auto tf = m.forward_teacher_forced(tape, kContext, kResponse, z,
                                       tape.constant(Tensor::scalar(0.5)));
    CHECK(tf.log_probs.size() == kResponse.size());
    CHECK(tf.log_probs[0].size() == cfg.vocab_size);
    CHECK(tf.log_likelihood.item() < 0.0);

    CHECK_THROWS_AS(m.encode_context(tape, TokenIds{}), EmptySequence);
    CHECK_THROWS_AS(m.forward_teacher_forced(tape, kContext, TokenIds{9, 10}, z,
                                             tape.constant(Tensor::scalar(0.5))),
                    InputError);
    CHECK_THROWS_AS(sample_latent(p, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("zeroed parameters give zero states and a standard normal") {
    GeneratorModel m(micro_config(), 1);
    zero_all(m);
    Tape tape;
    auto enc = m.encode_context(tape, kContext);
    for (const auto &s : enc.states)
        for (double v : s.value().data())
            CHECK(v == 0.0);
    auto p = m.prior(tape, kContext);
    for (std::size_t d = 0; d < m.config().latent_dim; ++d) {
        CHECK(p.mean.value()[d] == 0.0);
        CHECK(p.log_var.value()[d] == 0.0);
    }
}

TEST_CASE("uniform output layer") {
    auto cfg = micro_config();
    cfg.vocab_size = 24;
    GeneratorModel m(cfg, 3);
    zero_all(m);
    Tape tape;
    auto tf = m.forward_teacher_forced(tape, kContext, kResponse,
                                       tape.constant(Tensor({cfg.latent_dim})),
                                       tape.constant(Tensor::scalar(1.0)));
    CHECK(tf.log_likelihood.item() == doctest::Approx(-3.0 * std::log(24.0)).epsilon(1e-14));
    for (const auto &lp : tf.log_probs) {
        double total = 0.0;
        for (double v : lp.value().data())
            total += std::exp(v);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("reparameterized samples") {
    Tape tape;
    auto g = gaussian(tape, {1.0, -2.0}, {0.0, std::log(4.0)});
    std::vector<double> eps{0.5, -1.0};
    auto z = sample_latent(g, eps);
    CHECK(z.value()[0] == doctest::Approx(1.5));
    CHECK(z.value()[1] == doctest::Approx(-4.0));

    nn::Rng rng(17);
    double m0 = 0.0, m1 = 0.0, v1 = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        Tape t;
        auto s = sample_latent(gaussian(t, {1.0, -2.0}, {0.0, std::log(4.0)}), rng).value();
        m0 += s[0];
        m1 += s[1];
        v1 += (s[1] + 2.0) * (s[1] + 2.0);
    }
    // Standard errors are 0.01 and 0.02 for the two means.
    CHECK(std::abs(m0 / n - 1.0) < 0.04);
    CHECK(std::abs(m1 / n + 2.0) < 0.08);
    CHECK(std::abs(v1 / n - 4.0) < 0.25);
}

TEST_CASE("KL divergence") {
    GaussianParams std_normal{{0.0, 0.0}, {0.0, 0.0}};
    CHECK(kl_divergence(std_normal, std_normal) == 0.0);
    CHECK(kl_divergence(GaussianParams{{1.0}, {0.0}}, GaussianParams{{0.0}, {0.0}}) == 0.5);
    // Variance 2 against 1: 0.5 * (2 - 1 - log 2).
    CHECK(kl_divergence(GaussianParams{{0.0}, {std::log(2.0)}}, GaussianParams{{0.0}, {0.0}}) ==
          doctest::Approx(0.5 * (1.0 - std::log(2.0))));

    nn::Rng rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 10000; ++i) {
        GaussianParams q{{u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}};
        GaussianParams p{{u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)}};
        CHECK(kl_divergence(q, p) >= 0.0);
    }
    Tape tape;
    auto q = gaussian(tape, {0.3, -1.0}, {0.2, -0.4});
    auto p = gaussian(tape, {-0.1, 0.5}, {0.0, 0.7});
    CHECK(kl_divergence(q, p).item() ==
          doctest::Approx(kl_divergence(q.values(), p.values())).epsilon(1e-14));
}

TEST_CASE("scalar gate") {
    CHECK(context_gate(0.7, 0.7, 1.0) == 0.5);
    CHECK(context_gate(0.2, 0.2, 0.6) == doctest::Approx(0.3));
    CHECK(context_gate(1.0, 0.5, 1.0) == doctest::Approx(0.6224593312018546));
    double last = -1.0;
    for (double c = -1.0; c <= 1.0; c += 0.05) {
        double k = context_gate(c, 0.1, 0.8);
        CHECK(k > last);
        CHECK(k >= 0.0);
        CHECK(k <= 0.8);
        last = k;
    }
    CHECK(context_gate(-800.0, 0.0, 1.0) == 0.0);
    CHECK(context_gate(800.0, 0.0, 1.0) == 1.0);
    Tape tape;
    auto k = context_gate(tape.constant(Tensor::scalar(1.0)), tape.constant(Tensor::scalar(0.5)), 1.0);
    CHECK(k.item() == doctest::Approx(context_gate(1.0, 0.5, 1.0)).epsilon(1e-15));
}

TEST_CASE("attention") {
    GeneratorModel m(micro_config(), 1);
    Tape tape;
    auto one = tape.constant(Tensor({1, 3}, {0.2, -0.4, 1.0}));
    auto single = m.attention(tape.constant(Tensor::vector({5.0, 1.0, -2.0})), one);
    CHECK(single.weights.value()[0] == 1.0);
    CHECK(single.context.value() == Tensor::vector({0.2, -0.4, 1.0}));

    auto same = tape.constant(Tensor({3, 2}, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5}));
    auto even = m.attention(tape.constant(Tensor::vector({1.0, 2.0})), same);
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(even.weights.value()[j] == doctest::Approx(1.0 / 3.0));

    auto two = tape.constant(Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}));
    auto res = m.attention(tape.constant(Tensor::vector({2.0, 0.0})), two);
    double w0 = std::exp(2.0) / (std::exp(2.0) + 1.0);
    CHECK(res.weights.value()[0] == doctest::Approx(w0).epsilon(1e-14));
    CHECK(res.context.value()[0] == doctest::Approx(w0).epsilon(1e-14));
    CHECK(res.context.value()[1] == doctest::Approx(1.0 - w0).epsilon(1e-14));
}

TEST_CASE("a closed gate leaves the decoder state untouched") {
    auto xcfg = micro_config(Variant::CvaeXGate);
    auto bcfg = micro_config(Variant::AttentionBaseline);
    GeneratorModel x(xcfg, 21), b(bcfg, 21);
    Tape tape;
    auto enc = x.encode_context(tape, kContext);
    auto z = tape.constant(Tensor({xcfg.latent_dim}));
    auto c = tape.constant(Tensor::scalar(0.0));
    auto sx = x.init_decoder_state(tape, enc.summary, z, c);
    auto sb = b.init_decoder_state(tape, enc.summary, z, c);
    auto att = x.attention(sx.lstm.h.back(), enc.memory);
    auto closed = x.decoder_step(tape, x.decoder_input(tape, kBos), sx, att.context,
                                 tape.constant(Tensor::scalar(0.0)));
    auto plain = b.decoder_step(tape, b.decoder_input(tape, kBos), sb, att.context,
                                tape.constant(Tensor::scalar(0.7)));
    CHECK(closed.gate == 0.0);
    CHECK(closed.log_probs.value() == plain.log_probs.value());
    for (std::size_t l = 0; l < xcfg.layers; ++l)
        CHECK(closed.state.lstm.h[l].value() == plain.state.lstm.h[l].value());

    auto open = x.decoder_step(tape, x.decoder_input(tape, kBos), sx, att.context,
                               tape.constant(Tensor::scalar(0.9)));
    CHECK(open.gate == doctest::Approx(0.9));
    CHECK_FALSE(open.log_probs.value() == plain.log_probs.value());
}

TEST_CASE("the baseline equals the scalar-gate model at zero gate bias") {
    auto xcfg = micro_config(Variant::CvaeXGate);
    xcfg.gate_bias = 0.0;
    GeneratorModel x(xcfg, 8), b(micro_config(Variant::AttentionBaseline), 8);
    Tape tape;
    auto zero_z = tape.constant(Tensor({xcfg.latent_dim}));
    auto zero_c = tape.constant(Tensor::scalar(0.0));
    auto lx = x.forward_teacher_forced(tape, kContext, kResponse, zero_z, zero_c);
    // The baseline ignores whatever codes it is handed.
    auto lb = b.forward_teacher_forced(tape, kContext, kResponse,
                                       tape.constant(Tensor({xcfg.latent_dim}, 3.0)),
                                       tape.constant(Tensor::scalar(0.9)));
    CHECK(lx.log_likelihood.item() == lb.log_likelihood.item());
    for (double g : lx.gates)
        CHECK(g == 0.0);
}

TEST_CASE("the initial decoder state carries gradient to the code") {
    GeneratorModel m(micro_config(), 4);
    Tape tape;
    auto c = tape.variable(Tensor::scalar(0.3));
    auto z = tape.variable(Tensor({m.config().latent_dim}, 0.1));
    auto tf = m.forward_teacher_forced(tape, kContext, kResponse, z, c);
    tape.backward(tf.log_likelihood);
    CHECK(c.grad()[0] != 0.0);
    double zn = 0.0;
    for (double g : z.grad().data())
        zn += std::abs(g);
    CHECK(zn > 0.0);

    GeneratorModel base(micro_config(Variant::AttentionBaseline), 4);
    Tape t2;
    auto c2 = t2.variable(Tensor::scalar(0.3));
    auto tf2 = base.forward_teacher_forced(t2, kContext, kResponse,
                                           t2.constant(Tensor({m.config().latent_dim})), c2);
    t2.backward(tf2.log_likelihood);
    CHECK(c2.grad()[0] == 0.0);
}

TEST_CASE("soft free run") {
    GeneratorModel m(micro_config(), 6);
    Tape tape;
    auto z = tape.constant(Tensor({m.config().latent_dim}));
    auto c = tape.constant(Tensor::scalar(0.5));
    auto one = m.forward_soft_freerun(tape, kContext, z, c, 1);
    REQUIRE(one.dists.size() == 1);
    double total = 0.0;
    for (double p : one.dists[0].value().data())
        total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    auto longer = m.forward_soft_freerun(tape, kContext, z, c, 7);
    CHECK(longer.dists.size() <= 7);
    CHECK(longer.dists.size() >= 1);
    CHECK(longer.gates.size() == longer.dists.size());
    for (double g : longer.gates) {
        CHECK(g >= 0.0);
        CHECK(g <= m.config().gate_bias);
    }
    CHECK_THROWS_AS(m.forward_soft_freerun(tape, kContext, z, c, 0), InputError);
}

TEST_CASE("same seed, same parameters") {
    GeneratorModel a(micro_config(Variant::CvaeCGate), 12), b(micro_config(Variant::CvaeCGate), 12);
    auto pa = a.params().all();
    auto pb = b.params().all();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->name == pb[i]->name);
        CHECK(pa[i]->value == pb[i]->value);
    }
    CHECK(a.params().find("cgate.weight") != nullptr);
    GeneratorModel x(micro_config(Variant::CvaeXGate), 12);
    CHECK(x.params().find("cgate.weight") == nullptr);
}

} // TEST_SUITE
