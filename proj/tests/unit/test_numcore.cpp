#include <doctest.h>

#include <cmath>
#include <limits>

#include "cohdial/errors.hpp"
#include "cohdial/nn/adam.hpp"
#include "cohdial/nn/checkpoint.hpp"
#include "cohdial/nn/grad_check.hpp"
#include "cohdial/nn/lstm.hpp"
#include "cohdial/nn/ops.hpp"
#include "support.hpp"

using namespace cohdial;
using namespace cohdial::nn;

namespace {

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor random_tensor(Shape shape, Rng &rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto &v : t.storage())
        v = u(rng);
    return t;
}

} // namespace

TEST_SUITE("numcore") {

TEST_CASE("softmax of equal logits is uniform") {
    Tape tape;
    auto s = softmax(tape.constant(Tensor::vector({0.0, 0.0})));
    CHECK(s.value()[0] == 0.5);
    CHECK(s.value()[1] == 0.5);
    auto big = softmax(tape.constant(Tensor::vector({1000.0, 0.0})));
    CHECK(big.value()[0] == doctest::Approx(1.0));
    auto ls = log_softmax(tape.constant(Tensor::vector({1.0, 2.0, 3.0})));
    double z = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
    CHECK(ls.value()[2] == doctest::Approx(3.0 - z).epsilon(1e-14));
}

TEST_CASE("dropout outside training is the identity") {
    Tape tape;
    Rng rng(3);
    auto v = tape.constant(Tensor::vector({1.0, -2.0, 3.0}));
    CHECK(dropout(v, 0.5, false, rng).value() == v.value());
    CHECK(dropout(v, 0.0, true, rng).value() == v.value());
    auto many = tape.constant(Tensor({20000}, 1.0));
    auto d = dropout(many, 0.25, true, rng);
    double mean = 0.0;
    for (double x : d.value().data()) {
        CHECK((x == 0.0 || x == doctest::Approx(1.0 / 0.75)));
        mean += x;
    }
    CHECK(mean / 20000.0 == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("matmul matches a triple loop") {
    Rng rng(5);
    Tape tape;
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({4, 2}, rng);
    auto c = matmul(tape.constant(a), tape.constant(b)).value();
    REQUIRE(c.shape() == Shape{3, 2});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k)
                s += a.at(i, k) * b.at(k, j);
            CHECK(c.at(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
    auto v = random_tensor({4}, rng);
    auto mv = matmul(tape.constant(a), tape.constant(v)).value();
    auto vm = vecmat(tape.constant(v), tape.constant(b)).value();
    for (std::size_t i = 0; i < 3; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k)
            s += a.at(i, k) * v[k];
        CHECK(mv[i] == doctest::Approx(s).epsilon(1e-14));
    }
    for (std::size_t j = 0; j < 2; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k)
            s += v[k] * b.at(k, j);
        CHECK(vm[j] == doctest::Approx(s).epsilon(1e-14));
    }
    CHECK_THROWS_AS(matmul(tape.constant(a), tape.constant(a)), ShapeError);
}

TEST_CASE("elementary gradients") {
    Tape tape;
    auto x = tape.variable(Tensor::vector({1.0, 2.0, 3.0}));
    tape.backward(sum(x));
    for (double g : x.grad().data())
        CHECK(g == 1.0);

    Tape t2;
    auto z = t2.variable(Tensor::vector({0.0}));
    t2.backward(sum(sigmoid(z)));
    CHECK(z.grad()[0] == 0.25);

    Tape t3;
    auto w = t3.variable(Tensor::vector({0.5, -1.5}));
    t3.backward(sum(square(w)));
    CHECK(w.grad()[0] == 1.0);
    CHECK(w.grad()[1] == -3.0);
}

TEST_CASE("backward needs a scalar and values must stay finite") {
    Tape tape;
    auto x = tape.variable(Tensor::vector({1.0, 2.0}));
    CHECK_THROWS_AS(tape.backward(square(x)), ShapeError);
    CHECK_THROWS_AS(log(tape.constant(Tensor::vector({-1.0}))), NumericalError);
    CHECK_THROWS_AS(tape.constant(Tensor::vector({std::nan("")})).value(), NumericalError);
}

TEST_CASE("random op graphs pass finite differences") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        Rng rng(seed);
        ParameterStore store;
        auto &a = store.create("a", {3, 4});
        auto &b = store.create("b", {4});
        auto &c = store.create("c", {3});
        a.value = random_tensor({3, 4}, rng);
        b.value = random_tensor({4}, rng);
        c.value = random_tensor({3}, rng);
        auto target = random_tensor({3}, rng);
        const int shape = int(seed % 3);
        auto closure = [&](Tape &t) {
            Var h = add(matmul(t.param(a), t.param(b)), t.param(c));
            Var act = shape == 0 ? tanh(h) : shape == 1 ? sigmoid(h) : exp(mul_scalar(h, 0.3));
            Var parts[] = {act, softmax(t.param(c))};
            Var joint = concat(parts);
            Var loss = add(sum(square(sub(slice(joint, 0, 3), t.constant(target)))),
                           neg(pick(log_softmax(joint), 4)));
            return add(loss, mul(dot(t.param(c), t.param(c)), cosine(t.param(c), act)));
        };
        auto params = store.all();
        auto report = grad_check(closure, params, 1e-4);
        CHECK(report.deterministic);
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("LSTM with zero weights keeps a zero state") {
    ParameterStore store;
    LSTMStack lstm(store, "enc", 3, 4, 2);
    Tape tape;
    auto s = lstm.step(tape, tape.constant(Tensor::vector({1.0, -1.0, 2.0})), lstm.zero_state(tape));
    REQUIRE(s.h.size() == 2);
    // All gates sit at sigmoid(0) = 0.5 and the candidate at tanh(0) = 0.
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(s.h[l].value()[k] == 0.0);
            CHECK(s.c[l].value()[k] == 0.0);
        }
    CHECK_THROWS_AS(lstm.step(tape, tape.constant(Tensor::vector({1.0})), lstm.zero_state(tape)),
                    ShapeError);
}

TEST_CASE("one LSTM step matches a hand-written cell") {
    Rng rng(9);
    ParameterStore store;
    LSTMStack lstm(store, "enc", 2, 3, 1);
    auto &W = store.get("enc.l0.weight");
    auto &b = store.get("enc.l0.bias");
    W.value = random_tensor({12, 5}, rng);
    b.value = random_tensor({12}, rng);
    auto x = random_tensor({2}, rng);
    auto h0 = random_tensor({3}, rng);
    auto c0 = random_tensor({3}, rng);

    Tape tape;
    LSTMState prev{{tape.constant(h0)}, {tape.constant(c0)}};
    auto s = lstm.step(tape, tape.constant(x), prev);

    double xh[5] = {x[0], x[1], h0[0], h0[1], h0[2]};
    double pre[12];
    for (int r = 0; r < 12; ++r) {
        pre[r] = b.value[std::size_t(r)];
        for (int k = 0; k < 5; ++k)
            pre[r] += W.value.at(std::size_t(r), std::size_t(k)) * xh[k];
    }
    for (int j = 0; j < 3; ++j) {
        double i = sigm(pre[j]), f = sigm(pre[3 + j]), g = std::tanh(pre[6 + j]),
               o = sigm(pre[9 + j]);
        double c = f * c0[std::size_t(j)] + i * g;
        CHECK(s.c[0].value()[std::size_t(j)] == doctest::Approx(c).epsilon(1e-13));
        CHECK(s.h[0].value()[std::size_t(j)] == doctest::Approx(o * std::tanh(c)).epsilon(1e-13));
    }
}

TEST_CASE("LSTM gradients through three steps") {
    Rng rng(13);
    ParameterStore store;
    LSTMStack lstm(store, "enc", 2, 3, 2);
    store.init_uniform(rng, 0.5);
    for (auto *p : store.all())
        p->value = random_tensor(p->value.shape(), rng, 0.5);
    std::vector<Tensor> xs{random_tensor({2}, rng), random_tensor({2}, rng), random_tensor({2}, rng)};
    auto closure = [&](Tape &t) {
        std::vector<Var> in;
        for (const auto &x : xs)
            in.push_back(t.constant(x));
        auto out = lstm.forward(t, in, lstm.zero_state(t));
        return add(sum(square(out.top.back())), sum(out.final.c[0]));
    };
    auto params = store.all();
    auto report = grad_check(closure, params, 1e-5);
    CHECK(report.deterministic);
    CHECK(report.max_rel_error < 1e-5);
}

TEST_CASE("Adam updates") {
    ParameterStore store;
    auto &p = store.create("p", {3});
    p.value = Tensor::vector({1.0, -2.0, 0.5});
    auto params = store.all();
    AdamState adam(params, AdamConfig{0.1});

    p.grad = Tensor({3});
    adam.step(params);
    CHECK(p.value == Tensor::vector({1.0, -2.0, 0.5}));

    AdamState fresh(params, AdamConfig{0.1});
    p.grad = Tensor::vector({3.0, -0.01, 200.0});
    fresh.step(params);
    // The first bias-corrected step is lr * g / (|g| + eps).
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
    CHECK(p.value[1] == doctest::Approx(-2.0 + 0.1).epsilon(1e-5));
    CHECK(p.value[2] == doctest::Approx(0.5 - 0.1).epsilon(1e-6));
    CHECK(fresh.step_count() == 1);

    // Minimize |p - target|^2.
    AdamState opt(params, AdamConfig{0.05});
    auto loss_at = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
            s += (p.value[i] - 0.3) * (p.value[i] - 0.3);
        return s;
    };
    double before = loss_at();
    for (int it = 0; it < 100; ++it) {
        for (std::size_t i = 0; i < 3; ++i)
            p.grad[i] = 2.0 * (p.value[i] - 0.3);
        opt.step(params);
    }
    CHECK(loss_at() < 0.1 * before);
}

TEST_CASE("gradient clipping") {
    ParameterStore store;
    auto &a = store.create("a", {2});
    auto &b = store.create("b", {1});
    a.grad = Tensor::vector({3.0, 0.0});
    b.grad = Tensor::vector({4.0});
    auto params = store.all();
    CHECK(clip_grad_norm(params, 10.0) == 5.0);
    CHECK(a.grad[0] == 3.0);
    CHECK(clip_grad_norm(params, 1.0) == 5.0);
    CHECK(a.grad[0] == doctest::Approx(0.6));
    CHECK(b.grad[0] == doctest::Approx(0.8));
}

TEST_CASE("grad_check itself") {
    ParameterStore store;
    auto &w = store.create("w", {2});
    w.value = Tensor::vector({0.7, -1.1});
    auto params = store.all();
    auto linear = [&](Tape &t) { return dot(t.param(w), t.constant(Tensor::vector({2.0, 3.0}))); };
    auto ok = grad_check(linear, params, 1e-7);
    CHECK(ok.passed());
    CHECK(ok.max_rel_error < 1e-7);

    Rng rng(1);
    auto noisy = [&](Tape &t) {
        std::normal_distribution<double> n;
        return mul_scalar(sum(t.param(w)), 1.0 + n(rng));
    };
    auto refused = grad_check(noisy, params, 1e-3);
    CHECK_FALSE(refused.deterministic);
    CHECK_FALSE(refused.passed());
}

TEST_CASE("checkpoint round trip") {
    testing::TempDir dir("ckpt");
    Rng rng(2);
    ParameterStore store;
    store.create("x.weight", {2, 3});
    store.create("x.bias", {3});
    store.init_uniform(rng, 0.3);
    store.get("x.bias").value = Tensor::vector({1.0 / 3.0, -0.0, 1e-300});
    save_checkpoint(dir / "m.bin", {{"model.hidden", "3"}, {"note", "a b"}}, store);

    auto ck = load_checkpoint(dir / "m.bin");
    CHECK(ck.header.at("model.hidden") == "3");
    CHECK(ck.header.at("note") == "a b");
    ParameterStore other;
    other.create("x.weight", {2, 3});
    other.create("x.bias", {3});
    restore_parameters(ck, other);
    CHECK(other.get("x.weight").value == store.get("x.weight").value);
    CHECK(other.get("x.bias").value == store.get("x.bias").value);

    ParameterStore wrong;
    wrong.create("x.weight", {3, 2});
    wrong.create("x.bias", {3});
    CHECK_THROWS(restore_parameters(ck, wrong));
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.bin"), IoError);
    CHECK(parse_header(format_header(ck.header)) == ck.header);
}

} // TEST_SUITE
