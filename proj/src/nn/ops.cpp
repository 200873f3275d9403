#include "cohdial/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "cohdial/errors.hpp"

namespace cohdial::nn {

namespace {

Tape &same_tape(Var a, Var b) {
    if (!a.valid() || a.tape() != b.tape())
        throw InputError("operands recorded on different tapes");
    return *a.tape();
}

void require_same_shape(Var a, Var b, const char *op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ");
}

void require_vector(Var v, const char *op) {
    if (v.value().rank() != 1)
        throw ShapeError(std::string(op) + ": expected a vector, got " + to_string(v.shape()));
}

void accumulate(Tape &t, std::size_t id, const Tensor &g) {
    if (!t.requires_grad(id))
        return;
    auto dst = t.grad(id).data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] += src[i];
}

// Applies f elementwise; the backward uses d(out)/d(in) from df(in, out).
template <class F, class DF>
Var unary(Var v, F f, DF df) {
    Tape &t = *v.tape();
    const Tensor &x = v.value();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = f(x[i]);
    auto id = v.id();
    return t.record(std::move(out), v.requires_grad(), [id, df](Tape &tape, const Tensor &g) {
        const Tensor &xin = tape.value(id);
        Tensor &gx = tape.grad(id);
        for (std::size_t i = 0; i < xin.size(); ++i)
            gx[i] += g[i] * df(xin[i]);
    });
}

} // namespace

Var add(Var a, Var b) {
    Tape &t = same_tape(a, b);
    require_same_shape(a, b, "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += b.value()[i];
    auto ia = a.id(), ib = b.id();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ia, ib](Tape &tape, const Tensor &g) {
                        accumulate(tape, ia, g);
                        accumulate(tape, ib, g);
                    });
}

Var sub(Var a, Var b) {
    Tape &t = same_tape(a, b);
    require_same_shape(a, b, "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] -= b.value()[i];
    auto ia = a.id(), ib = b.id();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ia, ib](Tape &tape, const Tensor &g) {
                        accumulate(tape, ia, g);
                        if (tape.requires_grad(ib)) {
                            auto &gb = tape.grad(ib);
                            for (std::size_t i = 0; i < g.size(); ++i)
                                gb[i] -= g[i];
                        }
                    });
}

Var mul(Var a, Var b) {
    Tape &t = same_tape(a, b);
    require_same_shape(a, b, "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] *= b.value()[i];
    auto ia = a.id(), ib = b.id();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ia, ib](Tape &tape, const Tensor &g) {
                        const Tensor &va = tape.value(ia);
                        const Tensor &vb = tape.value(ib);
                        if (tape.requires_grad(ia)) {
                            auto &ga = tape.grad(ia);
                            for (std::size_t i = 0; i < g.size(); ++i)
                                ga[i] += g[i] * vb[i];
                        }
                        if (tape.requires_grad(ib)) {
                            auto &gb = tape.grad(ib);
                            for (std::size_t i = 0; i < g.size(); ++i)
                                gb[i] += g[i] * va[i];
                        }
                    });
}

Var scale(Var v, Var s) {
    Tape &t = same_tape(v, s);
    if (s.size() != 1)
        throw ShapeError("scale: factor must have one element, got " + to_string(s.shape()));
    double k = s.value()[0];
    Tensor out = v.value();
    for (auto &x : out.data())
        x *= k;
    auto iv = v.id(), is = s.id();
    return t.record(std::move(out), v.requires_grad() || s.requires_grad(),
                    [iv, is](Tape &tape, const Tensor &g) {
                        const Tensor &vv = tape.value(iv);
                        double k = tape.value(is)[0];
                        if (tape.requires_grad(iv)) {
                            auto &gv = tape.grad(iv);
                            for (std::size_t i = 0; i < g.size(); ++i)
                                gv[i] += g[i] * k;
                        }
                        if (tape.requires_grad(is)) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < g.size(); ++i)
                                acc += g[i] * vv[i];
                            tape.grad(is)[0] += acc;
                        }
                    });
}

Var mul_scalar(Var v, double k) {
    return unary(v, [k](double x) { return x * k; }, [k](double) { return k; });
}

Var add_scalar(Var v, double k) {
    return unary(v, [k](double x) { return x + k; }, [](double) { return 1.0; });
}

Var neg(Var v) { return mul_scalar(v, -1.0); }

Var matmul(Var a, Var b) {
    Tape &t = same_tape(a, b);
    const Tensor &A = a.value();
    const Tensor &B = b.value();
    if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2) || A.cols() != B.rows())
        throw ShapeError("matmul: cannot multiply " + to_string(A.shape()) + " by " +
                         to_string(B.shape()));
    const std::size_t m = A.rows(), k = A.cols();
    const std::size_t n = B.rank() == 1 ? 1 : B.cols();
    Tensor out(B.rank() == 1 ? Shape{m} : Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double *arow = A.data().data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p)
                acc += arow[p] * B[p * n + j];
            out[i * n + j] = acc;
        }
    }
    auto ia = a.id(), ib = b.id();
    return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                    [ia, ib, m, k, n](Tape &tape, const Tensor &g) {
                        const Tensor &A = tape.value(ia);
                        const Tensor &B = tape.value(ib);
                        if (tape.requires_grad(ia)) {
                            auto &ga = tape.grad(ia);
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) {
                                    double gij = g[i * n + j];
                                    if (gij == 0.0)
                                        continue;
                                    double *garow = ga.data().data() + i * k;
                                    for (std::size_t p = 0; p < k; ++p)
                                        garow[p] += gij * B[p * n + j];
                                }
                        }
                        if (tape.requires_grad(ib)) {
                            auto &gb = tape.grad(ib);
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < n; ++j) {
                                    double gij = g[i * n + j];
                                    if (gij == 0.0)
                                        continue;
                                    const double *arow = A.data().data() + i * k;
                                    for (std::size_t p = 0; p < k; ++p)
                                        gb[p * n + j] += gij * arow[p];
                                }
                        }
                    });
}

Var vecmat(Var v, Var m) {
    Tape &t = same_tape(v, m);
    const Tensor &x = v.value();
    const Tensor &M = m.value();
    if (x.rank() != 1 || M.rank() != 2 || M.rows() != x.size())
        throw ShapeError("vecmat: cannot multiply " + to_string(x.shape()) + " by " +
                         to_string(M.shape()));
    const std::size_t k = M.rows(), n = M.cols();
    Tensor out(Shape{n});
    for (std::size_t p = 0; p < k; ++p) {
        double xp = x[p];
        if (xp == 0.0)
            continue;
        const double *mrow = M.data().data() + p * n;
        for (std::size_t j = 0; j < n; ++j)
            out[j] += xp * mrow[j];
    }
    auto iv = v.id(), im = m.id();
    return t.record(std::move(out), v.requires_grad() || m.requires_grad(),
                    [iv, im, k, n](Tape &tape, const Tensor &g) {
                        const Tensor &x = tape.value(iv);
                        const Tensor &M = tape.value(im);
                        if (tape.requires_grad(iv)) {
                            auto &gx = tape.grad(iv);
                            for (std::size_t p = 0; p < k; ++p) {
                                const double *mrow = M.data().data() + p * n;
                                double acc = 0.0;
                                for (std::size_t j = 0; j < n; ++j)
                                    acc += g[j] * mrow[j];
                                gx[p] += acc;
                            }
                        }
                        if (tape.requires_grad(im)) {
                            auto &gm = tape.grad(im);
                            for (std::size_t p = 0; p < k; ++p) {
                                double xp = x[p];
                                if (xp == 0.0)
                                    continue;
                                double *grow = gm.data().data() + p * n;
                                for (std::size_t j = 0; j < n; ++j)
                                    grow[j] += xp * g[j];
                            }
                        }
                    });
}

Var vecmat(Var v, const Tensor &m) {
    const Tensor &x = v.value();
    if (x.rank() != 1 || m.rank() != 2 || m.rows() != x.size())
        throw ShapeError("vecmat: cannot multiply " + to_string(x.shape()) + " by " +
                         to_string(m.shape()));
    const std::size_t k = m.rows(), n = m.cols();
    Tensor out(Shape{n});
    for (std::size_t p = 0; p < k; ++p) {
        double xp = x[p];
        if (xp == 0.0)
            continue;
        const double *mrow = m.data().data() + p * n;
        for (std::size_t j = 0; j < n; ++j)
            out[j] += xp * mrow[j];
    }
    auto iv = v.id();
    const Tensor *mp = &m;
    return v.tape()->record(std::move(out), v.requires_grad(),
                            [iv, mp, k, n](Tape &tape, const Tensor &g) {
                                auto &gx = tape.grad(iv);
                                for (std::size_t p = 0; p < k; ++p) {
                                    const double *mrow = mp->data().data() + p * n;
                                    double acc = 0.0;
                                    for (std::size_t j = 0; j < n; ++j)
                                        acc += g[j] * mrow[j];
                                    gx[p] += acc;
                                }
                            });
}

Var concat(std::span<const Var> parts) {
    if (parts.empty())
        throw ShapeError("concat of nothing");
    Tape &t = *parts[0].tape();
    std::vector<std::size_t> ids, sizes;
    std::vector<double> data;
    bool rg = false;
    for (const Var &p : parts) {
        same_tape(parts[0], p);
        require_vector(p, "concat");
        ids.push_back(p.id());
        sizes.push_back(p.size());
        auto d = p.value().data();
        data.insert(data.end(), d.begin(), d.end());
        rg = rg || p.requires_grad();
    }
    return t.record(Tensor::vector(std::move(data)), rg,
                    [ids, sizes](Tape &tape, const Tensor &g) {
                        std::size_t off = 0;
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                            if (tape.requires_grad(ids[k])) {
                                auto &gk = tape.grad(ids[k]);
                                for (std::size_t i = 0; i < sizes[k]; ++i)
                                    gk[i] += g[off + i];
                            }
                            off += sizes[k];
                        }
                    });
}

Var slice(Var v, std::size_t begin, std::size_t length) {
    require_vector(v, "slice");
    if (begin + length > v.size())
        throw ShapeError("slice [" + std::to_string(begin) + ", " +
                         std::to_string(begin + length) + ") out of range " +
                         to_string(v.shape()));
    auto d = v.value().data().subspan(begin, length);
    auto iv = v.id();
    return v.tape()->record(Tensor::vector({d.begin(), d.end()}), v.requires_grad(),
                            [iv, begin, length](Tape &tape, const Tensor &g) {
                                auto &gv = tape.grad(iv);
                                for (std::size_t i = 0; i < length; ++i)
                                    gv[begin + i] += g[i];
                            });
}

Var stack(std::span<const Var> rows) {
    if (rows.empty())
        throw ShapeError("stack of nothing");
    Tape &t = *rows[0].tape();
    const std::size_t n = rows[0].size();
    std::vector<std::size_t> ids;
    std::vector<double> data;
    data.reserve(rows.size() * n);
    bool rg = false;
    for (const Var &r : rows) {
        same_tape(rows[0], r);
        require_vector(r, "stack");
        if (r.size() != n)
            throw ShapeError("stack: rows of different lengths");
        ids.push_back(r.id());
        auto d = r.value().data();
        data.insert(data.end(), d.begin(), d.end());
        rg = rg || r.requires_grad();
    }
    return t.record(Tensor({rows.size(), n}, std::move(data)), rg,
                    [ids, n](Tape &tape, const Tensor &g) {
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                            if (!tape.requires_grad(ids[k]))
                                continue;
                            auto &gk = tape.grad(ids[k]);
                            for (std::size_t i = 0; i < n; ++i)
                                gk[i] += g[k * n + i];
                        }
                    });
}

Var row(Var m, std::size_t r) {
    const Tensor &M = m.value();
    if (M.rank() != 2 || r >= M.rows())
        throw ShapeError("row " + std::to_string(r) + " of " + to_string(M.shape()));
    const std::size_t n = M.cols();
    auto d = M.data().subspan(r * n, n);
    auto im = m.id();
    return m.tape()->record(Tensor::vector({d.begin(), d.end()}), m.requires_grad(),
                            [im, r, n](Tape &tape, const Tensor &g) {
                                auto &gm = tape.grad(im);
                                for (std::size_t i = 0; i < n; ++i)
                                    gm[r * n + i] += g[i];
                            });
}

Var tanh(Var v) {
    return unary(v, [](double x) { return std::tanh(x); },
                 [](double x) {
                     double y = std::tanh(x);
                     return 1.0 - y * y;
                 });
}

namespace {
double sigmoid_value(double x) {
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}
} // namespace

Var sigmoid(Var v) {
    return unary(v, sigmoid_value, [](double x) {
        double y = sigmoid_value(x);
        return y * (1.0 - y);
    });
}

Var exp(Var v) {
    return unary(v, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var v) {
    for (double x : v.value().data())
        if (!(x > 0.0))
            throw NumericalError("log of non-positive value");
    return unary(v, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var square(Var v) {
    return unary(v, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var sqrt(Var v) {
    for (double x : v.value().data())
        if (!(x > 0.0))
            throw NumericalError("sqrt of non-positive value");
    return unary(v, [](double x) { return std::sqrt(x); },
                 [](double x) { return 0.5 / std::sqrt(x); });
}

Var softmax(Var v) {
    require_vector(v, "softmax");
    const Tensor &x = v.value();
    Tensor out(x.shape());
    double mx = *std::max_element(x.data().begin(), x.data().end());
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - mx);
        z += out[i];
    }
    for (auto &y : out.data())
        y /= z;
    auto iv = v.id();
    Tensor probs = out;
    return v.tape()->record(std::move(out), v.requires_grad(),
                            [iv, probs](Tape &tape, const Tensor &g) {
                                double inner = 0.0;
                                for (std::size_t i = 0; i < g.size(); ++i)
                                    inner += g[i] * probs[i];
                                auto &gv = tape.grad(iv);
                                for (std::size_t i = 0; i < g.size(); ++i)
                                    gv[i] += probs[i] * (g[i] - inner);
                            });
}

Var log_softmax(Var v) {
    require_vector(v, "log_softmax");
    const Tensor &x = v.value();
    double mx = *std::max_element(x.data().begin(), x.data().end());
    double z = 0.0;
    for (double xi : x.data())
        z += std::exp(xi - mx);
    double lse = mx + std::log(z);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = x[i] - lse;
    auto iv = v.id();
    Tensor logp = out;
    return v.tape()->record(std::move(out), v.requires_grad(),
                            [iv, logp](Tape &tape, const Tensor &g) {
                                double total = 0.0;
                                for (double gi : g.data())
                                    total += gi;
                                auto &gv = tape.grad(iv);
                                for (std::size_t i = 0; i < g.size(); ++i)
                                    gv[i] += g[i] - std::exp(logp[i]) * total;
                            });
}

Var sum(Var v) {
    double s = 0.0;
    for (double x : v.value().data())
        s += x;
    auto iv = v.id();
    return v.tape()->record(Tensor::scalar(s), v.requires_grad(),
                            [iv](Tape &tape, const Tensor &g) {
                                auto &gv = tape.grad(iv);
                                for (auto &x : gv.data())
                                    x += g[0];
                            });
}

Var dot(Var a, Var b) {
    Tape &t = same_tape(a, b);
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a.value()[i] * b.value()[i];
    auto ia = a.id(), ib = b.id();
    return t.record(Tensor::scalar(s), a.requires_grad() || b.requires_grad(),
                    [ia, ib](Tape &tape, const Tensor &g) {
                        const Tensor &va = tape.value(ia);
                        const Tensor &vb = tape.value(ib);
                        if (tape.requires_grad(ia)) {
                            auto &ga = tape.grad(ia);
                            for (std::size_t i = 0; i < va.size(); ++i)
                                ga[i] += g[0] * vb[i];
                        }
                        if (tape.requires_grad(ib)) {
                            auto &gb = tape.grad(ib);
                            for (std::size_t i = 0; i < vb.size(); ++i)
                                gb[i] += g[0] * va[i];
                        }
                    });
}

Var pick(Var v, std::size_t i) {
    if (i >= v.size())
        throw ShapeError("pick index " + std::to_string(i) + " out of range " +
                         to_string(v.shape()));
    auto iv = v.id();
    return v.tape()->record(Tensor::scalar(v.value()[i]), v.requires_grad(),
                            [iv, i](Tape &tape, const Tensor &g) { tape.grad(iv)[i] += g[0]; });
}

Var cosine(Var a, Var b) {
    Tape &t = same_tape(a, b);
    require_same_shape(a, b, "cosine");
    const Tensor &x = a.value();
    const Tensor &y = b.value();
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xy += x[i] * y[i];
        xx += x[i] * x[i];
        yy += y[i] * y[i];
    }
    if (xx == 0.0 || yy == 0.0)
        throw UndefinedCoherence("cosine with a zero vector");
    double nx = std::sqrt(xx), ny = std::sqrt(yy);
    double c = xy / (nx * ny);
    auto ia = a.id(), ib = b.id();
    return t.record(Tensor::scalar(c), a.requires_grad() || b.requires_grad(),
                    [ia, ib, c, xx, yy, nx, ny](Tape &tape, const Tensor &g) {
                        const Tensor &x = tape.value(ia);
                        const Tensor &y = tape.value(ib);
                        // d cos / dx = y/(|x||y|) - cos * x/|x|^2
                        if (tape.requires_grad(ia)) {
                            auto &gx = tape.grad(ia);
                            for (std::size_t i = 0; i < x.size(); ++i)
                                gx[i] += g[0] * (y[i] / (nx * ny) - c * x[i] / xx);
                        }
                        if (tape.requires_grad(ib)) {
                            auto &gy = tape.grad(ib);
                            for (std::size_t i = 0; i < y.size(); ++i)
                                gy[i] += g[0] * (x[i] / (nx * ny) - c * y[i] / yy);
                        }
                    });
}

Var dropout(Var v, double p, bool training, Rng &rng) {
    if (p < 0.0 || p >= 1.0)
        throw InputError("dropout rate must lie in [0, 1)");
    if (!training || p == 0.0)
        return v;
    std::bernoulli_distribution keep(1.0 - p);
    Tensor mask(v.shape());
    for (auto &m : mask.data())
        m = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
    Tensor out = v.value();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] *= mask[i];
    auto iv = v.id();
    return v.tape()->record(std::move(out), v.requires_grad(),
                            [iv, mask](Tape &tape, const Tensor &g) {
                                auto &gv = tape.grad(iv);
                                for (std::size_t i = 0; i < g.size(); ++i)
                                    gv[i] += g[i] * mask[i];
                            });
}

} // namespace cohdial::nn
