#pragma once

#include <span>
#include <vector>

#include "cohdial/nn/tape.hpp"

namespace cohdial::nn {

// Elementwise; shapes must match exactly.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

// Multiplies every element of v by the one-element s.
Var scale(Var v, Var s);
Var mul_scalar(Var v, double k);
Var add_scalar(Var v, double k);
Var neg(Var v);

// (m x k) * (k) -> (m), or (m x k) * (k x n) -> (m x n).
Var matmul(Var a, Var b);
// (k) * (k x n) -> (n).
Var vecmat(Var v, Var m);
// Against a constant matrix held outside the tape; `m` must outlive the
// tape's backward pass.
Var vecmat(Var v, const Tensor &m);

// Vectors only.
Var concat(std::span<const Var> parts);
Var slice(Var v, std::size_t begin, std::size_t length);
// Equal-length vectors -> (count x length) matrix.
Var stack(std::span<const Var> rows);
// Row r of a matrix; embedding lookup.
Var row(Var m, std::size_t r);

Var tanh(Var v);
Var sigmoid(Var v);
Var exp(Var v);
Var log(Var v);
Var square(Var v);
Var sqrt(Var v);

Var softmax(Var v);
Var log_softmax(Var v);

Var sum(Var v);
Var dot(Var a, Var b);
// Element i as a one-element tensor.
Var pick(Var v, std::size_t i);
// Cosine similarity of two vectors; throws UndefinedCoherence on a zero side.
Var cosine(Var a, Var b);

// Inverted dropout: survivors scaled by 1/(1-p) in training mode, identity
// otherwise or when p == 0.
Var dropout(Var v, double p, bool training, Rng &rng);

} // namespace cohdial::nn
