#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "cohdial/coherence.hpp"
#include "cohdial/model.hpp"
#include "cohdial/training.hpp"
#include "support.hpp"

namespace testing {

// Sixteen words w0..w15 with unit vectors at angle 15 * k degrees (w14 and
// w15 are stop words), sized to match micro_config's vocabulary.
inline Lexicon angle_lexicon() {
    std::vector<std::pair<std::string, std::vector<double>>> words;
    for (int k = 0; k < 16; ++k) {
        double a = k * 15.0 * 3.14159265358979323846 / 180.0;
        words.push_back({"w" + std::to_string(k), {std::cos(a), std::sin(a)}});
    }
    return make_lexicon(words, {"w14", "w15"});
}

// Scored examples over the angle lexicon; context length 5, response
// length 3 plus EOS.
inline std::vector<cohdial::TrainingExample> angle_examples(const Lexicon &lex, std::size_t n,
                                                            std::uint64_t seed) {
    cohdial::nn::Rng rng(seed);
    std::uniform_int_distribution<int> word(0, 15);
    std::vector<cohdial::TrainingExample> out;
    while (out.size() < n) {
        cohdial::TrainingExample ex;
        for (int i = 0; i < 5; ++i)
            ex.context.push_back(lex.vocab.id("w" + std::to_string(word(rng))));
        for (int i = 0; i < 3; ++i)
            ex.response.push_back(lex.vocab.id("w" + std::to_string(word(rng))));
        try {
            ex.coherence = cohdial::coherence(ex.context, ex.response, lex.emb, lex.vocab);
        } catch (const cohdial::UndefinedCoherence &) {
            continue;
        }
        ex.response.push_back(cohdial::kEos);
        out.push_back(ex);
    }
    return out;
}

} // namespace testing
