// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0
//
// Test-side oracles and builders shared by the unit suites and the
// acceptance binary. Nothing here calls back into the code under test for
// the quantity it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "ceqe/data.hpp"
#include "ceqe/model.hpp"
#include "ceqe/ops.hpp"
#include "ceqe/rng.hpp"

namespace ceqe::testing {

/// The scaled-down instance used for whole-model finite differences.
inline model::ModelConfig gradcheck_config() {
    model::ModelConfig c;
    c.word_dim = 4;
    c.pos_dim = 2;
    c.conv_widths = {1, 3};
    c.n_filters = 2;
    c.ff1 = 16;
    c.gru1 = 8;
    c.ff2 = 8;
    c.gru2 = 4;
    c.ff3 = 4;
    c.ff4 = 2;
    c.dropout = 0.0;
    return c;
}

/// Small network used for training-based checks on the synthetic corpus.
inline model::ModelConfig small_config() {
    model::ModelConfig c;
    c.word_dim = 32;
    c.pos_dim = 8;
    c.n_filters = 32;
    c.ff1 = 64;
    c.gru1 = 32;
    c.ff2 = 32;
    c.gru2 = 16;
    c.ff3 = 32;
    c.ff4 = 16;
    return c;
}

/// Parameter total written out layer by layer, independent of the model code.
inline std::size_t expected_parameter_count(const model::ModelConfig& c, std::size_t words, std::size_t tags) {
    struct Dense {
        std::size_t in, out;
    };
    std::size_t total = words * c.word_dim;
    if (c.use_pos) {
        total += tags * c.pos_dim;
    }
    std::size_t width = 6 * c.word_dim;
    if (c.use_conv) {
        std::size_t conv_out = 0;
        for (std::size_t h : c.conv_widths) {
            total += c.n_filters * (h * width) + c.n_filters;
            conv_out += c.n_filters;
        }
        width = conv_out;
    }
    if (c.use_pos) {
        width += 2 * c.pos_dim;
    }
    const std::size_t head_in = c.ff4 + (c.use_features ? 31 : 0);
    const Dense dense[] = {{width, c.ff1},          {c.ff1, c.ff1}, {2 * c.gru1, c.ff2}, {c.ff2, c.ff2},
                           {2 * c.gru2, c.ff3},     {c.ff3, c.ff4}, {head_in, 2}};
    for (const Dense& d : dense) {
        total += d.in * d.out + d.out;
    }
    // per direction: three input maps, three recurrent maps, three biases
    const auto gru = [](std::size_t in, std::size_t h) { return 3 * (in * h + h * h + h); };
    total += 2 * gru(c.ff1, c.gru1) + 2 * gru(c.ff2, c.gru2);
    total += 2 * (2 * c.gru1) + 2 * (2 * c.gru2); // layer-norm gain and shift
    return total;
}

/// Adds N(0, scale) noise to every parameter so no ReLU sits exactly on its kink.
inline void jitter(model::CeqeModel& m, Rng& rng, double scale = 0.1) {
    for (auto& p : m.parameters()) {
        for (double& v : p.tensor.mutable_values()) {
            v += rng.normal(0.0, scale);
        }
    }
}

struct Prepared {
    data::DatasetSplit split;
    data::Vocabulary words;
    data::Vocabulary pos;
    std::vector<data::EncodedExample> encoded;
};

inline Prepared prepare_synth(const data::SynthOptions& options, std::uint64_t seed) {
    Prepared p;
    Rng rng(seed);
    p.split = data::synth_dataset(options, rng);
    p.words = data::build_word_vocab(p.split);
    p.pos = data::build_pos_vocab(p.split);
    p.encoded = data::encode_split(p.split, p.words, p.pos);
    return p;
}

inline data::Batch batch_of(const std::vector<data::EncodedExample>& encoded, std::vector<std::size_t> indices) {
    return data::make_batch(encoded, indices);
}

/// Logit rows of sentence `slot` inside `batch`, real positions only.
inline std::vector<double> sentence_logits(const ad::Tensor& logits, const data::Batch& batch, std::size_t slot) {
    std::vector<double> out;
    for (std::size_t t = 0; t < batch.lengths[slot]; ++t) {
        const std::size_t row = slot * batch.max_len + t;
        out.push_back(logits.at(row, 0));
        out.push_back(logits.at(row, 1));
    }
    return out;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        return INFINITY;
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

/// Worst solo-vs-padded logit gap over `n` sentences, each evaluated alone and
/// in a batch of eight next to longer and shorter neighbours.
inline double padding_gap(const model::CeqeModel& m, const std::vector<data::EncodedExample>& encoded,
                          std::size_t n) {
    double worst = 0.0;
    Rng unused(0);
    const std::size_t total = encoded.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = i % total;
        const auto solo = batch_of(encoded, {idx});
        const auto a = sentence_logits(m.forward(solo, false, unused).logits, solo, 0);
        std::vector<std::size_t> group;
        for (std::size_t k = 1; group.size() < 7; ++k) {
            group.push_back((idx + 17 * k) % total);
        }
        const std::size_t slot = i % 8;
        group.insert(group.begin() + static_cast<std::ptrdiff_t>(slot), idx);
        const auto padded = batch_of(encoded, group);
        const auto b = sentence_logits(m.forward(padded, false, unused).logits, padded, slot);
        worst = std::max(worst, max_abs_diff(a, b));
    }
    return worst;
}

} // namespace ceqe::testing
