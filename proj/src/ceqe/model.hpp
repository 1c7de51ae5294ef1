// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0
//
// The CEQE network: context embeddings, multi-width convolution, POS fusion,
// a feed-forward / BiGRU stack, and a two-way softmax head over the stack
// output concatenated with the baseline features.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ceqe/data.hpp"
#include "ceqe/ops.hpp"
#include "ceqe/rng.hpp"
#include "ceqe/tensor.hpp"

namespace ceqe::model {

struct ModelConfig {
    std::size_t word_dim = 64;
    std::size_t pos_dim = 32;
    std::vector<std::size_t> conv_widths{1, 3, 5, 7};
    std::size_t n_filters = 64;
    std::size_t ff1 = 400;
    std::size_t gru1 = 200;
    std::size_t ff2 = 200;
    std::size_t gru2 = 100;
    std::size_t ff3 = 100;
    std::size_t ff4 = 50;
    std::size_t n_features = data::kNumFeatures;
    double dropout = 0.3;
    double ln_eps = 1e-5;
    bool use_conv = true;
    bool use_pos = true;
    bool use_features = true;

    /// Throws a Config error on the first violated constraint.
    void validate() const;

    /// Width of the representation entering the first feed-forward layer.
    std::size_t stack_input_width() const;
    std::size_t head_input_width() const;

    /// "key=value" lines; doubles printed with round-trip precision.
    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);
    /// Applies one key=value setting; returns false for an unknown key.
    bool set(const std::string& key, const std::string& value);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct StageShape {
    std::string name;
    ad::Shape shape;
};

struct ForwardResult {
    ad::Tensor logits;                // [B*T x 2]
    std::vector<StageShape> stages;   // filled when tracing
};

struct GruParams {
    std::size_t w;    // [in x 3H] input weights for z | r | candidate
    std::size_t u_zr; // [H x 2H]
    std::size_t u_h;  // [H x H]
    std::size_t b;    // [3H]
};

class CeqeModel {
public:
    /// Zero-valued parameters (the shape skeleton used when loading).
    CeqeModel(ModelConfig config, data::Vocabulary words, data::Vocabulary pos);
    /// Initialized parameters: Glorot-uniform weights and filters, zero
    /// biases, N(0, 0.1) embeddings, unit layer-norm gains.
    CeqeModel(ModelConfig config, data::Vocabulary words, data::Vocabulary pos, Rng& init_rng);

    CeqeModel(const CeqeModel&) = delete;
    CeqeModel& operator=(const CeqeModel&) = delete;
    CeqeModel(CeqeModel&&) = default;
    CeqeModel& operator=(CeqeModel&&) = default;

    const ModelConfig& config() const noexcept { return config_; }
    const data::Vocabulary& words() const noexcept { return words_; }
    const data::Vocabulary& pos() const noexcept { return pos_; }

    std::vector<ad::Parameter>& parameters() noexcept { return params_; }
    const std::vector<ad::Parameter>& parameters() const noexcept { return params_; }
    std::vector<ad::Parameter*> parameter_ptrs();
    ad::Parameter& parameter(const std::string& name);
    std::size_t parameter_count() const;
    static std::size_t parameter_count(const ModelConfig& config, std::size_t word_vocab, std::size_t pos_vocab);

    void set_dropout(double p);

    /// [B*T x 6d]: prev, current, next target word, source-left, mean of the
    /// aligned source words, source-right.
    ad::Tensor embed_positions(const data::Batch& batch) const;
    /// [B*T x |H| * n_f], widths in ascending order. Padding rows must be zero.
    ad::Tensor conv_encode(const ad::Tensor& x, std::size_t seq_len) const;
    /// Appends target-POS and mean aligned-source-POS embeddings.
    ad::Tensor fuse_pos(const ad::Tensor& x, const data::Batch& batch, bool training, Rng& rng) const;
    /// [B*T x 2H]. Hidden state is carried unchanged across padded steps.
    ad::Tensor bigru_layer(const ad::Tensor& x, const data::Batch& batch, const GruParams& fwd, const GruParams& bwd,
                           std::size_t hidden) const;
    /// FF/BiGRU/LayerNorm stack ending in the ff4-wide layer.
    ad::Tensor rnn_stack(const ad::Tensor& x, const data::Batch& batch, bool training, Rng& rng,
                         std::vector<StageShape>* trace = nullptr) const;
    /// [B*T x 2] logits.
    ad::Tensor output_head(const ad::Tensor& h, const data::Batch& batch, std::vector<StageShape>* trace = nullptr) const;

    ForwardResult forward(const data::Batch& batch, bool training, Rng& rng, bool trace = false) const;

    /// Copy of every parameter's values, in registration order.
    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& values);

private:
    std::size_t add_param(const std::string& name, ad::Shape shape);
    void build();
    void initialize(Rng& rng);
    const ad::Tensor& p(std::size_t index) const { return params_[index].tensor; }
    ad::Tensor feed_forward(const ad::Tensor& x, std::size_t layer) const;

    ModelConfig config_;
    data::Vocabulary words_;
    data::Vocabulary pos_;
    std::vector<ad::Parameter> params_;

    std::size_t word_table_ = 0;
    std::size_t pos_table_ = 0;
    std::vector<std::pair<std::size_t, std::size_t>> conv_; // (filters, bias) per width
    std::vector<std::pair<std::size_t, std::size_t>> ff_;   // (W, b): ff1a ff1b ff2a ff2b ff3 ff4
    GruParams gru1_fwd_{}, gru1_bwd_{}, gru2_fwd_{}, gru2_bwd_{};
    std::size_t ln1_gain_ = 0, ln1_shift_ = 0, ln2_gain_ = 0, ln2_shift_ = 0;
    std::size_t out_w_ = 0, out_b_ = 0;
};

/// Argmax labels for the real positions of each sentence; ties go to BAD.
std::vector<data::LabelList> predict(const ad::Tensor& logits, const data::Batch& batch);

} // namespace ceqe::model
