// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#include "ceqe/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "ceqe/errors.hpp"

namespace ceqe::model {

using ad::Tensor;

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::size_t to_size(const std::string& key, const std::string& value) {
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        fail(ErrorKind::Config, key + ": expected a non-negative integer, got \"" + value + "\"");
    }
    return out;
}

double to_double(const std::string& key, const std::string& value) {
    double out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        fail(ErrorKind::Config, key + ": expected a number, got \"" + value + "\"");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") {
        return true;
    }
    if (value == "0" || value == "false") {
        return false;
    }
    fail(ErrorKind::Config, key + ": expected true/false, got \"" + value + "\"");
}

} // namespace

// ------------------------------------------------------------ ModelConfig

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) {
            fail(ErrorKind::Config, std::string(name) + " must be positive");
        }
    };
    positive(word_dim, "word_dim");
    positive(ff1, "ff1");
    positive(gru1, "gru1");
    positive(ff2, "ff2");
    positive(gru2, "gru2");
    positive(ff3, "ff3");
    positive(ff4, "ff4");
    if (use_pos) {
        positive(pos_dim, "pos_dim");
    }
    if (use_conv) {
        positive(n_filters, "n_filters");
        if (conv_widths.empty()) {
            fail(ErrorKind::Config, "conv_widths must not be empty when the convolution is enabled");
        }
        for (std::size_t w : conv_widths) {
            if (w == 0 || w % 2 == 0) {
                fail(ErrorKind::Config, "conv width " + std::to_string(w) + " is not odd");
            }
        }
        if (!std::is_sorted(conv_widths.begin(), conv_widths.end()) ||
            std::adjacent_find(conv_widths.begin(), conv_widths.end()) != conv_widths.end()) {
            fail(ErrorKind::Config, "conv_widths must be strictly ascending");
        }
    }
    if (use_features && n_features != data::kNumFeatures) {
        fail(ErrorKind::Config, "n_features must be " + std::to_string(data::kNumFeatures));
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        fail(ErrorKind::Config, "dropout must be in [0, 1)");
    }
    if (!(ln_eps > 0.0)) {
        fail(ErrorKind::Config, "ln_eps must be positive");
    }
}

std::size_t ModelConfig::stack_input_width() const {
    std::size_t w = use_conv ? conv_widths.size() * n_filters : 6 * word_dim;
    return w + (use_pos ? 2 * pos_dim : 0);
}

std::size_t ModelConfig::head_input_width() const {
    return ff4 + (use_features ? n_features : 0);
}

std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << "word_dim=" << word_dim << '\n' << "pos_dim=" << pos_dim << '\n' << "conv_widths=";
    for (std::size_t i = 0; i < conv_widths.size(); ++i) {
        os << (i ? "," : "") << conv_widths[i];
    }
    os << '\n'
       << "n_filters=" << n_filters << '\n'
       << "ff1=" << ff1 << '\n'
       << "gru1=" << gru1 << '\n'
       << "ff2=" << ff2 << '\n'
       << "gru2=" << gru2 << '\n'
       << "ff3=" << ff3 << '\n'
       << "ff4=" << ff4 << '\n'
       << "n_features=" << n_features << '\n'
       << "dropout=" << fmt_double(dropout) << '\n'
       << "ln_eps=" << fmt_double(ln_eps) << '\n'
       << "use_conv=" << (use_conv ? "true" : "false") << '\n'
       << "use_pos=" << (use_pos ? "true" : "false") << '\n'
       << "use_features=" << (use_features ? "true" : "false") << '\n';
    return os.str();
}

bool ModelConfig::set(const std::string& key, const std::string& value) {
    if (key == "word_dim") {
        word_dim = to_size(key, value);
    } else if (key == "pos_dim") {
        pos_dim = to_size(key, value);
    } else if (key == "conv_widths") {
        conv_widths.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) {
                conv_widths.push_back(to_size(key, item));
            }
        }
    } else if (key == "n_filters") {
        n_filters = to_size(key, value);
    } else if (key == "ff1") {
        ff1 = to_size(key, value);
    } else if (key == "gru1") {
        gru1 = to_size(key, value);
    } else if (key == "ff2") {
        ff2 = to_size(key, value);
    } else if (key == "gru2") {
        gru2 = to_size(key, value);
    } else if (key == "ff3") {
        ff3 = to_size(key, value);
    } else if (key == "ff4") {
        ff4 = to_size(key, value);
    } else if (key == "n_features") {
        n_features = to_size(key, value);
    } else if (key == "dropout") {
        dropout = to_double(key, value);
    } else if (key == "ln_eps") {
        ln_eps = to_double(key, value);
    } else if (key == "use_conv") {
        use_conv = to_bool(key, value);
    } else if (key == "use_pos") {
        use_pos = to_bool(key, value);
    } else if (key == "use_features") {
        use_features = to_bool(key, value);
    } else {
        return false;
    }
    return true;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
    ModelConfig config;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos || !config.set(line.substr(0, eq), line.substr(eq + 1))) {
            fail(ErrorKind::Config, "unrecognized model setting \"" + line + "\"");
        }
    }
    config.validate();
    return config;
}

// -------------------------------------------------------------- CeqeModel

CeqeModel::CeqeModel(ModelConfig config, data::Vocabulary words, data::Vocabulary pos)
    : config_(std::move(config)), words_(std::move(words)), pos_(std::move(pos)) {
    config_.validate();
    build();
}

CeqeModel::CeqeModel(ModelConfig config, data::Vocabulary words, data::Vocabulary pos, Rng& init_rng)
    : CeqeModel(std::move(config), std::move(words), std::move(pos)) {
    initialize(init_rng);
}

std::size_t CeqeModel::add_param(const std::string& name, ad::Shape shape) {
    params_.emplace_back(name, std::move(shape));
    return params_.size() - 1;
}

void CeqeModel::build() {
    const ModelConfig& c = config_;
    word_table_ = add_param("embed.word", {words_.size(), c.word_dim});
    if (c.use_pos) {
        pos_table_ = add_param("embed.pos", {pos_.size(), c.pos_dim});
    }
    if (c.use_conv) {
        for (std::size_t w : c.conv_widths) {
            const std::string prefix = "conv.h" + std::to_string(w);
            std::size_t f = add_param(prefix + ".filters", {c.n_filters, w, 6 * c.word_dim});
            std::size_t b = add_param(prefix + ".bias", {c.n_filters});
            conv_.emplace_back(f, b);
        }
    }
    auto ff = [&](const std::string& name, std::size_t in, std::size_t out) {
        std::size_t w = add_param(name + ".W", {in, out});
        std::size_t b = add_param(name + ".b", {out});
        ff_.emplace_back(w, b);
    };
    auto gru = [&](const std::string& name, std::size_t in, std::size_t h) {
        GruParams g{};
        g.w = add_param(name + ".W", {in, 3 * h});
        g.u_zr = add_param(name + ".U_zr", {h, 2 * h});
        g.u_h = add_param(name + ".U_h", {h, h});
        g.b = add_param(name + ".b", {3 * h});
        return g;
    };
    ff("ff1a", c.stack_input_width(), c.ff1);
    ff("ff1b", c.ff1, c.ff1);
    gru1_fwd_ = gru("gru1.fwd", c.ff1, c.gru1);
    gru1_bwd_ = gru("gru1.bwd", c.ff1, c.gru1);
    ln1_gain_ = add_param("ln1.gain", {2 * c.gru1});
    ln1_shift_ = add_param("ln1.shift", {2 * c.gru1});
    ff("ff2a", 2 * c.gru1, c.ff2);
    ff("ff2b", c.ff2, c.ff2);
    gru2_fwd_ = gru("gru2.fwd", c.ff2, c.gru2);
    gru2_bwd_ = gru("gru2.bwd", c.ff2, c.gru2);
    ln2_gain_ = add_param("ln2.gain", {2 * c.gru2});
    ln2_shift_ = add_param("ln2.shift", {2 * c.gru2});
    ff("ff3", 2 * c.gru2, c.ff3);
    ff("ff4", c.ff3, c.ff4);
    out_w_ = add_param("out.W", {c.head_input_width(), 2});
    out_b_ = add_param("out.b", {2});

    for (std::size_t i = 0; i < params_.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (params_[i].name == params_[j].name) {
                fail(ErrorKind::Contract, "duplicate parameter name " + params_[i].name);
            }
        }
    }
}

void CeqeModel::initialize(Rng& rng) {
    for (ad::Parameter& param : params_) {
        auto values = param.tensor.mutable_values();
        const std::string& name = param.name;
        const ad::Shape& shape = param.shape();
        const bool is_bias = name.ends_with(".b") || name.ends_with(".bias") || name.ends_with(".shift");
        if (name.starts_with("embed.")) {
            for (double& v : values) {
                v = rng.normal(0.0, 0.1);
            }
        } else if (name.ends_with(".gain")) {
            std::fill(values.begin(), values.end(), 1.0);
        } else if (is_bias) {
            std::fill(values.begin(), values.end(), 0.0);
        } else {
            // conv filters [n_f x h x k] count as an (h*k) x n_f matrix
            const double fan_in = shape.size() == 3 ? static_cast<double>(shape[1] * shape[2])
                                                    : static_cast<double>(shape[0]);
            const double fan_out = shape.size() == 3 ? static_cast<double>(shape[0]) : static_cast<double>(shape[1]);
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (double& v : values) {
                v = (2.0 * rng.uniform() - 1.0) * limit;
            }
        }
    }
}

std::vector<ad::Parameter*> CeqeModel::parameter_ptrs() {
    std::vector<ad::Parameter*> out;
    out.reserve(params_.size());
    for (auto& param : params_) {
        out.push_back(&param);
    }
    return out;
}

ad::Parameter& CeqeModel::parameter(const std::string& name) {
    for (auto& param : params_) {
        if (param.name == name) {
            return param;
        }
    }
    fail(ErrorKind::Index, "no parameter named " + name);
}

std::size_t CeqeModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& param : params_) {
        n += param.size();
    }
    return n;
}

std::size_t CeqeModel::parameter_count(const ModelConfig& c, std::size_t word_vocab, std::size_t pos_vocab) {
    c.validate();
    std::size_t n = word_vocab * c.word_dim;
    if (c.use_pos) {
        n += pos_vocab * c.pos_dim;
    }
    if (c.use_conv) {
        for (std::size_t w : c.conv_widths) {
            n += c.n_filters * w * 6 * c.word_dim + c.n_filters;
        }
    }
    auto ff = [](std::size_t in, std::size_t out) { return in * out + out; };
    auto gru = [](std::size_t in, std::size_t h) { return in * 3 * h + h * 2 * h + h * h + 3 * h; };
    n += ff(c.stack_input_width(), c.ff1) + ff(c.ff1, c.ff1);
    n += 2 * gru(c.ff1, c.gru1) + 2 * (2 * c.gru1);
    n += ff(2 * c.gru1, c.ff2) + ff(c.ff2, c.ff2);
    n += 2 * gru(c.ff2, c.gru2) + 2 * (2 * c.gru2);
    n += ff(2 * c.gru2, c.ff3) + ff(c.ff3, c.ff4);
    n += ff(c.head_input_width(), 2);
    return n;
}

void CeqeModel::set_dropout(double p) {
    ModelConfig next = config_;
    next.dropout = p;
    next.validate();
    config_ = next;
}

// ---------------------------------------------------------------- forward

Tensor CeqeModel::embed_positions(const data::Batch& batch) const {
    const std::size_t rows = batch.rows();
    std::vector<std::size_t> prev(rows), cur(rows), next(rows), left(rows), right(rows);
    std::vector<std::vector<std::size_t>> aligned(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const data::ContextIds& c = batch.context[r];
        prev[r] = c.tgt_prev;
        cur[r] = c.tgt;
        next[r] = c.tgt_next;
        left[r] = c.src_left;
        right[r] = c.src_right;
        aligned[r] = c.src_aligned;
    }
    const Tensor& table = p(word_table_);
    return ad::concat({ad::embedding_lookup(table, prev), ad::embedding_lookup(table, cur),
                       ad::embedding_lookup(table, next), ad::embedding_lookup(table, left),
                       ad::embedding_mean(table, aligned), ad::embedding_lookup(table, right)},
                      1);
}

Tensor CeqeModel::conv_encode(const Tensor& x, std::size_t seq_len) const {
    if (!config_.use_conv) {
        fail(ErrorKind::Config, "conv_encode called with the convolution disabled");
    }
    std::vector<Tensor> outputs;
    outputs.reserve(conv_.size());
    for (std::size_t i = 0; i < conv_.size(); ++i) {
        outputs.push_back(ad::conv1d_same(x, p(conv_[i].first), p(conv_[i].second), config_.conv_widths[i], seq_len));
    }
    return ad::concat(outputs, 1);
}

Tensor CeqeModel::fuse_pos(const Tensor& x, const data::Batch& batch, bool training, Rng& rng) const {
    if (!config_.use_pos) {
        fail(ErrorKind::Config, "fuse_pos called with POS embeddings disabled");
    }
    const std::size_t rows = batch.rows();
    std::vector<std::size_t> tgt(rows);
    std::vector<std::vector<std::size_t>> src(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        tgt[r] = batch.pos[r].tgt;
        src[r] = batch.pos[r].src_aligned;
    }
    const Tensor& table = p(pos_table_);
    Tensor pos = ad::concat({ad::embedding_lookup(table, tgt), ad::embedding_mean(table, src)}, 1);
    pos = ad::dropout(pos, config_.dropout, training, rng);
    return ad::concat({x, pos}, 1);
}

Tensor CeqeModel::bigru_layer(const Tensor& x, const data::Batch& batch, const GruParams& fwd, const GruParams& bwd,
                              std::size_t hidden) const {
    const std::size_t B = batch.size, T = batch.max_len;
    const std::size_t H = hidden;

    auto run = [&](const GruParams& g, bool reverse) {
        Tensor projected = ad::affine(x, p(g.w), p(g.b)); // [B*T x 3H]
        Tensor h = Tensor::zeros({B, H});
        std::vector<Tensor> steps(T);
        std::vector<std::size_t> rows(B);
        std::vector<std::uint8_t> mask(B);
        for (std::size_t k = 0; k < T; ++k) {
            const std::size_t t = reverse ? T - 1 - k : k;
            for (std::size_t b = 0; b < B; ++b) {
                rows[b] = b * T + t;
                mask[b] = batch.mask[b * T + t];
            }
            Tensor xt = ad::gather_rows(projected, rows);
            Tensor zr = ad::sigmoid(ad::add(ad::slice_cols(xt, 0, 2 * H), ad::matmul(h, p(g.u_zr))));
            Tensor z = ad::slice_cols(zr, 0, H);
            Tensor r = ad::slice_cols(zr, H, 2 * H);
            Tensor cand = ad::tanh_op(ad::add(ad::slice_cols(xt, 2 * H, 3 * H), ad::matmul(ad::mul(r, h), p(g.u_h))));
            h = ad::where_rows(mask, ad::gate_blend(z, h, cand), h);
            steps[t] = h;
        }
        // steps are t-major; reorder rows to b*T + t
        Tensor stacked = ad::concat(steps, 0);
        std::vector<std::size_t> order(B * T);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t t = 0; t < T; ++t) {
                order[b * T + t] = t * B + b;
            }
        }
        return ad::gather_rows(stacked, order);
    };
    return ad::concat({run(fwd, false), run(bwd, true)}, 1);
}

Tensor CeqeModel::feed_forward(const Tensor& x, std::size_t layer) const {
    return ad::relu(ad::affine(x, p(ff_[layer].first), p(ff_[layer].second)));
}

Tensor CeqeModel::rnn_stack(const Tensor& x, const data::Batch& batch, bool training, Rng& rng,
                            std::vector<StageShape>* trace) const {
    auto record = [trace](const char* name, const Tensor& t) {
        if (trace) {
            trace->push_back({name, t.shape()});
        }
    };
    Tensor h = feed_forward(x, 0);
    record("ff1a", h);
    h = feed_forward(h, 1);
    record("ff1b", h);
    h = bigru_layer(h, batch, gru1_fwd_, gru1_bwd_, config_.gru1);
    record("bigru1", h);
    h = ad::layer_norm(h, p(ln1_gain_), p(ln1_shift_), config_.ln_eps);
    record("ln1", h);
    h = ad::dropout(h, config_.dropout, training, rng);
    h = feed_forward(h, 2);
    record("ff2a", h);
    h = feed_forward(h, 3);
    record("ff2b", h);
    h = bigru_layer(h, batch, gru2_fwd_, gru2_bwd_, config_.gru2);
    record("bigru2", h);
    h = ad::layer_norm(h, p(ln2_gain_), p(ln2_shift_), config_.ln_eps);
    record("ln2", h);
    h = ad::dropout(h, config_.dropout, training, rng);
    h = feed_forward(h, 4);
    record("ff3", h);
    h = feed_forward(h, 5);
    record("ff4", h);
    return h;
}

Tensor CeqeModel::output_head(const Tensor& h, const data::Batch& batch, std::vector<StageShape>* trace) const {
    Tensor input = h;
    if (config_.use_features) {
        if (!batch.has_features) {
            fail(ErrorKind::Config, "model expects baseline features but the batch has none");
        }
        input = ad::concat({h, Tensor::constant({batch.rows(), config_.n_features}, batch.features)}, 1);
    }
    if (trace) {
        trace->push_back({"head_input", input.shape()});
    }
    return ad::affine(input, p(out_w_), p(out_b_));
}

ForwardResult CeqeModel::forward(const data::Batch& batch, bool training, Rng& rng, bool trace) const {
    ForwardResult result;
    std::vector<StageShape>* stages = trace ? &result.stages : nullptr;
    auto record = [stages](const char* name, const Tensor& t) {
        if (stages) {
            stages->push_back({name, t.shape()});
        }
    };
    if (batch.size == 0 || batch.max_len == 0) {
        fail(ErrorKind::Contract, "forward() on an empty batch");
    }

    Tensor x = embed_positions(batch);
    record("embed", x);
    x = ad::dropout(x, config_.dropout, training, rng);
    if (config_.use_conv) {
        // padded rows must look like the convolution's zero padding
        x = conv_encode(ad::mask_rows(x, batch.mask), batch.max_len);
        record("conv", x);
        x = ad::dropout(x, config_.dropout, training, rng);
    }
    if (config_.use_pos) {
        x = fuse_pos(x, batch, training, rng);
        record("fuse_pos", x);
    }
    Tensor h = rnn_stack(x, batch, training, rng, stages);
    result.logits = output_head(h, batch, stages);
    record("logits", result.logits);
    return result;
}

std::vector<std::vector<double>> CeqeModel::snapshot() const {
    std::vector<std::vector<double>> out;
    out.reserve(params_.size());
    for (const auto& param : params_) {
        auto v = param.tensor.values();
        out.emplace_back(v.begin(), v.end());
    }
    return out;
}

void CeqeModel::restore(const std::vector<std::vector<double>>& values) {
    if (values.size() != params_.size()) {
        fail(ErrorKind::Contract, "snapshot has " + std::to_string(values.size()) + " parameters, model has " +
                                      std::to_string(params_.size()));
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto dst = params_[i].tensor.mutable_values();
        if (values[i].size() != dst.size()) {
            fail(ErrorKind::Contract, "snapshot size mismatch for " + params_[i].name);
        }
        std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
}

std::vector<data::LabelList> predict(const Tensor& logits, const data::Batch& batch) {
    if (logits.rank() != 2 || logits.dim(0) != batch.rows() || logits.dim(1) != 2) {
        fail(ErrorKind::Dimension, "predict: logits " + ad::shape_str(logits.shape()) + " do not match batch of " +
                                       std::to_string(batch.rows()) + " rows");
    }
    auto v = logits.values();
    std::vector<data::LabelList> out(batch.size);
    for (std::size_t b = 0; b < batch.size; ++b) {
        for (std::size_t t = 0; t < batch.max_len; ++t) {
            const std::size_t r = b * batch.max_len + t;
            if (!batch.mask[r]) {
                continue;
            }
            out[b].push_back(v[2 * r + 1] >= v[2 * r] ? data::Label::Bad : data::Label::Ok);
        }
    }
    return out;
}

} // namespace ceqe::model
