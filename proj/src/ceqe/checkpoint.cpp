// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container, all integers and doubles little-endian:
//
//   "CEQECKPT" u32 version
//   str model-config text, vocab words, vocab POS
//   train state (schedule, best score, RNG, history)
//   u64 count, then per parameter:
//     str name, u64 rank, u64 dims..., u64 adam steps, f64 values/m/v
//   "CEQE_END"
//
// str = u64 byte length + bytes; vocab = u64 count + str per entry.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "ceqe/errors.hpp"
#include "ceqe/trainer.hpp"

namespace ceqe::train {

namespace {

constexpr char kMagic[8] = {'C', 'E', 'Q', 'E', 'C', 'K', 'P', 'T'};
constexpr char kEndMagic[8] = {'C', 'E', 'Q', 'E', '_', 'E', 'N', 'D'};

class Writer {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const char*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
        }
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        bytes(s.data(), s.size());
    }
    void f64s(std::span<const double> values) {
        for (double v : values) {
            f64(v);
        }
    }
    const std::vector<char>& data() const { return buf_; }

private:
    std::vector<char> buf_;
};

class Reader {
public:
    Reader(std::vector<char> data, std::string origin) : buf_(std::move(data)), origin_(std::move(origin)) {}

    void need(std::size_t n, const char* what) {
        if (buf_.size() - pos_ < n) {
            fail(ErrorKind::Checkpoint, origin_ + ": truncated while reading " + what);
        }
    }
    void bytes(void* out, std::size_t n, const char* what) {
        need(n, what);
        std::memcpy(out, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return static_cast<std::uint8_t>(buf_[pos_++]);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
        }
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_++])) << (8 * i);
        }
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::string str(const char* what) {
        const std::uint64_t n = u64(what);
        need(n, what);
        std::string s(buf_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    void f64s(std::span<double> out, const char* what) {
        need(out.size() * 8, what);
        for (double& v : out) {
            v = f64(what);
        }
    }
    bool at_end() const { return pos_ == buf_.size(); }
    const std::string& origin() const { return origin_; }

private:
    std::vector<char> buf_;
    std::size_t pos_ = 0;
    std::string origin_;
};

void write_vocab(Writer& w, const data::Vocabulary& vocab) {
    w.u64(vocab.size());
    for (const auto& tok : vocab.tokens()) {
        w.str(tok);
    }
}

data::Vocabulary read_vocab(Reader& r, const char* what) {
    const std::uint64_t n = r.u64(what);
    std::vector<std::string> tokens;
    for (std::uint64_t i = 0; i < n; ++i) {
        tokens.push_back(r.str(what));
    }
    try {
        return data::Vocabulary::from_tokens(std::move(tokens));
    } catch (const Error& e) {
        fail(ErrorKind::Checkpoint, r.origin() + ": " + what + ": " + e.what());
    }
}

void write_optional(Writer& w, std::optional<double> v) {
    w.u8(v.has_value() ? 1 : 0);
    w.f64(v.value_or(0.0));
}

std::optional<double> read_optional(Reader& r, const char* what) {
    const bool has = r.u8(what) != 0;
    const double v = r.f64(what);
    return has ? std::optional<double>(v) : std::nullopt;
}

std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
    }
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace

void save_checkpoint(const model::CeqeModel& model, const TrainState& state, const std::filesystem::path& path) {
    Writer w;
    w.bytes(kMagic, sizeof(kMagic));
    w.u32(kCheckpointVersion);
    w.str(model.config().to_text());
    write_vocab(w, model.words());
    write_vocab(w, model.pos());

    const LrSchedule& s = state.schedule;
    w.u64(state.epoch);
    w.f64(s.base());
    w.f64(s.decay());
    w.u8(s.against_best() ? 1 : 0);
    w.u64(s.decays());
    write_optional(w, s.previous());
    write_optional(w, s.best());
    w.f64(state.best_f1_multi);
    w.u64(state.best_epoch);
    w.u64(state.epochs_since_best);
    w.u64(state.rng.seed());
    w.u64(state.rng.counter());
    w.str(state.best_checkpoint ? state.best_checkpoint->filename().string() : std::string());
    w.u64(state.history.size());
    for (const EpochRecord& h : state.history) {
        w.u64(h.epoch);
        w.f64(h.train_loss);
        w.f64(h.val_f1_bad);
        w.f64(h.val_f1_ok);
        w.f64(h.val_f1_multi);
        w.f64(h.lr);
        w.f64(h.grad_norm_mean);
        w.f64(h.grad_norm_max);
        w.u64(h.clipped_batches);
        w.f64(h.train_f1_multi);
    }

    w.u64(model.parameters().size());
    for (const auto& param : model.parameters()) {
        w.str(param.name);
        w.u64(param.shape().size());
        for (std::size_t d : param.shape()) {
            w.u64(d);
        }
        w.u64(param.step_count);
        w.f64s(param.tensor.values());
        w.f64s(param.adam_m);
        w.f64s(param.adam_v);
    }
    w.bytes(kEndMagic, sizeof(kEndMagic));

    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            fail(ErrorKind::Io, "cannot write checkpoint " + tmp.string());
        }
        out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
        out.flush();
        if (!out) {
            fail(ErrorKind::Io, "write error on " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Reader r(read_file(path), path.string());
    char magic[8];
    r.bytes(magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        fail(ErrorKind::Checkpoint, path.string() + ": not a CEQE checkpoint");
    }
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        fail(ErrorKind::Checkpoint, path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    model::ModelConfig config;
    try {
        config = model::ModelConfig::from_text(r.str("model config"));
    } catch (const Error& e) {
        fail(ErrorKind::Checkpoint, path.string() + ": model config: " + e.what());
    }
    data::Vocabulary words = read_vocab(r, "word vocabulary");
    data::Vocabulary pos = read_vocab(r, "POS vocabulary");

    TrainState state;
    state.epoch = r.u64("epoch");
    const double base = r.f64("base learning rate");
    const double decay = r.f64("learning rate decay");
    const bool against_best = r.u8("decay mode") != 0;
    const std::uint64_t decays = r.u64("decay count");
    const auto previous = read_optional(r, "previous score");
    const auto best = read_optional(r, "best score");
    state.best_f1_multi = r.f64("best score");
    state.best_epoch = r.u64("best epoch");
    state.epochs_since_best = r.u64("epochs since best");
    const std::uint64_t seed = r.u64("rng seed");
    const std::uint64_t counter = r.u64("rng counter");
    state.rng = Rng(seed, counter);
    if (std::string best_name = r.str("best checkpoint"); !best_name.empty()) {
        state.best_checkpoint = path.parent_path() / best_name;
    }
    const std::uint64_t n_hist = r.u64("history");
    for (std::uint64_t i = 0; i < n_hist; ++i) {
        EpochRecord h;
        h.epoch = r.u64("history");
        h.train_loss = r.f64("history");
        h.val_f1_bad = r.f64("history");
        h.val_f1_ok = r.f64("history");
        h.val_f1_multi = r.f64("history");
        h.lr = r.f64("history");
        h.grad_norm_mean = r.f64("history");
        h.grad_norm_max = r.f64("history");
        h.clipped_batches = r.u64("history");
        h.train_f1_multi = r.f64("history");
        state.history.push_back(h);
    }
    state.schedule = LrSchedule::restore(base, decay, against_best, decays, previous, best);

    model::CeqeModel model(config, std::move(words), std::move(pos));
    const std::uint64_t n_params = r.u64("parameter count");
    std::set<std::string> seen;
    for (std::uint64_t i = 0; i < n_params; ++i) {
        const std::string name = r.str("parameter name");
        const std::uint64_t rank = r.u64("parameter rank");
        ad::Shape shape;
        for (std::uint64_t d = 0; d < rank; ++d) {
            shape.push_back(r.u64("parameter shape"));
        }
        ad::Parameter* target = nullptr;
        for (auto& param : model.parameters()) {
            if (param.name == name) {
                target = &param;
            }
        }
        if (!target) {
            fail(ErrorKind::Checkpoint, path.string() + ": unknown parameter record \"" + name + "\"");
        }
        if (!seen.insert(name).second) {
            fail(ErrorKind::Checkpoint, path.string() + ": duplicate parameter record \"" + name + "\"");
        }
        if (shape != target->shape()) {
            fail(ErrorKind::Checkpoint, path.string() + ": parameter \"" + name + "\" has shape " +
                                            ad::shape_str(shape) + ", config requires " +
                                            ad::shape_str(target->shape()));
        }
        target->step_count = r.u64("adam step count");
        r.f64s(target->tensor.mutable_values(), name.c_str());
        r.f64s(target->adam_m, name.c_str());
        r.f64s(target->adam_v, name.c_str());
    }
    for (const auto& param : model.parameters()) {
        if (!seen.contains(param.name)) {
            fail(ErrorKind::Checkpoint, path.string() + ": missing parameter record \"" + param.name + "\"");
        }
    }
    char end[8];
    r.bytes(end, sizeof(end), "end marker");
    if (std::memcmp(end, kEndMagic, sizeof(kEndMagic)) != 0 || !r.at_end()) {
        fail(ErrorKind::Checkpoint, path.string() + ": corrupt end marker");
    }
    return Checkpoint{std::move(model), std::move(state)};
}

} // namespace ceqe::train
