// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#include "ceqe/trainer.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <sstream>

#include "ceqe/errors.hpp"
#include "ceqe/optim.hpp"

namespace ceqe::train {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) {
        fail(ErrorKind::Config, "learning rate must be positive");
    }
    if (!(lr_decay > 0.0 && lr_decay < 1.0)) {
        fail(ErrorKind::Config, "lr_decay must be in (0, 1)");
    }
    if (batch_size < 1) {
        fail(ErrorKind::Config, "batch_size must be >= 1");
    }
    if (!(clip_norm > 0.0)) {
        fail(ErrorKind::Config, "clip_norm must be positive");
    }
}

double LrSchedule::current() const {
    return base_ * std::pow(decay_, static_cast<double>(decays_));
}

bool LrSchedule::observe(double f1_multi) {
    const std::optional<double> reference = against_best_ ? best_ : previous_;
    const bool decayed = reference.has_value() && f1_multi < *reference;
    if (decayed) {
        ++decays_;
    }
    previous_ = f1_multi;
    if (!best_ || f1_multi > *best_) {
        best_ = f1_multi;
    }
    return decayed;
}

LrSchedule LrSchedule::restore(double base, double decay, bool against_best, std::size_t decays,
                               std::optional<double> previous, std::optional<double> best) {
    LrSchedule s(base, decay, against_best);
    s.decays_ = decays;
    s.previous_ = previous;
    s.best_ = best;
    return s;
}

TrainState initial_state(const TrainConfig& config) {
    TrainState state;
    state.schedule = LrSchedule(config.lr, config.lr_decay, config.decay_against_best);
    state.rng = Rng(config.seed);
    state.best_checkpoint = config.best_checkpoint;
    return state;
}

EpochStats train_epoch(model::CeqeModel& model, const std::vector<data::Batch>& batches, const TrainConfig& config,
                       double lr, Rng& rng) {
    if (batches.empty()) {
        fail(ErrorKind::Contract, "train_epoch needs at least one batch");
    }
    auto params = model.parameter_ptrs();
    EpochStats stats;
    double weighted = 0.0;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const data::Batch& batch = batches[i];
        if (!batch.has_labels) {
            fail(ErrorKind::Contract, "training batch " + std::to_string(i) + " has no labels");
        }
        auto out = model.forward(batch, true, rng);
        auto xent = ad::softmax_xent(out.logits, batch.labels, batch.mask);
        const double loss = xent.loss.item();
        double norm = std::numeric_limits<double>::quiet_NaN();
        if (std::isfinite(loss)) {
            ad::backward(xent.loss);
            norm = ad::clip_global_norm(params, config.clip_norm);
        }
        if (!std::isfinite(loss) || !std::isfinite(norm)) {
            ad::zero_grads(params);
            std::ostringstream msg;
            msg << "non-finite training loss at batch " << i << " (loss " << loss << ", grad norm " << norm << ")";
            fail(ErrorKind::Numeric, msg.str());
        }
        stats.pre_clip_norms.push_back(norm);
        stats.post_clip_norms.push_back(ad::global_grad_norm(params));
        ad::adam_step(params, lr);
        weighted += loss * static_cast<double>(xent.n_tokens);
        stats.tokens += xent.n_tokens;
    }
    stats.mean_loss = weighted / static_cast<double>(stats.tokens);
    return stats;
}

metrics::EvalReport validate(const model::CeqeModel& model, const std::vector<data::Batch>& batches) {
    Rng unused(0);
    std::vector<data::LabelList> gold, pred;
    for (const data::Batch& batch : batches) {
        if (!batch.has_labels) {
            fail(ErrorKind::Contract, "validation data needs labels");
        }
        auto out = model.forward(batch, false, unused);
        for (auto& labels : model::predict(out.logits, batch)) {
            pred.push_back(std::move(labels));
        }
        for (std::size_t b = 0; b < batch.size; ++b) {
            data::LabelList g;
            for (std::size_t t = 0; t < batch.lengths[b]; ++t) {
                g.push_back(static_cast<data::Label>(batch.labels[b * batch.max_len + t]));
            }
            gold.push_back(std::move(g));
        }
    }
    return metrics::evaluate(gold, pred);
}

std::vector<data::LabelList> predict_split(const model::CeqeModel& model, const data::DatasetSplit& split,
                                           std::size_t batch_size) {
    auto encoded = data::encode_split(split, model.words(), model.pos());
    auto batches = data::make_batches(encoded, batch_size, nullptr, false);
    Rng unused(0);
    std::vector<data::LabelList> out;
    out.reserve(split.examples.size());
    for (const data::Batch& batch : batches) {
        auto fwd = model.forward(batch, false, unused);
        for (auto& labels : model::predict(fwd.logits, batch)) {
            out.push_back(std::move(labels));
        }
    }
    return out;
}

namespace {

void require_finite(const model::CeqeModel& model, std::size_t epoch) {
    for (const auto& param : model.parameters()) {
        for (double v : param.tensor.values()) {
            if (!std::isfinite(v)) {
                fail(ErrorKind::Numeric,
                     "parameter " + param.name + " became non-finite after epoch " + std::to_string(epoch));
            }
        }
    }
}

} // namespace

TrainState fit(model::CeqeModel& model, const data::DatasetSplit& train, const data::DatasetSplit& validation,
               const TrainConfig& config, std::optional<TrainState> resume, const EpochCallback& on_epoch) {
    config.validate();
    if (!train.has_labels() || !validation.has_labels()) {
        fail(ErrorKind::Contract, "training and validation splits must carry labels");
    }
    if (model.config().use_features && (!train.has_features() || !validation.has_features())) {
        fail(ErrorKind::Config, "model uses baseline features but the data has none");
    }
    const auto train_enc = data::encode_split(train, model.words(), model.pos());
    const auto valid_batches =
        data::make_batches(data::encode_split(validation, model.words(), model.pos()), config.batch_size, nullptr, false);
    std::vector<data::Batch> train_eval_batches;
    if (config.track_train_f1) {
        train_eval_batches = data::make_batches(train_enc, config.batch_size, nullptr, false);
    }

    TrainState state = resume ? std::move(*resume) : initial_state(config);
    state.best_checkpoint = config.best_checkpoint;
    std::optional<std::vector<std::vector<double>>> best_params;
    if (resume && state.best_epoch > 0) {
        if (config.best_checkpoint && std::filesystem::exists(*config.best_checkpoint)) {
            best_params = load_checkpoint(*config.best_checkpoint).model.snapshot();
        }
    }

    while (state.epoch < config.max_epochs) {
        if (config.patience > 0 && state.epochs_since_best >= config.patience) {
            break;
        }
        auto batches = data::make_batches(train_enc, config.batch_size, &state.rng, true);
        EpochRecord record;
        record.epoch = state.epoch + 1;
        record.lr = state.schedule.current();
        EpochStats stats = train_epoch(model, batches, config, record.lr, state.rng);
        require_finite(model, record.epoch);
        record.train_loss = stats.mean_loss;
        for (std::size_t i = 0; i < stats.pre_clip_norms.size(); ++i) {
            record.grad_norm_mean += stats.pre_clip_norms[i];
            record.grad_norm_max = std::max(record.grad_norm_max, stats.pre_clip_norms[i]);
            record.clipped_batches += stats.pre_clip_norms[i] > config.clip_norm ? 1 : 0;
        }
        record.grad_norm_mean /= static_cast<double>(stats.pre_clip_norms.size());

        const metrics::EvalReport report = validate(model, valid_batches);
        record.val_f1_bad = report.f1_bad;
        record.val_f1_ok = report.f1_ok;
        record.val_f1_multi = report.f1_multi();
        if (config.track_train_f1) {
            record.train_f1_multi = validate(model, train_eval_batches).f1_multi();
        }
        state.schedule.observe(record.val_f1_multi);
        state.history.push_back(record);
        state.epoch = record.epoch;

        if (record.val_f1_multi > state.best_f1_multi) {
            state.best_f1_multi = record.val_f1_multi;
            state.best_epoch = record.epoch;
            state.epochs_since_best = 0;
            best_params = model.snapshot();
            if (config.best_checkpoint) {
                save_checkpoint(model, state, *config.best_checkpoint);
            }
        } else {
            ++state.epochs_since_best;
        }
        if (config.last_checkpoint) {
            save_checkpoint(model, state, *config.last_checkpoint);
        }
        if (on_epoch) {
            on_epoch(record);
        }
    }
    if (best_params) {
        model.restore(*best_params);
    }
    return state;
}

bool operator==(const EpochRecord& a, const EpochRecord& b) {
    auto same = [](double x, double y) { return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y); };
    return a.epoch == b.epoch && same(a.train_loss, b.train_loss) && same(a.val_f1_bad, b.val_f1_bad) &&
           same(a.val_f1_ok, b.val_f1_ok) && same(a.val_f1_multi, b.val_f1_multi) && same(a.lr, b.lr) &&
           same(a.grad_norm_mean, b.grad_norm_mean) && same(a.grad_norm_max, b.grad_norm_max) &&
           a.clipped_batches == b.clipped_batches && same(a.train_f1_multi, b.train_f1_multi);
}

std::string format_epoch_line(const EpochRecord& r) {
    auto num = [](double v) {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, ptr);
    };
    return std::to_string(r.epoch) + '\t' + num(r.train_loss) + '\t' + num(r.val_f1_bad) + '\t' + num(r.val_f1_ok) +
           '\t' + num(r.val_f1_multi) + '\t' + num(r.lr);
}

} // namespace ceqe::train
