// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ceqe/data.hpp"
#include "ceqe/metrics.hpp"
#include "ceqe/model.hpp"
#include "ceqe/rng.hpp"

namespace ceqe::train {

struct TrainConfig {
    double lr = 0.001;
    double lr_decay = 0.75;
    std::size_t batch_size = 8;
    double clip_norm = 5.0;
    std::size_t max_epochs = 50;
    /// Epochs without a new best validation score before stopping; 0 disables.
    std::size_t patience = 10;
    std::uint64_t seed = 42;
    /// Compare against the best score so far instead of the previous epoch.
    bool decay_against_best = false;
    /// Also score the training set each epoch (used by the dropout sweep).
    bool track_train_f1 = false;
    std::optional<std::filesystem::path> best_checkpoint;
    std::optional<std::filesystem::path> last_checkpoint;

    void validate() const;
};

/// lr = base * decay^k, where k counts the validation decreases seen so far.
class LrSchedule {
public:
    LrSchedule(double base = 0.001, double decay = 0.75, bool against_best = false)
        : base_(base), decay_(decay), against_best_(against_best) {}

    double current() const;
    /// Feeds one validation F1-Multi; returns true when it triggered a decay.
    bool observe(double f1_multi);

    double base() const noexcept { return base_; }
    double decay() const noexcept { return decay_; }
    bool against_best() const noexcept { return against_best_; }
    std::size_t decays() const noexcept { return decays_; }
    std::optional<double> previous() const noexcept { return previous_; }
    std::optional<double> best() const noexcept { return best_; }

    /// Rebuilds a schedule from serialized fields.
    static LrSchedule restore(double base, double decay, bool against_best, std::size_t decays,
                              std::optional<double> previous, std::optional<double> best);

private:
    double base_;
    double decay_;
    bool against_best_;
    std::size_t decays_ = 0;
    std::optional<double> previous_;
    std::optional<double> best_;
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_f1_bad = 0.0;
    double val_f1_ok = 0.0;
    double val_f1_multi = 0.0;
    double lr = 0.0; // rate used during this epoch
    double grad_norm_mean = 0.0;
    double grad_norm_max = 0.0;
    std::size_t clipped_batches = 0;
    double train_f1_multi = std::numeric_limits<double>::quiet_NaN(); // NaN when not tracked

    /// Field-wise bit equality, so untracked (NaN) entries compare equal.
    friend bool operator==(const EpochRecord& a, const EpochRecord& b);
};

struct TrainState {
    std::size_t epoch = 0; // completed epochs
    LrSchedule schedule;
    double best_f1_multi = -1.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_since_best = 0;
    Rng rng;
    std::optional<std::filesystem::path> best_checkpoint;
    std::vector<EpochRecord> history;
};

TrainState initial_state(const TrainConfig& config);

struct EpochStats {
    double mean_loss = 0.0; // token-weighted
    std::size_t tokens = 0;
    std::vector<double> pre_clip_norms;
    std::vector<double> post_clip_norms;
};

/// forward -> masked loss -> backward -> clip -> Adam, once per batch.
EpochStats train_epoch(model::CeqeModel& model, const std::vector<data::Batch>& batches, const TrainConfig& config,
                       double lr, Rng& rng);

/// Inference-mode scoring of labelled batches.
metrics::EvalReport validate(const model::CeqeModel& model, const std::vector<data::Batch>& batches);

/// Predicted labels per sentence in corpus order.
std::vector<data::LabelList> predict_split(const model::CeqeModel& model, const data::DatasetSplit& split,
                                           std::size_t batch_size = 8);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full recipe. Starts from `resume` when given (continuing its epoch count,
/// schedule, RNG and Adam state) and restores the best-scoring parameters
/// before returning.
TrainState fit(model::CeqeModel& model, const data::DatasetSplit& train, const data::DatasetSplit& validation,
               const TrainConfig& config, std::optional<TrainState> resume = std::nullopt,
               const EpochCallback& on_epoch = {});

/// Tab-separated: epoch, train_loss, val_f1_bad, val_f1_ok, val_f1_multi, lr.
std::string format_epoch_line(const EpochRecord& record);

// ------------------------------------------------------------- checkpoint

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const model::CeqeModel& model, const TrainState& state, const std::filesystem::path& path);

struct Checkpoint {
    model::CeqeModel model;
    TrainState state;
};

/// Validates the header and every parameter record against the stored
/// config; nothing is returned unless the whole file parses.
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace ceqe::train
