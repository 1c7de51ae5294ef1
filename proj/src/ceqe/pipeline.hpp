// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0
//
// Run manifests and the file-level train / predict / sweep pipelines shared
// by the C API and the tests.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ceqe/data.hpp"
#include "ceqe/model.hpp"
#include "ceqe/trainer.hpp"

namespace ceqe::pipeline {

inline constexpr const char* kVersion = "0.3.0";

struct RunManifest {
    data::CorpusPaths train;
    data::CorpusPaths valid;
    std::filesystem::path out;
    std::optional<std::filesystem::path> resume;
    train::TrainConfig recipe;
    model::ModelConfig model;

    /// Throws a Config error for unknown keys or unparsable values.
    void set(const std::string& key, const std::string& value);
    std::optional<std::string> get(const std::string& key) const;

    /// Every key in a fixed order, one "key=value" per line.
    std::string to_text() const;
    static RunManifest from_text(const std::string& text);
    static RunManifest load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

using LogFn = std::function<void(const std::string&)>;

struct TrainOutcome {
    train::TrainState state;
    model::ModelConfig effective_model; // after forcing off absent inputs
};

/// Assembles both splits, builds vocabularies from the training split,
/// initializes (or resumes) and fits. Writes best.ckpt, last.ckpt,
/// manifest.txt and epochs.tsv into `manifest.out`.
TrainOutcome run_training(const RunManifest& manifest, const LogFn& log = {},
                          const train::EpochCallback& on_epoch = {});

struct SweepRow {
    double rate;
    std::size_t epoch;
    double train_f1_multi;
    double val_f1_multi;
};

/// One training run per rate under <out>/dropout-<rate>; rows are appended
/// to <out>/sweep.tsv as epochs finish. Throws the first failure after all
/// rates have been attempted.
std::vector<SweepRow> run_dropout_sweep(const RunManifest& manifest, const std::vector<double>& rates,
                                        const LogFn& log = {});

/// Loads the inputs a model needs; absent optional files must not be
/// required by the model's configuration.
data::DatasetSplit load_for_model(const model::ModelConfig& config, const data::CorpusPaths& paths);

std::string format_number(double value);

} // namespace ceqe::pipeline
