// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ceqe/data.hpp"

namespace ceqe::metrics {

struct ClassCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

/// Harmonic mean of precision and recall; 0 whenever a denominator is 0.
double f1_class(std::size_t tp, std::size_t fp, std::size_t fn);

struct EvalReport {
    ClassCounts ok;
    ClassCounts bad;
    std::size_t n_tokens = 0;
    double f1_ok = 0.0;
    double f1_bad = 0.0;

    /// Product of the per-class F1 scores. Never stored.
    double f1_multi() const { return f1_ok * f1_bad; }

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport report_from_counts(const ClassCounts& ok, const ClassCounts& bad);

/// Micro-aggregated counts over all tokens of all sentences.
EvalReport evaluate(const std::vector<data::LabelList>& gold, const std::vector<data::LabelList>& pred);

EvalReport evaluate_files(const std::filesystem::path& gold, const std::filesystem::path& pred);

/// Rounds half-up to four decimals.
std::string format_score(double value);

/// "F1-BAD: x.xxxx\nF1-OK: x.xxxx\nF1-Multi: x.xxxx\nTokens: n\n"
std::string format_report(const EvalReport& report);

} // namespace ceqe::metrics
