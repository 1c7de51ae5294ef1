// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#include "ceqe/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "ceqe/errors.hpp"

namespace ceqe::metrics {

double f1_class(std::size_t tp, std::size_t fp, std::size_t fn) {
    if (tp == 0) {
        return 0.0;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

EvalReport report_from_counts(const ClassCounts& ok, const ClassCounts& bad) {
    EvalReport r;
    r.ok = ok;
    r.bad = bad;
    r.n_tokens = ok.tp + ok.fn + bad.tp + bad.fn;
    r.f1_ok = f1_class(ok.tp, ok.fp, ok.fn);
    r.f1_bad = f1_class(bad.tp, bad.fp, bad.fn);
    return r;
}

EvalReport evaluate(const std::vector<data::LabelList>& gold, const std::vector<data::LabelList>& pred) {
    if (gold.size() != pred.size()) {
        fail(ErrorKind::Evaluation, "gold has " + std::to_string(gold.size()) + " sentences, prediction has " +
                                        std::to_string(pred.size()));
    }
    ClassCounts ok, bad;
    for (std::size_t s = 0; s < gold.size(); ++s) {
        if (gold[s].size() != pred[s].size()) {
            fail(ErrorKind::Evaluation, "sentence " + std::to_string(s) + ": gold has " +
                                            std::to_string(gold[s].size()) + " tags, prediction has " +
                                            std::to_string(pred[s].size()));
        }
        for (std::size_t i = 0; i < gold[s].size(); ++i) {
            const bool gold_bad = gold[s][i] == data::Label::Bad;
            const bool pred_bad = pred[s][i] == data::Label::Bad;
            if (gold_bad && pred_bad) {
                ++bad.tp;
            } else if (!gold_bad && !pred_bad) {
                ++ok.tp;
            } else if (pred_bad) {
                ++bad.fp;
                ++ok.fn;
            } else {
                ++ok.fp;
                ++bad.fn;
            }
        }
    }
    return report_from_counts(ok, bad);
}

EvalReport evaluate_files(const std::filesystem::path& gold, const std::filesystem::path& pred) {
    auto g = data::parse_tags_file(gold);
    auto p = data::parse_tags_file(pred);
    try {
        return evaluate(g, p);
    } catch (const Error& e) {
        fail(e.kind(), gold.string() + " vs " + pred.string() + ": " + e.what());
    }
}

std::string format_score(double value) {
    const double rounded = std::floor(value * 10000.0 + 0.5) / 10000.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", rounded);
    return buf;
}

std::string format_report(const EvalReport& report) {
    return "F1-BAD: " + format_score(report.f1_bad) + "\n" + "F1-OK: " + format_score(report.f1_ok) + "\n" +
           "F1-Multi: " + format_score(report.f1_multi()) + "\n" + "Tokens: " + std::to_string(report.n_tokens) +
           "\n";
}

} // namespace ceqe::metrics
