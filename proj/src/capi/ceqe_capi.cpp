// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#include "ceqe/ceqe.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "ceqe/errors.hpp"
#include "ceqe/metrics.hpp"
#include "ceqe/pipeline.hpp"
#include "ceqe/trainer.hpp"

struct ceqe_run {
    ceqe::pipeline::RunManifest manifest;
};

struct ceqe_model {
    ceqe::model::CeqeModel model;
    ceqe::train::TrainState state;
};

namespace {

thread_local std::string g_last_error;

ceqe_status status_of(ceqe::ErrorKind kind) {
    using ceqe::ErrorKind;
    switch (kind) {
    case ErrorKind::Dimension: return CEQE_ERR_DIMENSION;
    case ErrorKind::Index: return CEQE_ERR_INDEX;
    case ErrorKind::Config: return CEQE_ERR_CONFIG;
    case ErrorKind::Contract: return CEQE_ERR_CONTRACT;
    case ErrorKind::Io: return CEQE_ERR_IO;
    case ErrorKind::Parse: return CEQE_ERR_PARSE;
    case ErrorKind::Validation: return CEQE_ERR_VALIDATION;
    case ErrorKind::Assembly: return CEQE_ERR_ASSEMBLY;
    case ErrorKind::Evaluation: return CEQE_ERR_EVALUATION;
    case ErrorKind::Numeric: return CEQE_ERR_NUMERIC;
    case ErrorKind::Checkpoint: return CEQE_ERR_CHECKPOINT;
    }
    return CEQE_ERR_INTERNAL;
}

ceqe_status set_error(ceqe_status status, std::string message) {
    g_last_error = std::move(message);
    return status;
}

template <typename F>
ceqe_status guarded(F&& body) {
    g_last_error.clear();
    try {
        body();
        return CEQE_OK;
    } catch (const ceqe::Error& e) {
        return set_error(status_of(e.kind()), e.what());
    } catch (const std::bad_alloc&) {
        return set_error(CEQE_ERR_INTERNAL, "out of memory");
    } catch (const std::filesystem::filesystem_error& e) {
        return set_error(CEQE_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return set_error(CEQE_ERR_INTERNAL, e.what());
    }
}

ceqe_status copy_out(const std::string& text, char* buf, size_t cap, size_t* needed) {
    if (needed) {
        *needed = text.size();
    }
    if (buf && cap > 0) {
        const size_t n = text.size() < cap - 1 ? text.size() : cap - 1;
        std::memcpy(buf, text.data(), n);
        buf[n] = '\0';
        if (n < text.size()) {
            return set_error(CEQE_ERR_ARGUMENT, "buffer too small");
        }
    }
    return CEQE_OK;
}

ceqe::pipeline::LogFn wrap_log(ceqe_log_fn log, void* user) {
    if (!log) {
        return {};
    }
    return [log, user](const std::string& line) { log(line.c_str(), user); };
}

std::optional<std::filesystem::path> opt_path(const char* p) {
    return p && *p ? std::optional<std::filesystem::path>(p) : std::nullopt;
}

} // namespace

extern "C" {

const char* ceqe_version(void) {
    return ceqe::pipeline::kVersion;
}

const char* ceqe_last_error(void) {
    return g_last_error.c_str();
}

const char* ceqe_status_name(ceqe_status status) {
    switch (status) {
    case CEQE_OK: return "ok";
    case CEQE_ERR_DIMENSION: return "dimension error";
    case CEQE_ERR_INDEX: return "index error";
    case CEQE_ERR_CONFIG: return "configuration error";
    case CEQE_ERR_CONTRACT: return "contract error";
    case CEQE_ERR_IO: return "I/O error";
    case CEQE_ERR_PARSE: return "parse error";
    case CEQE_ERR_VALIDATION: return "validation error";
    case CEQE_ERR_ASSEMBLY: return "assembly error";
    case CEQE_ERR_EVALUATION: return "evaluation error";
    case CEQE_ERR_NUMERIC: return "numeric error";
    case CEQE_ERR_CHECKPOINT: return "checkpoint error";
    case CEQE_ERR_ARGUMENT: return "argument error";
    case CEQE_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

ceqe_status ceqe_run_create(ceqe_run** out) {
    if (!out) {
        return set_error(CEQE_ERR_ARGUMENT, "null output handle");
    }
    return guarded([&] { *out = new ceqe_run{}; });
}

void ceqe_run_free(ceqe_run* run) {
    delete run;
}

ceqe_status ceqe_run_set(ceqe_run* run, const char* key, const char* value) {
    if (!run || !key || !value) {
        return set_error(CEQE_ERR_ARGUMENT, "null argument to ceqe_run_set");
    }
    return guarded([&] { run->manifest.set(key, value); });
}

ceqe_status ceqe_run_get(const ceqe_run* run, const char* key, char* buf, size_t cap, size_t* needed) {
    if (!run || !key) {
        return set_error(CEQE_ERR_ARGUMENT, "null argument to ceqe_run_get");
    }
    std::string value;
    ceqe_status status = guarded([&] {
        auto v = run->manifest.get(key);
        if (!v) {
            ceqe::fail(ceqe::ErrorKind::Config, std::string("unknown manifest key \"") + key + "\"");
        }
        value = *v;
    });
    return status == CEQE_OK ? copy_out(value, buf, cap, needed) : status;
}

ceqe_status ceqe_run_load(const char* path, ceqe_run** out) {
    if (!path || !out) {
        return set_error(CEQE_ERR_ARGUMENT, "null argument to ceqe_run_load");
    }
    return guarded([&] { *out = new ceqe_run{ceqe::pipeline::RunManifest::load(path)}; });
}

ceqe_status ceqe_run_save(const ceqe_run* run, const char* path) {
    if (!run || !path) {
        return set_error(CEQE_ERR_ARGUMENT, "null argument to ceqe_run_save");
    }
    return guarded([&] { run->manifest.save(path); });
}

ceqe_status ceqe_train(ceqe_run* run, ceqe_log_fn log, void* user) {
    if (!run) {
        return set_error(CEQE_ERR_ARGUMENT, "null run handle");
    }
    return guarded([&] { ceqe::pipeline::run_training(run->manifest, wrap_log(log, user)); });
}

ceqe_status ceqe_sweep_dropout(ceqe_run* run, const double* rates, size_t n_rates, ceqe_log_fn log, void* user) {
    if (!run || (!rates && n_rates > 0)) {
        return set_error(CEQE_ERR_ARGUMENT, "null argument to ceqe_sweep_dropout");
    }
    return guarded([&] {
        ceqe::pipeline::run_dropout_sweep(run->manifest, std::vector<double>(rates, rates + n_rates),
                                          wrap_log(log, user));
    });
}

ceqe_status ceqe_model_load(const char* path, ceqe_model** out) {
    if (!path || !out) {
        return set_error(CEQE_ERR_ARGUMENT, "null argument to ceqe_model_load");
    }
    return guarded([&] {
        auto ckpt = ceqe::train::load_checkpoint(path);
        *out = new ceqe_model{std::move(ckpt.model), std::move(ckpt.state)};
    });
}

void ceqe_model_free(ceqe_model* model) {
    delete model;
}

ceqe_status ceqe_model_info_get(const ceqe_model* model, ceqe_model_info* out) {
    if (!model || !out) {
        return set_error(CEQE_ERR_ARGUMENT, "null argument to ceqe_model_info_get");
    }
    const auto& cfg = model->model.config();
    out->parameter_count = model->model.parameter_count();
    out->word_vocab_size = model->model.words().size();
    out->pos_vocab_size = model->model.pos().size();
    out->use_conv = cfg.use_conv;
    out->use_pos = cfg.use_pos;
    out->use_features = cfg.use_features;
    out->epochs_trained = model->state.epoch;
    out->best_f1_multi = model->state.best_f1_multi;
    return CEQE_OK;
}

ceqe_status ceqe_predict_files(const ceqe_model* model, const ceqe_corpus* corpus, const char* out_tags) {
    if (!model || !corpus || !out_tags || !corpus->src || !corpus->mt || !corpus->align) {
        return set_error(CEQE_ERR_ARGUMENT, "ceqe_predict_files needs a model, src, mt, align and an output path");
    }
    return guarded([&] {
        ceqe::data::CorpusPaths paths;
        paths.src = corpus->src;
        paths.mt = corpus->mt;
        paths.align = corpus->align;
        paths.src_pos = opt_path(corpus->src_pos);
        paths.mt_pos = opt_path(corpus->mt_pos);
        paths.features = opt_path(corpus->features);
        const auto split = ceqe::pipeline::load_for_model(model->model.config(), paths);
        ceqe::data::write_tags_file(out_tags, ceqe::train::predict_split(model->model, split));
    });
}

ceqe_status ceqe_evaluate_files(const char* gold_tags, const char* pred_tags, ceqe_report* out) {
    if (!gold_tags || !pred_tags || !out) {
        return set_error(CEQE_ERR_ARGUMENT, "null argument to ceqe_evaluate_files");
    }
    return guarded([&] {
        const auto r = ceqe::metrics::evaluate_files(gold_tags, pred_tags);
        *out = ceqe_report{r.ok.tp, r.ok.fp, r.ok.fn, r.bad.tp, r.bad.fp, r.bad.fn,
                           r.n_tokens, r.f1_ok, r.f1_bad, r.f1_multi()};
    });
}

ceqe_status ceqe_format_report(const ceqe_report* report, char* buf, size_t cap, size_t* needed) {
    if (!report) {
        return set_error(CEQE_ERR_ARGUMENT, "null report");
    }
    ceqe::metrics::EvalReport r;
    r.ok = {report->tp_ok, report->fp_ok, report->fn_ok};
    r.bad = {report->tp_bad, report->fp_bad, report->fn_bad};
    r.n_tokens = report->n_tokens;
    r.f1_ok = report->f1_ok;
    r.f1_bad = report->f1_bad;
    return copy_out(ceqe::metrics::format_report(r), buf, cap, needed);
}

void ceqe_synth_defaults(ceqe_synth_options* out) {
    if (!out) {
        return;
    }
    const ceqe::data::SynthOptions d;
    *out = ceqe_synth_options{d.n_sentences, d.vocab_size, d.error_rate, 42, d.min_len, d.max_len, d.confusions};
}

ceqe_status ceqe_synth_write(const ceqe_synth_options* options, const char* out_dir, const char* prefix) {
    if (!options || !out_dir || !prefix) {
        return set_error(CEQE_ERR_ARGUMENT, "null argument to ceqe_synth_write");
    }
    return guarded([&] {
        ceqe::data::SynthOptions opts;
        opts.n_sentences = options->n_sentences;
        opts.vocab_size = options->vocab_size;
        opts.error_rate = options->error_rate;
        opts.min_len = options->min_len;
        opts.max_len = options->max_len;
        opts.confusions = options->confusions;
        ceqe::Rng rng(options->seed);
        const auto split = ceqe::data::synth_dataset(opts, rng);
        std::filesystem::create_directories(out_dir);
        ceqe::data::write_dataset(split, ceqe::data::corpus_paths(out_dir, prefix));
    });
}

} // extern "C"
