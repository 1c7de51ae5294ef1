/* Copyright (c) 2026, CEQE toolkit developers
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the CEQE word-level quality-estimation toolkit.
 *
 * Every fallible call returns a ceqe_status; on failure the message is
 * available from ceqe_last_error() on the same thread until the next call.
 * Handles are opaque and owned by the caller once created.
 */

#ifndef CEQE_CEQE_H
#define CEQE_CEQE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CEQE_BUILDING_LIBRARY)
#    define CEQE_API __declspec(dllexport)
#  else
#    define CEQE_API __declspec(dllimport)
#  endif
#else
#  define CEQE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ceqe_status {
    CEQE_OK = 0,
    CEQE_ERR_DIMENSION = 1,
    CEQE_ERR_INDEX = 2,
    CEQE_ERR_CONFIG = 3,
    CEQE_ERR_CONTRACT = 4,
    CEQE_ERR_IO = 5,
    CEQE_ERR_PARSE = 6,
    CEQE_ERR_VALIDATION = 7,
    CEQE_ERR_ASSEMBLY = 8,
    CEQE_ERR_EVALUATION = 9,
    CEQE_ERR_NUMERIC = 10, /* non-finite loss, gradient or parameter */
    CEQE_ERR_CHECKPOINT = 11,
    CEQE_ERR_ARGUMENT = 12, /* null handle, unknown key, bad value */
    CEQE_ERR_INTERNAL = 13
} ceqe_status;

typedef struct ceqe_run ceqe_run;
typedef struct ceqe_model ceqe_model;

/* Receives progress lines (epoch log rows and notices). */
typedef void (*ceqe_log_fn)(const char* line, void* user);

CEQE_API const char* ceqe_version(void);
CEQE_API const char* ceqe_last_error(void);
CEQE_API const char* ceqe_status_name(ceqe_status status);

/* ---- run manifest -------------------------------------------------------
 * A key=value document holding data paths, the output directory, the
 * training recipe and the model configuration. Keys:
 *   train.{src,mt,align,tags,src_pos,mt_pos,features}
 *   valid.{src,mt,align,tags,src_pos,mt_pos,features}
 *   out, resume, seed, epochs, patience, lr, lr_decay, batch_size,
 *   clip_norm, decay_against_best
 *   model.{word_dim,pos_dim,conv_widths,n_filters,ff1,gru1,ff2,gru2,ff3,
 *          ff4,n_features,dropout,ln_eps,use_conv,use_pos,use_features}
 * An empty value clears an optional path. */
CEQE_API ceqe_status ceqe_run_create(ceqe_run** out);
CEQE_API void ceqe_run_free(ceqe_run* run);
CEQE_API ceqe_status ceqe_run_set(ceqe_run* run, const char* key, const char* value);
/* Copies the value (NUL-terminated) into buf; *needed receives the full
 * length excluding the terminator. Unset keys yield an empty string. */
CEQE_API ceqe_status ceqe_run_get(const ceqe_run* run, const char* key, char* buf, size_t cap, size_t* needed);
CEQE_API ceqe_status ceqe_run_load(const char* path, ceqe_run** out);
CEQE_API ceqe_status ceqe_run_save(const ceqe_run* run, const char* path);

/* Trains per the manifest. Writes <out>/best.ckpt, <out>/last.ckpt,
 * <out>/manifest.txt and <out>/epochs.tsv. Missing POS or feature files
 * switch the corresponding model inputs off with a notice. */
CEQE_API ceqe_status ceqe_train(ceqe_run* run, ceqe_log_fn log, void* user);

/* Trains one model per dropout rate into <out>/dropout-<rate>/ with the
 * same data and seed, tracking training F1-Multi, and writes
 * <out>/sweep.tsv (rate, epoch, train_f1_multi, val_f1_multi). Rows of
 * completed runs are kept when a later run fails. */
CEQE_API ceqe_status ceqe_sweep_dropout(ceqe_run* run, const double* rates, size_t n_rates, ceqe_log_fn log,
                                        void* user);

/* ---- models ------------------------------------------------------------ */
typedef struct ceqe_model_info {
    size_t parameter_count;
    size_t word_vocab_size;
    size_t pos_vocab_size;
    int use_conv;
    int use_pos;
    int use_features;
    size_t epochs_trained;
    double best_f1_multi;
} ceqe_model_info;

CEQE_API ceqe_status ceqe_model_load(const char* path, ceqe_model** out);
CEQE_API void ceqe_model_free(ceqe_model* model);
CEQE_API ceqe_status ceqe_model_info_get(const ceqe_model* model, ceqe_model_info* out);

/* Input files for prediction; NULL marks an absent optional file. */
typedef struct ceqe_corpus {
    const char* src;
    const char* mt;
    const char* align;
    const char* src_pos;
    const char* mt_pos;
    const char* features;
} ceqe_corpus;

/* Writes one OK/BAD line per MT sentence to out_tags. */
CEQE_API ceqe_status ceqe_predict_files(const ceqe_model* model, const ceqe_corpus* corpus, const char* out_tags);

/* ---- metrics ----------------------------------------------------------- */
typedef struct ceqe_report {
    size_t tp_ok, fp_ok, fn_ok;
    size_t tp_bad, fp_bad, fn_bad;
    size_t n_tokens;
    double f1_ok;
    double f1_bad;
    double f1_multi;
} ceqe_report;

CEQE_API ceqe_status ceqe_evaluate_files(const char* gold_tags, const char* pred_tags, ceqe_report* out);
/* Four-line report with scores rounded half-up to four decimals. */
CEQE_API ceqe_status ceqe_format_report(const ceqe_report* report, char* buf, size_t cap, size_t* needed);

/* ---- synthetic data ---------------------------------------------------- */
typedef struct ceqe_synth_options {
    size_t n_sentences;
    size_t vocab_size;
    double error_rate;
    uint64_t seed;
    size_t min_len;
    size_t max_len;
    size_t confusions; /* wrong translations per source token; 0 = any token */
} ceqe_synth_options;

CEQE_API void ceqe_synth_defaults(ceqe_synth_options* out);
/* Writes <out_dir>/<prefix>.{src,mt,align,src_pos,mt_pos,tags,features}. */
CEQE_API ceqe_status ceqe_synth_write(const ceqe_synth_options* options, const char* out_dir, const char* prefix);

#ifdef __cplusplus
}
#endif

#endif /* CEQE_CEQE_H */
