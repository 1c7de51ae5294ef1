// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0
//
// ceqe-cli: train, predict, evaluate, synth, sweep-dropout.
// Exit codes: 0 success, 1 invalid input or usage, 2 non-finite training.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ceqe/ceqe.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumeric = 2;

int report_failure(ceqe_status status) {
    std::cerr << "ceqe-cli: " << ceqe_status_name(status) << ": " << ceqe_last_error() << '\n';
    return status == CEQE_ERR_NUMERIC ? kExitNumeric : kExitInput;
}

void print_line(const char* line, void*) {
    std::cout << line << '\n' << std::flush;
}

struct RunHandle {
    ceqe_run* run = nullptr;
    ~RunHandle() { ceqe_run_free(run); }
};

// Options shared by train and sweep-dropout. Every value is optional at the
// parser level; required keys are checked after merging with --manifest.
struct TrainArgs {
    std::string manifest;
    std::map<std::string, std::string> values; // manifest key -> value
    bool no_conv = false;
    bool no_pos = false;
    bool no_features = false;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--manifest", manifest, "Start from a saved run manifest");
        struct Flag {
            const char* flag;
            const char* key;
            const char* help;
        };
        static const Flag flags[] = {
            {"--src", "train.src", "Training source tokens"},
            {"--mt", "train.mt", "Training MT tokens"},
            {"--align", "train.align", "Training alignments"},
            {"--tags", "train.tags", "Training OK/BAD tags"},
            {"--src-pos", "train.src_pos", "Training source POS tags"},
            {"--mt-pos", "train.mt_pos", "Training MT POS tags"},
            {"--features", "train.features", "Training baseline features (TSV)"},
            {"--valid-src", "valid.src", "Validation source tokens"},
            {"--valid-mt", "valid.mt", "Validation MT tokens"},
            {"--valid-align", "valid.align", "Validation alignments"},
            {"--valid-tags", "valid.tags", "Validation OK/BAD tags"},
            {"--valid-src-pos", "valid.src_pos", "Validation source POS tags"},
            {"--valid-mt-pos", "valid.mt_pos", "Validation MT POS tags"},
            {"--valid-features", "valid.features", "Validation baseline features"},
            {"--out", "out", "Output directory"},
            {"--resume", "resume", "Continue from a last.ckpt"},
            {"--seed", "seed", "Random seed"},
            {"--epochs", "epochs", "Maximum epochs"},
            {"--patience", "patience", "Epochs without improvement before stopping (0 = never)"},
            {"--lr", "lr", "Initial learning rate"},
            {"--lr-decay", "lr_decay", "Learning-rate decay factor"},
            {"--batch-size", "batch_size", "Mini-batch size"},
            {"--clip-norm", "clip_norm", "Global gradient-norm bound"},
            {"--dropout", "model.dropout", "Dropout probability"},
            {"--word-dim", "model.word_dim", "Word embedding size"},
            {"--pos-dim", "model.pos_dim", "POS embedding size"},
            {"--conv-widths", "model.conv_widths", "Comma-separated odd window sizes"},
            {"--n-filters", "model.n_filters", "Filters per window size"},
            {"--ff1", "model.ff1", "First feed-forward pair width"},
            {"--gru1", "model.gru1", "First BiGRU hidden size"},
            {"--ff2", "model.ff2", "Second feed-forward pair width"},
            {"--gru2", "model.gru2", "Second BiGRU hidden size"},
            {"--ff3", "model.ff3", "Third feed-forward width"},
            {"--ff4", "model.ff4", "Last feed-forward width"},
        };
        for (const Flag& f : flags) {
            std::string key = f.key;
            cmd->add_option_function<std::string>(
                f.flag, [this, key](const std::string& v) { values[key] = v; }, f.help);
        }
        cmd->add_flag("--no-conv", no_conv, "Feed the context embeddings to the recurrent stack directly");
        cmd->add_flag("--no-pos", no_pos, "Disable POS embeddings");
        cmd->add_flag("--no-features", no_features, "Disable baseline features");
    }

    // Builds the run handle; returns an exit code on failure.
    std::optional<int> build(RunHandle& handle) const {
        ceqe_status st = manifest.empty() ? ceqe_run_create(&handle.run) : ceqe_run_load(manifest.c_str(), &handle.run);
        if (st != CEQE_OK) {
            return report_failure(st);
        }
        for (const auto& [key, value] : values) {
            if ((st = ceqe_run_set(handle.run, key.c_str(), value.c_str())) != CEQE_OK) {
                return report_failure(st);
            }
        }
        if (no_conv) {
            ceqe_run_set(handle.run, "model.use_conv", "false");
        }
        if (no_pos) {
            ceqe_run_set(handle.run, "model.use_pos", "false");
        }
        if (no_features) {
            ceqe_run_set(handle.run, "model.use_features", "false");
        }
        static const std::pair<const char*, const char*> required[] = {
            {"train.src", "--src"},         {"train.mt", "--mt"},         {"train.align", "--align"},
            {"train.tags", "--tags"},       {"valid.src", "--valid-src"}, {"valid.mt", "--valid-mt"},
            {"valid.align", "--valid-align"}, {"valid.tags", "--valid-tags"}, {"out", "--out"},
        };
        for (const auto& [key, flag] : required) {
            char buf[8];
            size_t needed = 0;
            ceqe_run_get(handle.run, key, buf, sizeof(buf), &needed);
            if (needed == 0) {
                std::cerr << "ceqe-cli: missing required option " << flag << '\n';
                return kExitInput;
            }
        }
        return std::nullopt;
    }
};

std::optional<std::vector<double>> parse_rates(const std::string& text) {
    std::vector<double> rates;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            rates.push_back(std::stod(item, &used));
            if (used != item.size()) {
                return std::nullopt;
            }
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    return rates;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Word-level translation quality estimation (CEQE)"};
    app.set_version_flag("--version", ceqe_version());
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a model and write best.ckpt, manifest.txt and epochs.tsv");
    train_args.add_to(train);

    std::string model_path;
    std::string p_src, p_mt, p_align, p_src_pos, p_mt_pos, p_features, p_out;
    auto* predict = app.add_subcommand("predict", "Tag MT sentences with OK/BAD");
    predict->add_option("--model", model_path, "Checkpoint file")->required();
    predict->add_option("--src", p_src, "Source tokens")->required();
    predict->add_option("--mt", p_mt, "MT tokens")->required();
    predict->add_option("--align", p_align, "Alignments")->required();
    predict->add_option("--src-pos", p_src_pos, "Source POS tags");
    predict->add_option("--mt-pos", p_mt_pos, "MT POS tags");
    predict->add_option("--features", p_features, "Baseline features");
    predict->add_option("--out", p_out, "Output tags file")->required();

    std::string gold, pred;
    auto* evaluate = app.add_subcommand("evaluate", "Score predicted tags against gold tags");
    evaluate->add_option("--gold", gold, "Gold tags file")->required();
    evaluate->add_option("--pred", pred, "Predicted tags file")->required();

    ceqe_synth_options synth_opts;
    ceqe_synth_defaults(&synth_opts);
    std::string synth_dir, synth_prefix = "synth";
    auto* synth = app.add_subcommand("synth", "Write a synthetic corpus in the QE file formats");
    synth->add_option("--n", synth_opts.n_sentences, "Sentences")->capture_default_str();
    synth->add_option("--vocab", synth_opts.vocab_size, "Vocabulary size")->capture_default_str();
    synth->add_option("--error-rate", synth_opts.error_rate, "Probability of a substituted (BAD) token")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    synth->add_option("--seed", synth_opts.seed, "Random seed")->capture_default_str();
    synth->add_option("--min-len", synth_opts.min_len, "Shortest sentence")->capture_default_str();
    synth->add_option("--max-len", synth_opts.max_len, "Longest sentence")->capture_default_str();
    synth->add_option("--confusions", synth_opts.confusions, "Wrong translations per source token (0 = any)")
        ->capture_default_str();
    synth->add_option("--prefix", synth_prefix, "File name prefix")->capture_default_str();
    synth->add_option("--out-dir", synth_dir, "Output directory")->required();

    TrainArgs sweep_args;
    std::string rates_text = "0.1,0.3,0.7";
    auto* sweep = app.add_subcommand("sweep-dropout", "Train once per dropout rate and write sweep.tsv");
    sweep->add_option("--rates", rates_text, "Comma-separated dropout rates")->capture_default_str();
    sweep_args.add_to(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    if (train->parsed()) {
        RunHandle h;
        if (auto code = train_args.build(h)) {
            return *code;
        }
        ceqe_status st = ceqe_train(h.run, print_line, nullptr);
        return st == CEQE_OK ? kExitOk : report_failure(st);
    }
    if (predict->parsed()) {
        ceqe_model* model = nullptr;
        ceqe_status st = ceqe_model_load(model_path.c_str(), &model);
        if (st != CEQE_OK) {
            return report_failure(st);
        }
        auto opt = [](const std::string& s) { return s.empty() ? nullptr : s.c_str(); };
        ceqe_corpus corpus{p_src.c_str(), p_mt.c_str(), p_align.c_str(), opt(p_src_pos), opt(p_mt_pos),
                           opt(p_features)};
        st = ceqe_predict_files(model, &corpus, p_out.c_str());
        ceqe_model_free(model);
        return st == CEQE_OK ? kExitOk : report_failure(st);
    }
    if (evaluate->parsed()) {
        ceqe_report report;
        ceqe_status st = ceqe_evaluate_files(gold.c_str(), pred.c_str(), &report);
        if (st != CEQE_OK) {
            return report_failure(st);
        }
        char text[256];
        ceqe_format_report(&report, text, sizeof(text), nullptr);
        std::cout << text;
        return kExitOk;
    }
    if (synth->parsed()) {
        ceqe_status st = ceqe_synth_write(&synth_opts, synth_dir.c_str(), synth_prefix.c_str());
        return st == CEQE_OK ? kExitOk : report_failure(st);
    }
    if (sweep->parsed()) {
        auto rates = parse_rates(rates_text);
        if (!rates || rates->size() < 2) {
            std::cerr << "ceqe-cli: --rates needs at least two comma-separated dropout rates\n"
                      << sweep->help();
            return kExitInput;
        }
        RunHandle h;
        if (auto code = sweep_args.build(h)) {
            return *code;
        }
        ceqe_status st = ceqe_sweep_dropout(h.run, rates->data(), rates->size(), print_line, nullptr);
        return st == CEQE_OK ? kExitOk : report_failure(st);
    }
    return kExitInput;
}
