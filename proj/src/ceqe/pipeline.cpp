// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#include "ceqe/pipeline.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ceqe/errors.hpp"

namespace ceqe::pipeline {

namespace fs = std::filesystem;

namespace {

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
        fail(ErrorKind::Config, key + ": expected a non-negative integer, got \"" + value + "\"");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
        fail(ErrorKind::Config, key + ": expected a number, got \"" + value + "\"");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") {
        return true;
    }
    if (value == "false" || value == "0") {
        return false;
    }
    fail(ErrorKind::Config, key + ": expected true or false, got \"" + value + "\"");
}

std::optional<fs::path> optional_path(const std::string& value) {
    return value.empty() ? std::nullopt : std::optional<fs::path>(value);
}

bool set_corpus(data::CorpusPaths& paths, const std::string& field, const std::string& value) {
    if (field == "src") {
        paths.src = value;
    } else if (field == "mt") {
        paths.mt = value;
    } else if (field == "align") {
        paths.align = value;
    } else if (field == "tags") {
        paths.tags = optional_path(value);
    } else if (field == "src_pos") {
        paths.src_pos = optional_path(value);
    } else if (field == "mt_pos") {
        paths.mt_pos = optional_path(value);
    } else if (field == "features") {
        paths.features = optional_path(value);
    } else {
        return false;
    }
    return true;
}

std::string opt_str(const std::optional<fs::path>& p) {
    return p ? p->string() : std::string();
}

void write_corpus(std::ostream& os, const std::string& prefix, const data::CorpusPaths& paths) {
    os << prefix << ".src=" << paths.src.string() << '\n'
       << prefix << ".mt=" << paths.mt.string() << '\n'
       << prefix << ".align=" << paths.align.string() << '\n'
       << prefix << ".tags=" << opt_str(paths.tags) << '\n'
       << prefix << ".src_pos=" << opt_str(paths.src_pos) << '\n'
       << prefix << ".mt_pos=" << opt_str(paths.mt_pos) << '\n'
       << prefix << ".features=" << opt_str(paths.features) << '\n';
}

void emit(const LogFn& log, const std::string& line) {
    if (log) {
        log(line);
    }
}

const char* kEpochHeader = "epoch\ttrain_loss\tval_f1_bad\tval_f1_ok\tval_f1_multi\tlr";

} // namespace

std::string format_number(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

void RunManifest::set(const std::string& key, const std::string& value) {
    const auto dot = key.find('.');
    const std::string head = key.substr(0, dot);
    const std::string tail = dot == std::string::npos ? std::string() : key.substr(dot + 1);
    bool known = true;
    if (head == "train" && dot != std::string::npos) {
        known = set_corpus(train, tail, value);
    } else if (head == "valid" && dot != std::string::npos) {
        known = set_corpus(valid, tail, value);
    } else if (head == "model" && dot != std::string::npos) {
        known = model.set(tail, value);
    } else if (key == "version") {
        // informational
    } else if (key == "out") {
        out = value;
    } else if (key == "resume") {
        resume = optional_path(value);
    } else if (key == "seed") {
        recipe.seed = parse_uint(key, value);
    } else if (key == "epochs") {
        recipe.max_epochs = parse_uint(key, value);
    } else if (key == "patience") {
        recipe.patience = parse_uint(key, value);
    } else if (key == "lr") {
        recipe.lr = parse_double(key, value);
    } else if (key == "lr_decay") {
        recipe.lr_decay = parse_double(key, value);
    } else if (key == "batch_size") {
        recipe.batch_size = parse_uint(key, value);
    } else if (key == "clip_norm") {
        recipe.clip_norm = parse_double(key, value);
    } else if (key == "decay_against_best") {
        recipe.decay_against_best = parse_bool(key, value);
    } else {
        known = false;
    }
    if (!known) {
        fail(ErrorKind::Config, "unknown manifest key \"" + key + "\"");
    }
}

std::optional<std::string> RunManifest::get(const std::string& key) const {
    std::istringstream in(to_text());
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos && line.compare(0, eq, key) == 0 && eq == key.size()) {
            return line.substr(eq + 1);
        }
    }
    return std::nullopt;
}

std::string RunManifest::to_text() const {
    std::ostringstream os;
    os << "version=" << kVersion << '\n';
    write_corpus(os, "train", train);
    write_corpus(os, "valid", valid);
    os << "out=" << out.string() << '\n'
       << "resume=" << opt_str(resume) << '\n'
       << "seed=" << recipe.seed << '\n'
       << "epochs=" << recipe.max_epochs << '\n'
       << "patience=" << recipe.patience << '\n'
       << "lr=" << format_number(recipe.lr) << '\n'
       << "lr_decay=" << format_number(recipe.lr_decay) << '\n'
       << "batch_size=" << recipe.batch_size << '\n'
       << "clip_norm=" << format_number(recipe.clip_norm) << '\n'
       << "decay_against_best=" << (recipe.decay_against_best ? "true" : "false") << '\n';
    std::istringstream model_lines(model.to_text());
    std::string line;
    while (std::getline(model_lines, line)) {
        os << "model." << line << '\n';
    }
    return os.str();
}

RunManifest RunManifest::from_text(const std::string& text) {
    RunManifest m;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail(ErrorKind::Config, "manifest line " + std::to_string(number) + ": expected key=value");
        }
        m.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return m;
}

RunManifest RunManifest::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::Io, "cannot open manifest " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    return from_text(text.str());
}

void RunManifest::save(const fs::path& path) const {
    std::ofstream out_file(path, std::ios::trunc);
    if (!out_file) {
        fail(ErrorKind::Io, "cannot write manifest " + path.string());
    }
    out_file << to_text();
}

data::DatasetSplit load_for_model(const model::ModelConfig& config, const data::CorpusPaths& paths) {
    if (config.use_pos && !(paths.src_pos && paths.mt_pos)) {
        fail(ErrorKind::Config, "model uses POS embeddings: source and MT POS files are required");
    }
    if (config.use_features && !paths.features) {
        fail(ErrorKind::Config, "model uses baseline features: a features file is required");
    }
    data::CorpusPaths needed = paths;
    needed.tags.reset();
    if (!config.use_pos) {
        needed.src_pos.reset();
        needed.mt_pos.reset();
    }
    if (!config.use_features) {
        needed.features.reset();
    }
    return data::assemble_dataset(needed, data::SplitRole::Test);
}

TrainOutcome run_training(const RunManifest& manifest, const LogFn& log, const train::EpochCallback& extra) {
    if (manifest.out.empty()) {
        fail(ErrorKind::Config, "no output directory given");
    }
    if (!manifest.train.tags || !manifest.valid.tags) {
        fail(ErrorKind::Config, "training and validation tags files are required");
    }
    model::ModelConfig config = manifest.model;
    auto absent = [](const data::CorpusPaths& p) { return !(p.src_pos && p.mt_pos); };
    if (config.use_pos && (absent(manifest.train) || absent(manifest.valid))) {
        config.use_pos = false;
        emit(log, "notice: POS files not provided; training without POS embeddings");
    }
    if (config.use_features && (!manifest.train.features || !manifest.valid.features)) {
        config.use_features = false;
        emit(log, "notice: features file not provided; training without baseline features");
    }
    config.validate();

    data::CorpusPaths train_paths = manifest.train;
    data::CorpusPaths valid_paths = manifest.valid;
    for (auto* p : {&train_paths, &valid_paths}) {
        if (!config.use_pos) {
            p->src_pos.reset();
            p->mt_pos.reset();
        }
        if (!config.use_features) {
            p->features.reset();
        }
    }
    const auto train_split = data::assemble_dataset(train_paths, data::SplitRole::Train);
    const auto valid_split = data::assemble_dataset(valid_paths, data::SplitRole::Validation);

    fs::create_directories(manifest.out);
    RunManifest effective = manifest;
    effective.model = config;
    effective.save(manifest.out / "manifest.txt");

    train::TrainConfig recipe = manifest.recipe;
    recipe.best_checkpoint = manifest.out / "best.ckpt";
    recipe.last_checkpoint = manifest.out / "last.ckpt";

    std::optional<model::CeqeModel> model;
    std::optional<train::TrainState> resume;
    if (manifest.resume) {
        auto ckpt = train::load_checkpoint(*manifest.resume);
        if (!(ckpt.model.config() == config)) {
            fail(ErrorKind::Checkpoint, "resume checkpoint was trained with a different model configuration");
        }
        model.emplace(std::move(ckpt.model));
        resume = std::move(ckpt.state);
    } else {
        // Initialization draws from its own counter range of the seed.
        Rng init(recipe.seed, std::uint64_t{1} << 62);
        model.emplace(config, data::build_word_vocab(train_split),
                      data::build_pos_vocab(train_split),
                      init);
    }

    const fs::path log_path = manifest.out / "epochs.tsv";
    std::ofstream epoch_log;
    if (resume) {
        // Rewrite the rows already completed so the log matches the state.
        epoch_log.open(log_path, std::ios::trunc);
        epoch_log << kEpochHeader << '\n';
        for (const auto& r : resume->history) {
            epoch_log << train::format_epoch_line(r) << '\n';
        }
    } else {
        epoch_log.open(log_path, std::ios::trunc);
        epoch_log << kEpochHeader << '\n';
    }
    if (!epoch_log) {
        fail(ErrorKind::Io, "cannot write " + log_path.string());
    }
    emit(log, kEpochHeader);
    auto on_epoch = [&](const train::EpochRecord& r) {
        const std::string line = train::format_epoch_line(r);
        epoch_log << line << '\n';
        epoch_log.flush();
        emit(log, line);
        if (extra) {
            extra(r);
        }
    };
    TrainOutcome outcome{train::fit(*model, train_split, valid_split, recipe, std::move(resume), on_epoch), config};
    return outcome;
}

std::vector<SweepRow> run_dropout_sweep(const RunManifest& manifest, const std::vector<double>& rates,
                                        const LogFn& log) {
    if (rates.size() < 2) {
        fail(ErrorKind::Config, "a dropout sweep needs at least two rates");
    }
    for (double r : rates) {
        if (!(r >= 0.0 && r < 1.0)) {
            fail(ErrorKind::Config, "dropout rate " + format_number(r) + " is outside [0, 1)");
        }
    }
    fs::create_directories(manifest.out);
    const fs::path table_path = manifest.out / "sweep.tsv";
    std::ofstream table(table_path, std::ios::trunc);
    if (!table) {
        fail(ErrorKind::Io, "cannot write " + table_path.string());
    }
    table << "rate\tepoch\ttrain_f1_multi\tval_f1_multi\n";
    table.flush();

    std::vector<SweepRow> rows;
    std::optional<Error> first_failure;
    for (double rate : rates) {
        RunManifest run = manifest;
        run.out = manifest.out / ("dropout-" + format_number(rate));
        run.resume.reset();
        run.model.dropout = rate;
        run.recipe.track_train_f1 = true;
        emit(log, "dropout " + format_number(rate));
        // Rows go out per epoch so a failing run keeps its completed epochs.
        auto write_row = [&](const train::EpochRecord& h) {
            rows.push_back({rate, h.epoch, h.train_f1_multi, h.val_f1_multi});
            table << format_number(rate) << '\t' << h.epoch << '\t' << format_number(h.train_f1_multi) << '\t'
                  << format_number(h.val_f1_multi) << '\n';
            table.flush();
        };
        try {
            run_training(run, log, write_row);
        } catch (const Error& e) {
            emit(log, "dropout " + format_number(rate) + " failed: " + e.what());
            if (!first_failure) {
                first_failure.emplace(e.kind(), "dropout " + format_number(rate) + ": " + e.what());
            }
        }
    }
    if (first_failure) {
        throw *first_failure;
    }
    return rows;
}

} // namespace ceqe::pipeline
