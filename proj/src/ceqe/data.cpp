// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#include "ceqe/data.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "ceqe/errors.hpp"

namespace ceqe::data {

namespace fs = std::filesystem;

std::string_view to_string(Label label) {
    return label == Label::Ok ? "OK" : "BAD";
}

std::size_t DatasetSplit::token_count() const {
    std::size_t n = 0;
    for (const auto& ex : examples) {
        n += ex.tgt_tokens.size();
    }
    return n;
}

bool DatasetSplit::has_pos() const {
    return !examples.empty() &&
           std::all_of(examples.begin(), examples.end(), [](const QEExample& ex) { return !ex.tgt_pos.empty(); });
}

bool DatasetSplit::has_features() const {
    return !examples.empty() &&
           std::all_of(examples.begin(), examples.end(), [](const QEExample& ex) { return ex.features.has_value(); });
}

bool DatasetSplit::has_labels() const {
    return !examples.empty() &&
           std::all_of(examples.begin(), examples.end(), [](const QEExample& ex) { return ex.labels.has_value(); });
}

// ---------------------------------------------------------------- parsing

namespace {

bool lowercase_into(std::string_view text, std::string& out) {
    out.clear();
    out.reserve(text.size());
    const auto* bytes = reinterpret_cast<const uint8_t*>(text.data());
    const auto len = static_cast<int32_t>(text.size());
    int32_t i = 0;
    while (i < len) {
        if (bytes[i] < 0x80) {
            char c = static_cast<char>(bytes[i++]);
            out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
            continue;
        }
        UChar32 c;
        U8_NEXT(bytes, i, len, c);
        if (c < 0) {
            return false;
        }
        c = u_tolower(c);
        uint8_t buf[U8_MAX_LENGTH];
        int32_t n = 0;
        UBool err = false;
        U8_APPEND(buf, n, U8_MAX_LENGTH, c, err);
        if (err) {
            return false;
        }
        out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
    }
    return true;
}

std::string location(const fs::path& path, std::size_t line, std::size_t column) {
    return path.string() + ":" + std::to_string(line) + ":" + std::to_string(column);
}

[[noreturn]] void parse_error(const fs::path& path, std::size_t line, std::size_t column, const std::string& what) {
    fail(ErrorKind::Parse, location(path, line, column) + ": " + what);
}

struct Field {
    std::string_view text;
    std::size_t column; // 1-based byte column
};

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f';
}

std::vector<Field> split_ws(std::string_view line) {
    std::vector<Field> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) {
            ++i;
        }
        std::size_t start = i;
        while (i < line.size() && !is_space(line[i])) {
            ++i;
        }
        if (i > start) {
            fields.push_back({line.substr(start, i - start), start + 1});
        }
    }
    return fields;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::Io, "cannot open " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(std::move(line));
    }
    if (in.bad()) {
        fail(ErrorKind::Io, "read error on " + path.string());
    }
    return lines;
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::string format_double(double v) {
    char buf[512];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
    if (ec != std::errc()) {
        auto r = std::to_chars(buf, buf + sizeof(buf), v);
        ptr = r.ptr;
    }
    return std::string(buf, ptr);
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::Io, "cannot write " + path.string());
    }
    return out;
}

void finish(std::ofstream& out, const fs::path& path) {
    out.flush();
    if (!out) {
        fail(ErrorKind::Io, "write error on " + path.string());
    }
}

} // namespace

std::string lowercase(std::string_view text) {
    std::string out;
    if (!lowercase_into(text, out)) {
        fail(ErrorKind::Parse, "invalid UTF-8 in \"" + std::string(text) + "\"");
    }
    return out;
}

std::vector<TokenList> parse_token_file(const fs::path& path, bool lowercase_tokens) {
    auto lines = read_lines(path);
    std::vector<TokenList> result;
    result.reserve(lines.size());
    std::string lowered;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        TokenList tokens;
        for (const Field& f : split_ws(lines[ln])) {
            if (!lowercase_into(f.text, lowered)) {
                parse_error(path, ln + 1, f.column, "invalid UTF-8");
            }
            tokens.push_back(lowercase_tokens ? lowered : std::string(f.text));
        }
        result.push_back(std::move(tokens));
    }
    return result;
}

std::vector<Alignment> parse_alignment_file(const fs::path& path) {
    auto lines = read_lines(path);
    std::vector<Alignment> result;
    result.reserve(lines.size());
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        Alignment pairs;
        for (const Field& f : split_ws(lines[ln])) {
            const auto dash = f.text.find('-');
            std::size_t m = 0, n = 0;
            if (dash == std::string_view::npos || !parse_int(f.text.substr(0, dash), m) ||
                !parse_int(f.text.substr(dash + 1), n)) {
                parse_error(path, ln + 1, f.column, "malformed alignment pair \"" + std::string(f.text) + "\"");
            }
            pairs.emplace_back(m, n);
        }
        std::sort(pairs.begin(), pairs.end());
        pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
        result.push_back(std::move(pairs));
    }
    return result;
}

std::vector<LabelList> parse_tags_file(const fs::path& path) {
    auto lines = read_lines(path);
    std::vector<LabelList> result;
    result.reserve(lines.size());
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        LabelList labels;
        for (const Field& f : split_ws(lines[ln])) {
            std::string upper(f.text);
            std::transform(upper.begin(), upper.end(), upper.begin(),
                           [](char c) { return c >= 'a' && c <= 'z' ? static_cast<char>(c - 'a' + 'A') : c; });
            if (upper == "OK") {
                labels.push_back(Label::Ok);
            } else if (upper == "BAD") {
                labels.push_back(Label::Bad);
            } else {
                parse_error(path, ln + 1, f.column, "expected OK or BAD, got \"" + std::string(f.text) + "\"");
            }
        }
        result.push_back(std::move(labels));
    }
    return result;
}

std::vector<FeatureMatrix> parse_features_file(const fs::path& path) {
    auto lines = read_lines(path);
    std::map<std::size_t, std::map<std::size_t, std::pair<FeatureRow, std::size_t>>> grouped;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        std::string_view line = lines[ln];
        if (line.empty()) {
            continue;
        }
        std::vector<Field> cols;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            std::size_t end = tab == std::string_view::npos ? line.size() : tab;
            cols.push_back({line.substr(start, end - start), start + 1});
            if (tab == std::string_view::npos) {
                break;
            }
            start = tab + 1;
        }
        if (cols.size() != kNumFeatures + 2) {
            parse_error(path, ln + 1, 1,
                        "expected " + std::to_string(kNumFeatures + 2) + " columns, got " + std::to_string(cols.size()));
        }
        std::size_t sent = 0, tok = 0;
        if (!parse_int(cols[0].text, sent)) {
            parse_error(path, ln + 1, cols[0].column, "bad sentence index \"" + std::string(cols[0].text) + "\"");
        }
        if (!parse_int(cols[1].text, tok)) {
            parse_error(path, ln + 1, cols[1].column, "bad token index \"" + std::string(cols[1].text) + "\"");
        }
        FeatureRow row{};
        for (std::size_t k = 0; k < kNumFeatures; ++k) {
            const Field& c = cols[k + 2];
            if (!parse_double(c.text, row[k])) {
                parse_error(path, ln + 1, c.column, "bad feature value \"" + std::string(c.text) + "\"");
            }
        }
        auto& sentence = grouped[sent];
        if (sentence.contains(tok)) {
            parse_error(path, ln + 1, cols[1].column,
                        "duplicate row for sentence " + std::to_string(sent) + " token " + std::to_string(tok));
        }
        sentence.emplace(tok, std::make_pair(row, ln + 1));
    }

    std::vector<FeatureMatrix> result;
    if (!grouped.empty()) {
        result.resize(grouped.rbegin()->first + 1);
    }
    for (auto& [sent, rows] : grouped) {
        std::size_t expected = 0;
        for (auto& [tok, entry] : rows) {
            if (tok != expected) {
                fail(ErrorKind::Validation, location(path, entry.second, 1) + ": sentence " + std::to_string(sent) +
                                                " is missing feature rows for token " + std::to_string(expected));
            }
            result[sent].push_back(entry.first);
            ++expected;
        }
    }
    return result;
}

// ------------------------------------------------------------- vocabulary

namespace {
const std::vector<std::string>& reserved_names() {
    // Upper case: lowercased corpus text can never produce these.
    static const std::vector<std::string> names{"<PAD>", "<UNK>", "<NULL>", "<BOS>", "<EOS>"};
    return names;
}
} // namespace

Vocabulary::Vocabulary() : id_to_token_(reserved_names()) {
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        token_to_id_.emplace(id_to_token_[i], i);
    }
}

Vocabulary Vocabulary::build(const std::vector<const std::vector<TokenList>*>& corpora, std::size_t min_count) {
    if (min_count < 1) {
        fail(ErrorKind::Config, "vocabulary min_count must be >= 1");
    }
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto* corpus : corpora) {
        for (const auto& sentence : *corpus) {
            for (const auto& tok : sentence) {
                ++counts[tok];
            }
        }
    }
    std::vector<std::pair<std::string, std::size_t>> entries;
    for (auto& [tok, n] : counts) {
        if (n >= min_count && std::find(reserved_names().begin(), reserved_names().end(), tok) == reserved_names().end()) {
            entries.emplace_back(tok, n);
        }
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Vocabulary vocab;
    for (auto& [tok, n] : entries) {
        vocab.token_to_id_.emplace(tok, vocab.id_to_token_.size());
        vocab.id_to_token_.push_back(tok);
    }
    return vocab;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
    if (id_to_token.size() < kNumReserved ||
        !std::equal(reserved_names().begin(), reserved_names().end(), id_to_token.begin())) {
        fail(ErrorKind::Checkpoint, "vocabulary does not start with the reserved entries");
    }
    Vocabulary vocab;
    vocab.id_to_token_ = std::move(id_to_token);
    vocab.token_to_id_.clear();
    for (std::size_t i = 0; i < vocab.id_to_token_.size(); ++i) {
        if (!vocab.token_to_id_.emplace(vocab.id_to_token_[i], i).second) {
            fail(ErrorKind::Checkpoint, "duplicate vocabulary entry \"" + vocab.id_to_token_[i] + "\"");
        }
    }
    return vocab;
}

std::size_t Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    if (it == token_to_id_.end() || it->second < kNumReserved) {
        return kUnk;
    }
    return it->second;
}

Vocabulary build_word_vocab(const DatasetSplit& split, std::size_t min_count) {
    std::vector<TokenList> src, tgt;
    for (const auto& ex : split.examples) {
        src.push_back(ex.src_tokens);
        tgt.push_back(ex.tgt_tokens);
    }
    return Vocabulary::build({&src, &tgt}, min_count);
}

Vocabulary build_pos_vocab(const DatasetSplit& split) {
    std::vector<TokenList> src, tgt;
    for (const auto& ex : split.examples) {
        src.push_back(ex.src_pos);
        tgt.push_back(ex.tgt_pos);
    }
    return Vocabulary::build({&src, &tgt}, 1);
}

// --------------------------------------------------------------- assembly

void validate_example(const QEExample& ex, std::size_t index) {
    const std::string where = "sentence " + std::to_string(index) + ": ";
    const std::size_t m = ex.src_tokens.size(), n = ex.tgt_tokens.size();
    if (n == 0) {
        fail(ErrorKind::Validation, where + "empty MT sentence");
    }
    if (ex.tgt_pos.empty() && !ex.src_pos.empty()) {
        fail(ErrorKind::Validation, where + "POS tags present on only one side");
    }
    if (!ex.tgt_pos.empty() && ex.tgt_pos.size() != n) {
        fail(ErrorKind::Validation, where + "MT POS count " + std::to_string(ex.tgt_pos.size()) +
                                        " != token count " + std::to_string(n));
    }
    if (!ex.tgt_pos.empty() && ex.src_pos.size() != m) {
        fail(ErrorKind::Validation, where + "source POS count " + std::to_string(ex.src_pos.size()) +
                                        " != token count " + std::to_string(m));
    }
    for (const auto& [s, t] : ex.alignments) {
        if (s >= m || t >= n) {
            fail(ErrorKind::Validation, where + "alignment " + std::to_string(s) + "-" + std::to_string(t) +
                                            " out of range for lengths " + std::to_string(m) + "/" +
                                            std::to_string(n));
        }
    }
    if (ex.features && ex.features->size() != n) {
        fail(ErrorKind::Validation, where + "expected " + std::to_string(n) + " feature rows, got " +
                                        std::to_string(ex.features->size()));
    }
    if (ex.labels && ex.labels->size() != n) {
        fail(ErrorKind::Validation, where + "expected " + std::to_string(n) + " tags, got " +
                                        std::to_string(ex.labels->size()));
    }
}

DatasetSplit assemble_dataset(const CorpusPaths& paths, SplitRole role) {
    auto src = parse_token_file(paths.src);
    auto mt = parse_token_file(paths.mt);
    auto align = parse_alignment_file(paths.align);
    const std::size_t n = mt.size();

    auto check_count = [&](const fs::path& path, std::size_t count) {
        if (count != n) {
            fail(ErrorKind::Assembly, path.string() + " has " + std::to_string(count) + " lines but " +
                                          paths.mt.string() + " has " + std::to_string(n));
        }
    };
    check_count(paths.src, src.size());
    check_count(paths.align, align.size());

    std::vector<LabelList> tags;
    if (paths.tags) {
        tags = parse_tags_file(*paths.tags);
        check_count(*paths.tags, tags.size());
    } else if (role != SplitRole::Test) {
        fail(ErrorKind::Assembly, "training and validation data need a tags file");
    }
    if (paths.src_pos.has_value() != paths.mt_pos.has_value()) {
        fail(ErrorKind::Assembly, "source and MT POS files must be given together");
    }
    std::vector<TokenList> src_pos, mt_pos;
    if (paths.src_pos) {
        src_pos = parse_token_file(*paths.src_pos, false);
        mt_pos = parse_token_file(*paths.mt_pos, false);
        check_count(*paths.src_pos, src_pos.size());
        check_count(*paths.mt_pos, mt_pos.size());
    }
    std::vector<FeatureMatrix> features;
    if (paths.features) {
        features = parse_features_file(*paths.features);
        if (features.size() > n) {
            fail(ErrorKind::Assembly, paths.features->string() + " has rows for sentence " +
                                          std::to_string(features.size() - 1) + " but only " + std::to_string(n) +
                                          " sentences exist");
        }
        features.resize(n);
    }

    DatasetSplit split;
    split.role = role;
    split.examples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        QEExample ex;
        ex.src_tokens = std::move(src[i]);
        ex.tgt_tokens = std::move(mt[i]);
        ex.alignments = std::move(align[i]);
        if (paths.src_pos) {
            ex.src_pos = std::move(src_pos[i]);
            ex.tgt_pos = std::move(mt_pos[i]);
            if (ex.tgt_pos.size() != ex.tgt_tokens.size() || ex.src_pos.size() != ex.src_tokens.size()) {
                fail(ErrorKind::Validation, "sentence " + std::to_string(i) + ": POS tag count does not match tokens");
            }
        }
        if (paths.features) {
            ex.features = std::move(features[i]);
        }
        if (paths.tags) {
            ex.labels = std::move(tags[i]);
        }
        validate_example(ex, i);
        split.examples.push_back(std::move(ex));
    }
    return split;
}

CorpusPaths corpus_paths(const fs::path& dir, const std::string& prefix) {
    CorpusPaths p;
    p.src = dir / (prefix + ".src");
    p.mt = dir / (prefix + ".mt");
    p.align = dir / (prefix + ".align");
    p.tags = dir / (prefix + ".tags");
    p.src_pos = dir / (prefix + ".src_pos");
    p.mt_pos = dir / (prefix + ".mt_pos");
    p.features = dir / (prefix + ".features");
    return p;
}

namespace {

void write_token_lines(const fs::path& path, const std::vector<const TokenList*>& lines) {
    auto out = open_out(path);
    for (const TokenList* tokens : lines) {
        for (std::size_t i = 0; i < tokens->size(); ++i) {
            out << (i ? " " : "") << (*tokens)[i];
        }
        out << '\n';
    }
    finish(out, path);
}

} // namespace

void write_tags_file(const fs::path& path, const std::vector<LabelList>& labels) {
    auto out = open_out(path);
    for (const auto& sentence : labels) {
        for (std::size_t i = 0; i < sentence.size(); ++i) {
            out << (i ? " " : "") << to_string(sentence[i]);
        }
        out << '\n';
    }
    finish(out, path);
}

void write_dataset(const DatasetSplit& split, const CorpusPaths& paths) {
    std::vector<const TokenList*> src, mt, src_pos, mt_pos;
    for (const auto& ex : split.examples) {
        src.push_back(&ex.src_tokens);
        mt.push_back(&ex.tgt_tokens);
        src_pos.push_back(&ex.src_pos);
        mt_pos.push_back(&ex.tgt_pos);
    }
    write_token_lines(paths.src, src);
    write_token_lines(paths.mt, mt);
    {
        auto out = open_out(paths.align);
        for (const auto& ex : split.examples) {
            for (std::size_t i = 0; i < ex.alignments.size(); ++i) {
                out << (i ? " " : "") << ex.alignments[i].first << '-' << ex.alignments[i].second;
            }
            out << '\n';
        }
        finish(out, paths.align);
    }
    if (paths.src_pos && paths.mt_pos && split.has_pos()) {
        write_token_lines(*paths.src_pos, src_pos);
        write_token_lines(*paths.mt_pos, mt_pos);
    }
    if (paths.tags && split.has_labels()) {
        std::vector<LabelList> labels;
        for (const auto& ex : split.examples) {
            labels.push_back(*ex.labels);
        }
        write_tags_file(*paths.tags, labels);
    }
    if (paths.features && split.has_features()) {
        auto out = open_out(*paths.features);
        for (std::size_t s = 0; s < split.examples.size(); ++s) {
            const auto& rows = *split.examples[s].features;
            for (std::size_t t = 0; t < rows.size(); ++t) {
                out << s << '\t' << t;
                for (double v : rows[t]) {
                    out << '\t' << format_double(v);
                }
                out << '\n';
            }
        }
        finish(out, *paths.features);
    }
}

// --------------------------------------------------------------- batching

EncodedExample encode_example(const QEExample& ex, const Vocabulary& words, const Vocabulary& pos) {
    const std::size_t m = ex.src_tokens.size(), n = ex.tgt_tokens.size();
    std::vector<std::size_t> src_ids(m), tgt_ids(n);
    for (std::size_t i = 0; i < m; ++i) {
        src_ids[i] = words.id(ex.src_tokens[i]);
    }
    for (std::size_t j = 0; j < n; ++j) {
        tgt_ids[j] = words.id(ex.tgt_tokens[j]);
    }
    const bool with_pos = !ex.tgt_pos.empty();

    std::vector<std::vector<std::size_t>> aligned(n);
    for (const auto& [s, t] : ex.alignments) {
        aligned[t].push_back(s); // alignments are sorted, so each list is ascending
    }

    EncodedExample enc;
    enc.context.resize(n);
    enc.pos.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        ContextIds& c = enc.context[j];
        c.tgt = tgt_ids[j];
        c.tgt_prev = j == 0 ? Vocabulary::kBos : tgt_ids[j - 1];
        c.tgt_next = j + 1 == n ? Vocabulary::kEos : tgt_ids[j + 1];
        PosIds& p = enc.pos[j];
        p.tgt = with_pos ? pos.id(ex.tgt_pos[j]) : Vocabulary::kNull;
        const auto& srcs = aligned[j];
        if (srcs.empty()) {
            c.src_left = c.src_right = Vocabulary::kNull;
            c.src_aligned = {Vocabulary::kNull};
            p.src_aligned = {Vocabulary::kNull};
            continue;
        }
        c.src_aligned.clear();
        p.src_aligned.clear();
        for (std::size_t s : srcs) {
            c.src_aligned.push_back(src_ids[s]);
            p.src_aligned.push_back(with_pos ? pos.id(ex.src_pos[s]) : Vocabulary::kNull);
        }
        c.src_left = srcs.front() == 0 ? Vocabulary::kBos : src_ids[srcs.front() - 1];
        c.src_right = srcs.back() + 1 == m ? Vocabulary::kEos : src_ids[srcs.back() + 1];
    }
    enc.features = ex.features;
    enc.labels = ex.labels;
    return enc;
}

std::vector<EncodedExample> encode_split(const DatasetSplit& split, const Vocabulary& words, const Vocabulary& pos) {
    std::vector<EncodedExample> out;
    out.reserve(split.examples.size());
    for (const auto& ex : split.examples) {
        out.push_back(encode_example(ex, words, pos));
    }
    return out;
}

std::size_t Batch::real_tokens() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

Batch make_batch(const std::vector<EncodedExample>& encoded, std::span<const std::size_t> indices) {
    Batch batch;
    batch.size = indices.size();
    batch.has_features = !indices.empty();
    batch.has_labels = !indices.empty();
    for (std::size_t idx : indices) {
        const auto& ex = encoded.at(idx);
        batch.max_len = std::max(batch.max_len, ex.context.size());
        batch.has_features = batch.has_features && ex.features.has_value();
        batch.has_labels = batch.has_labels && ex.labels.has_value();
    }
    const std::size_t t_max = batch.max_len;
    const std::size_t rows = batch.size * t_max;
    batch.example_indices.assign(indices.begin(), indices.end());
    batch.context.resize(rows);
    batch.pos.resize(rows);
    batch.labels.assign(rows, 0);
    batch.mask.assign(rows, 0);
    if (batch.has_features) {
        batch.features.assign(rows * kNumFeatures, 0.0);
    }
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto& ex = encoded[indices[b]];
        const std::size_t len = ex.context.size();
        batch.lengths.push_back(len);
        for (std::size_t t = 0; t < len; ++t) {
            const std::size_t r = b * t_max + t;
            batch.context[r] = ex.context[t];
            batch.pos[r] = ex.pos[t];
            batch.mask[r] = 1;
            if (batch.has_labels) {
                batch.labels[r] = static_cast<int>((*ex.labels)[t]);
            }
            if (batch.has_features) {
                std::copy((*ex.features)[t].begin(), (*ex.features)[t].end(),
                          batch.features.begin() + static_cast<std::ptrdiff_t>(r * kNumFeatures));
            }
        }
    }
    return batch;
}

std::vector<Batch> make_batches(const std::vector<EncodedExample>& encoded, std::size_t batch_size, Rng* rng,
                                bool shuffle) {
    if (batch_size == 0) {
        fail(ErrorKind::Config, "batch size must be >= 1");
    }
    std::vector<std::size_t> order(encoded.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    if (shuffle) {
        if (!rng) {
            fail(ErrorKind::Contract, "shuffling needs an Rng");
        }
        rng->shuffle(std::span<std::size_t>(order));
    }
    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        batches.push_back(make_batch(encoded, std::span<const std::size_t>(order).subspan(start, end - start)));
    }
    return batches;
}

// -------------------------------------------------------------- synthesis

namespace {

std::string synth_token(std::size_t k) {
    return "w" + std::to_string(k);
}

std::string synth_tag(std::size_t k, std::size_t n_tags) {
    return "P" + std::to_string(k % n_tags);
}

} // namespace

FeatureRow synth_features(std::size_t k) {
    FeatureRow row{};
    row[0] = k < 10 ? 1.0 : 0.0;      // stopword: the ten lowest ids
    row[1] = k % 13 == 1 ? 1.0 : 0.0; // punctuation
    row[2] = k % 7 == 3 ? 1.0 : 0.0;  // proper noun
    row[3] = k % 11 == 5 ? 1.0 : 0.0; // digit
    const std::uint64_t h = splitmix64(0x5eedf00dULL + k);
    for (std::size_t c = 4; c < 7; ++c) {
        // backoff-style floats in [0, 1)
        row[c] = static_cast<double>(splitmix64(h + c) >> 11) * 0x1.0p-53;
    }
    for (std::size_t c = 7; c < kNumFeatures; ++c) {
        row[c] = ((h >> (c - 7)) & 1U) ? 1.0 : 0.0;
    }
    return row;
}

DatasetSplit synth_dataset(const SynthOptions& opt, Rng& rng) {
    if (!(opt.error_rate >= 0.0 && opt.error_rate <= 1.0)) {
        fail(ErrorKind::Config, "error rate must be in [0, 1]");
    }
    if (opt.vocab_size < 2) {
        fail(ErrorKind::Config, "synthetic vocabulary needs at least 2 tokens");
    }
    if (opt.min_len < 1 || opt.max_len < opt.min_len || opt.n_pos_tags < 1) {
        fail(ErrorKind::Config, "invalid synthetic sentence length or tag-set size");
    }
    DatasetSplit split;
    split.examples.reserve(opt.n_sentences);
    for (std::size_t s = 0; s < opt.n_sentences; ++s) {
        const std::size_t len = opt.min_len + rng.below(opt.max_len - opt.min_len + 1);
        QEExample ex;
        ex.features = FeatureMatrix{};
        ex.labels = LabelList{};
        for (std::size_t i = 0; i < len; ++i) {
            const std::size_t src = rng.below(opt.vocab_size);
            std::size_t tgt = src;
            Label label = Label::Ok;
            if (rng.uniform() < opt.error_rate) {
                if (opt.confusions > 0) {
                    const std::uint64_t j = rng.below(opt.confusions);
                    tgt = (src + 1 + splitmix64(src * 1000003ULL + j) % (opt.vocab_size - 1)) % opt.vocab_size;
                } else {
                    tgt = rng.below(opt.vocab_size - 1);
                    if (tgt >= src) {
                        ++tgt;
                    }
                }
                label = Label::Bad;
            }
            ex.src_tokens.push_back(synth_token(src));
            ex.tgt_tokens.push_back(synth_token(tgt));
            ex.src_pos.push_back(synth_tag(src, opt.n_pos_tags));
            ex.tgt_pos.push_back(synth_tag(tgt, opt.n_pos_tags));
            ex.alignments.emplace_back(i, i);
            ex.features->push_back(synth_features(tgt));
            ex.labels->push_back(label);
        }
        split.examples.push_back(std::move(ex));
    }
    return split;
}

} // namespace ceqe::data
