// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0
//
// WMT word-level QE data: parsing, cross-file assembly, the shared
// vocabulary, mini-batch encoding, and a synthetic corpus generator.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ceqe/rng.hpp"

namespace ceqe::data {

inline constexpr std::size_t kNumFeatures = 31;

enum class Label : std::uint8_t { Ok = 0, Bad = 1 };

std::string_view to_string(Label label);

using TokenList = std::vector<std::string>;
using FeatureRow = std::array<double, kNumFeatures>;
using FeatureMatrix = std::vector<FeatureRow>;
using LabelList = std::vector<Label>;

/// (source index m, target index n), both 0-based; kept sorted and unique.
using AlignmentPair = std::pair<std::size_t, std::size_t>;
using Alignment = std::vector<AlignmentPair>;

struct QEExample {
    TokenList src_tokens;
    TokenList tgt_tokens;
    Alignment alignments;
    TokenList src_pos;
    TokenList tgt_pos;
    std::optional<FeatureMatrix> features;
    std::optional<LabelList> labels;

    friend bool operator==(const QEExample&, const QEExample&) = default;
};

enum class SplitRole { Train, Validation, Test };

struct DatasetSplit {
    std::vector<QEExample> examples;
    SplitRole role = SplitRole::Train;

    std::size_t token_count() const;
    bool has_pos() const;
    bool has_features() const;
    bool has_labels() const;

    friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

// ---------------------------------------------------------------- parsing

/// Unicode simple lowercase of a UTF-8 string.
std::string lowercase(std::string_view text);

/// One sentence per line, whitespace-separated tokens. Words are lowercased;
/// POS files are read with lowercase = false.
std::vector<TokenList> parse_token_file(const std::filesystem::path& path, bool lowercase_tokens = true);

/// "m-n" pairs per line, 0-based; duplicates collapse.
std::vector<Alignment> parse_alignment_file(const std::filesystem::path& path);

/// OK/BAD per token, case-insensitive.
std::vector<LabelList> parse_tags_file(const std::filesystem::path& path);

/// TSV rows: sentence_index, token_index, 31 values. Result is indexed by
/// sentence; sentences without rows come back empty.
std::vector<FeatureMatrix> parse_features_file(const std::filesystem::path& path);

// ------------------------------------------------------------- vocabulary

class Vocabulary {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;
    static constexpr std::size_t kNull = 2;
    static constexpr std::size_t kBos = 3;
    static constexpr std::size_t kEos = 4;
    static constexpr std::size_t kNumReserved = 5;

    /// Reserved entries only.
    Vocabulary();

    /// Corpus tokens sorted by descending count, then lexicographically.
    /// Tokens seen fewer than min_count times are left out (they map to UNK).
    static Vocabulary build(const std::vector<const std::vector<TokenList>*>& corpora, std::size_t min_count = 1);

    /// Rebuilds from a serialized id -> token list (reserved names first).
    static Vocabulary from_tokens(std::vector<std::string> id_to_token);

    std::size_t id(const std::string& token) const;
    const std::string& token(std::size_t id) const { return id_to_token_.at(id); }
    std::size_t size() const noexcept { return id_to_token_.size(); }
    bool contains(const std::string& token) const { return token_to_id_.contains(token); }
    const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.id_to_token_ == b.id_to_token_; }

private:
    std::unordered_map<std::string, std::size_t> token_to_id_;
    std::vector<std::string> id_to_token_;
};

/// Word vocabulary over source and target tokens of a training split.
Vocabulary build_word_vocab(const DatasetSplit& split, std::size_t min_count = 1);
/// POS vocabulary over both sides' tags.
Vocabulary build_pos_vocab(const DatasetSplit& split);

// --------------------------------------------------------------- assembly

struct CorpusPaths {
    std::filesystem::path src;
    std::filesystem::path mt;
    std::filesystem::path align;
    std::optional<std::filesystem::path> tags;
    std::optional<std::filesystem::path> src_pos;
    std::optional<std::filesystem::path> mt_pos;
    std::optional<std::filesystem::path> features;
};

/// Reads every provided file and cross-validates them sentence by sentence.
DatasetSplit assemble_dataset(const CorpusPaths& paths, SplitRole role);

/// Checks every QEExample invariant; throws a Validation error naming the
/// sentence on the first violation.
void validate_example(const QEExample& example, std::size_t index);

/// Writes the split using the same formats the parsers read. Optional
/// members of `paths` are written only when the split carries that field.
void write_dataset(const DatasetSplit& split, const CorpusPaths& paths);

/// Conventional file family `<dir>/<prefix>.{src,mt,align,src_pos,mt_pos,tags,features}`.
CorpusPaths corpus_paths(const std::filesystem::path& dir, const std::string& prefix);

void write_tags_file(const std::filesystem::path& path, const std::vector<LabelList>& labels);

// --------------------------------------------------------------- batching

/// Six context slots for one target position plus the aligned source bag.
struct ContextIds {
    std::size_t tgt_prev = Vocabulary::kPad;
    std::size_t tgt = Vocabulary::kPad;
    std::size_t tgt_next = Vocabulary::kPad;
    std::size_t src_left = Vocabulary::kPad;
    std::vector<std::size_t> src_aligned{Vocabulary::kPad};
    std::size_t src_right = Vocabulary::kPad;
};

struct PosIds {
    std::size_t tgt = Vocabulary::kPad;
    std::vector<std::size_t> src_aligned{Vocabulary::kPad};
};

struct EncodedExample {
    std::vector<ContextIds> context;
    std::vector<PosIds> pos;
    std::optional<FeatureMatrix> features;
    std::optional<LabelList> labels;
};

/// Builds context slots: neighbors at the boundary are BOS/EOS; an unaligned
/// target gets NULL in all three source slots; source-left is the neighbor
/// of the leftmost aligned word and source-right that of the rightmost.
EncodedExample encode_example(const QEExample& example, const Vocabulary& words, const Vocabulary& pos);

struct Batch {
    std::size_t size = 0;    // B
    std::size_t max_len = 0; // T
    std::vector<std::size_t> example_indices;
    std::vector<std::size_t> lengths;
    // B*T entries, row b*T + t
    std::vector<ContextIds> context;
    std::vector<PosIds> pos;
    std::vector<double> features; // B*T*31, zero rows at padding; empty when absent
    std::vector<int> labels;      // 0 = OK, 1 = BAD; 0 at padding or when absent
    std::vector<std::uint8_t> mask;
    bool has_features = false;
    bool has_labels = false;

    std::size_t rows() const { return size * max_len; }
    std::size_t real_tokens() const;
};

Batch make_batch(const std::vector<EncodedExample>& encoded, std::span<const std::size_t> indices);

/// Groups examples into batches of at most batch_size, optionally shuffled
/// with `rng`; each batch is padded to its own longest sentence.
std::vector<Batch> make_batches(const std::vector<EncodedExample>& encoded, std::size_t batch_size, Rng* rng,
                                bool shuffle);

std::vector<EncodedExample> encode_split(const DatasetSplit& split, const Vocabulary& words, const Vocabulary& pos);

// -------------------------------------------------------------- synthesis

struct SynthOptions {
    std::size_t n_sentences = 100;
    std::size_t vocab_size = 200;
    double error_rate = 0.3;
    std::size_t min_len = 10;
    std::size_t max_len = 30;
    std::size_t n_pos_tags = 8;
    /// Wrong translations per source token; 0 draws any other token.
    std::size_t confusions = 3;
};

/// Synthetic corpus: targets copy their source token (a shared lexicon),
/// aligned diagonally; each target is replaced by a different token with
/// probability error_rate and then labelled BAD. The replacement comes from a
/// fixed per-source confusion set when confusions > 0.
DatasetSplit synth_dataset(const SynthOptions& options, Rng& rng);

/// Synthetic feature row for a target token. Columns 0-3 are the binary
/// stopword / punctuation / proper-noun / digit flags.
FeatureRow synth_features(std::size_t token_index);

} // namespace ceqe::data
