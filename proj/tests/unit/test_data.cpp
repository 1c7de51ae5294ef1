// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "ceqe/data.hpp"
#include "ceqe/errors.hpp"
#include "tempdir.hpp"

namespace ceqe::data {
namespace {

using testing::TempDirTest;

constexpr Label O = Label::Ok;
constexpr Label B = Label::Bad;

template <typename F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::Contract;
}

template <typename F>
std::string message_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

std::string feature_line(std::size_t sent, std::size_t tok, double first = 0.0) {
    std::string line = std::to_string(sent) + "\t" + std::to_string(tok) + "\t" + std::to_string(first);
    for (std::size_t c = 1; c < kNumFeatures; ++c) {
        line += "\t0";
    }
    return line + "\n";
}

// ----------------------------------------------------------------- parsing

using Parsing = TempDirTest;

TEST_F(Parsing, TokensAreLowercased) {
    auto toks = parse_token_file(write("a", "Specify The scope\n"));
    ASSERT_EQ(toks.size(), 1U);
    EXPECT_EQ(toks[0], (TokenList{"specify", "the", "scope"}));
}

TEST_F(Parsing, UnicodeLowercase) {
    auto toks = parse_token_file(write("a", "\xC3\x84PFEL \xCE\xA3\xCE\x9F\xCE\xA6\xCE\x99\xCE\x91\n"));
    EXPECT_EQ(toks[0], (TokenList{"\xC3\xA4pfel", "\xCF\x83\xCE\xBF\xCF\x86\xCE\xB9\xCE\xB1"}));
}

TEST_F(Parsing, PosFilesKeepCase) {
    auto toks = parse_token_file(write("a", "NN VB\n"), false);
    EXPECT_EQ(toks[0], (TokenList{"NN", "VB"}));
}

TEST_F(Parsing, EmptyFileAndEmptyLines) {
    EXPECT_TRUE(parse_token_file(write("a", "")).empty());
    auto toks = parse_token_file(write("b", "a\n\nb\n"));
    ASSERT_EQ(toks.size(), 3U);
    EXPECT_TRUE(toks[1].empty());
}

TEST_F(Parsing, RepeatedWhitespaceCollapses) {
    auto toks = parse_token_file(write("a", "  x   y\t z  \n"));
    EXPECT_EQ(toks[0], (TokenList{"x", "y", "z"}));
}

TEST_F(Parsing, MissingFileIsIoError) {
    EXPECT_EQ(kind_of([&] { parse_token_file(dir_ / "nope"); }), ErrorKind::Io);
    EXPECT_NE(message_of([&] { parse_token_file(dir_ / "nope"); }).find("nope"), std::string::npos);
}

TEST_F(Parsing, Alignments) {
    auto a = parse_alignment_file(write("a", "0-0 1-2 1-3\n\n3-1 3-1\n"));
    ASSERT_EQ(a.size(), 3U);
    EXPECT_EQ(a[0], (Alignment{{0, 0}, {1, 2}, {1, 3}}));
    EXPECT_TRUE(a[1].empty());
    EXPECT_EQ(a[2], (Alignment{{3, 1}}));
}

TEST_F(Parsing, MalformedAlignmentCitesLine) {
    auto path = write("a", "0-0\n1_2\n");
    EXPECT_EQ(kind_of([&] { parse_alignment_file(path); }), ErrorKind::Parse);
    EXPECT_NE(message_of([&] { parse_alignment_file(path); }).find(":2:"), std::string::npos)
        << message_of([&] { parse_alignment_file(path); });
}

TEST_F(Parsing, Tags) {
    auto t = parse_tags_file(write("a", "OK OK BAD OK\nok bad\n"));
    ASSERT_EQ(t.size(), 2U);
    EXPECT_EQ(t[0], (LabelList{O, O, B, O}));
    EXPECT_EQ(t[1], (LabelList{O, B}));
}

TEST_F(Parsing, UnknownTagRejected) {
    auto path = write("a", "OK GOOD\n");
    EXPECT_EQ(kind_of([&] { parse_tags_file(path); }), ErrorKind::Parse);
    EXPECT_NE(message_of([&] { parse_tags_file(path); }).find("GOOD"), std::string::npos);
}

TEST_F(Parsing, FeatureRow) {
    auto f = parse_features_file(write("f", feature_line(0, 0, 1.0) + feature_line(0, 1, 0.37)));
    ASSERT_EQ(f.size(), 1U);
    ASSERT_EQ(f[0].size(), 2U);
    EXPECT_EQ(f[0][0][0], 1.0);
    EXPECT_EQ(f[0][1][0], 0.37);
    EXPECT_EQ(f[0][1][30], 0.0);
}

TEST_F(Parsing, FeatureColumnCount) {
    std::string line = feature_line(0, 0);
    line.insert(line.size() - 1, "\t0");
    EXPECT_EQ(kind_of([&] { parse_features_file(write("f", line)); }), ErrorKind::Parse);
}

TEST_F(Parsing, FeatureGapIsValidationError) {
    auto path = write("f", feature_line(0, 0) + feature_line(0, 2));
    EXPECT_EQ(kind_of([&] { parse_features_file(path); }), ErrorKind::Validation);
}

// -------------------------------------------------------------- vocabulary

DatasetSplit tiny_split(std::vector<TokenList> src, std::vector<TokenList> tgt) {
    DatasetSplit split;
    for (std::size_t i = 0; i < src.size(); ++i) {
        QEExample ex;
        ex.src_tokens = src[i];
        ex.tgt_tokens = tgt[i];
        split.examples.push_back(ex);
    }
    return split;
}

TEST(Vocab, ReservedIds) {
    Vocabulary v;
    EXPECT_EQ(v.size(), Vocabulary::kNumReserved);
    EXPECT_EQ(v.id("anything"), Vocabulary::kUnk);
}

TEST(Vocab, SharedAcrossLanguages) {
    auto v = build_word_vocab(tiny_split({{"7", "haus"}}, {{"house", "7"}}));
    EXPECT_EQ(v.size(), Vocabulary::kNumReserved + 3);
    EXPECT_EQ(v.id("7"), Vocabulary::kNumReserved); // highest count comes first
}

TEST(Vocab, MinCount) {
    auto v = build_word_vocab(tiny_split({{"a", "a", "b"}}, {{"a"}}), 2);
    EXPECT_TRUE(v.contains("a"));
    EXPECT_EQ(v.id("b"), Vocabulary::kUnk);
}

TEST(Vocab, TiesAreLexicographic) {
    auto v = build_word_vocab(tiny_split({{"zeta", "alpha"}}, {{"mid"}}));
    EXPECT_EQ(v.token(5), "alpha");
    EXPECT_EQ(v.token(6), "mid");
    EXPECT_EQ(v.token(7), "zeta");
}

TEST(Vocab, Deterministic) {
    Rng a(5), b(5);
    auto s1 = synth_dataset({}, a);
    auto s2 = synth_dataset({}, b);
    EXPECT_EQ(build_word_vocab(s1), build_word_vocab(s2));
}

TEST(Vocab, Bijection) {
    Rng rng(8);
    auto v = build_word_vocab(synth_dataset({}, rng));
    for (std::size_t i = Vocabulary::kNumReserved; i < v.size(); ++i) {
        EXPECT_EQ(v.id(v.token(i)), i);
    }
}

TEST(Vocab, CorpusCannotProduceReservedNames) {
    Vocabulary base;
    std::vector<TokenList> names{base.tokens()};
    // Text spelling a reserved name is an ordinary unknown word.
    auto v = build_word_vocab(tiny_split(names, names));
    EXPECT_EQ(v.size(), Vocabulary::kNumReserved);
    for (const auto& name : base.tokens()) {
        EXPECT_EQ(v.id(name), Vocabulary::kUnk) << name;
    }
}

// ---------------------------------------------------------------- assembly

using Assembly = TempDirTest;

TEST_F(Assembly, ThreeSentences) {
    write("src", "a b\nc\nd e f\n");
    write("mt", "x y\nz\nu v\n");
    write("align", "0-0 1-1\n0-0\n2-1\n");
    write("tags", "OK BAD\nOK\nBAD BAD\n");
    CorpusPaths p{dir_ / "src", dir_ / "mt", dir_ / "align", dir_ / "tags", {}, {}, {}};
    auto split = assemble_dataset(p, SplitRole::Train);
    ASSERT_EQ(split.examples.size(), 3U);
    EXPECT_EQ(split.examples[2].alignments, (Alignment{{2, 1}}));
    EXPECT_FALSE(split.has_pos());
}

TEST_F(Assembly, LineCountMismatchNamesFiles) {
    write("src", "a\nb\nc\n");
    write("mt", "a\nb\nc\n");
    write("align", "\n\n\n");
    write("tags", "OK\nOK\n");
    CorpusPaths p{dir_ / "src", dir_ / "mt", dir_ / "align", dir_ / "tags", {}, {}, {}};
    EXPECT_EQ(kind_of([&] { assemble_dataset(p, SplitRole::Train); }), ErrorKind::Assembly);
    const auto msg = message_of([&] { assemble_dataset(p, SplitRole::Train); });
    EXPECT_NE(msg.find("tags"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2 lines"), std::string::npos) << msg;
}

TEST_F(Assembly, AlignmentOutOfRange) {
    write("src", "a\na b c d\n");
    write("mt", "x\nx y\n");
    write("align", "0-0\n5-0\n");
    CorpusPaths p{dir_ / "src", dir_ / "mt", dir_ / "align", {}, {}, {}, {}};
    EXPECT_EQ(kind_of([&] { assemble_dataset(p, SplitRole::Test); }), ErrorKind::Validation);
    EXPECT_NE(message_of([&] { assemble_dataset(p, SplitRole::Test); }).find("sentence 1"), std::string::npos);
}

TEST_F(Assembly, EmptyMtSentenceRejected) {
    write("src", "a\n");
    write("mt", "\n");
    write("align", "\n");
    CorpusPaths p{dir_ / "src", dir_ / "mt", dir_ / "align", {}, {}, {}, {}};
    EXPECT_EQ(kind_of([&] { assemble_dataset(p, SplitRole::Test); }), ErrorKind::Validation);
}

TEST_F(Assembly, TrainingNeedsTags) {
    write("src", "a\n");
    write("mt", "b\n");
    write("align", "0-0\n");
    CorpusPaths p{dir_ / "src", dir_ / "mt", dir_ / "align", {}, {}, {}, {}};
    EXPECT_EQ(kind_of([&] { assemble_dataset(p, SplitRole::Validation); }), ErrorKind::Assembly);
    EXPECT_NO_THROW(assemble_dataset(p, SplitRole::Test));
}

TEST_F(Assembly, RoundTrip) {
    Rng rng(11);
    SynthOptions opt;
    opt.n_sentences = 25;
    auto split = synth_dataset(opt, rng);
    auto paths = corpus_paths(dir_, "rt");
    write_dataset(split, paths);
    EXPECT_EQ(assemble_dataset(paths, SplitRole::Train), split);
}

// ---------------------------------------------------------------- batching

std::vector<EncodedExample> encoded_synth(std::size_t n, std::uint64_t seed, Vocabulary* words_out = nullptr) {
    Rng rng(seed);
    SynthOptions opt;
    opt.n_sentences = n;
    auto split = synth_dataset(opt, rng);
    auto words = build_word_vocab(split);
    auto pos = build_pos_vocab(split);
    if (words_out) {
        *words_out = words;
    }
    return encode_split(split, words, pos);
}

TEST(Batching, SeventeenExamples) {
    auto enc = encoded_synth(17, 1);
    auto batches = make_batches(enc, 8, nullptr, false);
    ASSERT_EQ(batches.size(), 3U);
    EXPECT_EQ(batches[0].size, 8U);
    EXPECT_EQ(batches[1].size, 8U);
    EXPECT_EQ(batches[2].size, 1U);
}

TEST(Batching, NoShuffleKeepsOrder) {
    auto batches = make_batches(encoded_synth(17, 1), 8, nullptr, false);
    std::vector<std::size_t> order;
    for (const auto& b : batches) {
        order.insert(order.end(), b.example_indices.begin(), b.example_indices.end());
    }
    std::vector<std::size_t> expected(17);
    std::iota(expected.begin(), expected.end(), 0);
    EXPECT_EQ(order, expected);
}

TEST(Batching, ShuffleIsSeededPermutation) {
    auto enc = encoded_synth(30, 2);
    Rng a(9), b(9);
    auto first = make_batches(enc, 8, &a, true);
    auto second = make_batches(enc, 8, &b, true);
    std::multiset<std::size_t> seen;
    for (std::size_t i = 0; i < first.size(); ++i) {
        EXPECT_EQ(first[i].example_indices, second[i].example_indices);
        seen.insert(first[i].example_indices.begin(), first[i].example_indices.end());
    }
    EXPECT_EQ(seen.size(), 30U);
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), 30U);
}

TEST(Batching, PaddingContract) {
    QEExample a, b;
    a.src_tokens = a.tgt_tokens = {"x", "y", "z"};
    b.src_tokens = b.tgt_tokens = {"x", "y", "z", "x", "y"};
    a.alignments = {{0, 0}};
    a.labels = LabelList{B, O, O};
    b.labels = LabelList{O, O, O, O, B};
    a.features = FeatureMatrix(3, FeatureRow{});
    b.features = FeatureMatrix(5, FeatureRow{});
    (*a.features)[0].fill(1.0);
    DatasetSplit split;
    split.examples = {a, b};
    auto words = build_word_vocab(split);
    auto batch = make_batches(encode_split(split, words, Vocabulary{}), 8, nullptr, false).at(0);
    EXPECT_EQ(batch.max_len, 5U);
    EXPECT_EQ(batch.rows(), 10U);
    EXPECT_EQ(batch.mask, (std::vector<std::uint8_t>{1, 1, 1, 0, 0, 1, 1, 1, 1, 1}));
    EXPECT_EQ(batch.labels, (std::vector<int>{1, 0, 0, 0, 0, 0, 0, 0, 0, 1}));
    ASSERT_EQ(batch.features.size(), 10 * kNumFeatures);
    EXPECT_EQ(batch.features[0], 1.0);
    for (std::size_t r : {3, 4}) {
        EXPECT_EQ(batch.context[r].tgt, Vocabulary::kPad);
        for (std::size_t c = 0; c < kNumFeatures; ++c) {
            EXPECT_EQ(batch.features[r * kNumFeatures + c], 0.0);
        }
    }
    EXPECT_EQ(batch.real_tokens(), 8U);
}

TEST(Batching, ContextSlots) {
    QEExample ex;
    ex.src_tokens = {"s0", "s1", "s2", "s3"};
    ex.tgt_tokens = {"t0", "t1", "t2"};
    ex.alignments = {{1, 0}, {2, 0}, {3, 2}};
    DatasetSplit split;
    split.examples = {ex};
    auto w = build_word_vocab(split);
    auto enc = encode_example(ex, w, Vocabulary{});
    const auto& c0 = enc.context[0];
    EXPECT_EQ(c0.tgt_prev, Vocabulary::kBos);
    EXPECT_EQ(c0.tgt, w.id("t0"));
    EXPECT_EQ(c0.tgt_next, w.id("t1"));
    EXPECT_EQ(c0.src_left, w.id("s0"));
    EXPECT_EQ(c0.src_aligned, (std::vector<std::size_t>{w.id("s1"), w.id("s2")}));
    EXPECT_EQ(c0.src_right, w.id("s3"));
    const auto& c1 = enc.context[1];
    EXPECT_EQ(c1.src_left, Vocabulary::kNull);
    EXPECT_EQ(c1.src_aligned, (std::vector<std::size_t>{Vocabulary::kNull}));
    EXPECT_EQ(c1.src_right, Vocabulary::kNull);
    const auto& c2 = enc.context[2];
    EXPECT_EQ(c2.tgt_next, Vocabulary::kEos);
    EXPECT_EQ(c2.src_left, w.id("s2"));
    EXPECT_EQ(c2.src_right, Vocabulary::kEos);
}

TEST(Batching, MaskCountMatchesTokenCount) {
    Rng rng(4);
    SynthOptions opt;
    opt.n_sentences = 53;
    auto split = synth_dataset(opt, rng);
    auto enc = encode_split(split, build_word_vocab(split), build_pos_vocab(split));
    Rng shuf(1);
    std::size_t real = 0;
    for (const auto& b : make_batches(enc, 8, &shuf, true)) {
        real += std::accumulate(b.mask.begin(), b.mask.end(), std::size_t{0});
    }
    EXPECT_EQ(real, split.token_count());
}

TEST(Batching, ReservedIdsOnlyWhereMeant) {
    Vocabulary words;
    auto enc = encoded_synth(40, 6, &words);
    for (const auto& ex : enc) {
        for (const auto& c : ex.context) {
            EXPECT_GE(c.tgt, Vocabulary::kNumReserved);
            for (std::size_t id : c.src_aligned) {
                EXPECT_GE(id, Vocabulary::kNumReserved); // synthetic data is fully aligned
            }
        }
    }
}

// ---------------------------------------------------------------- synthesis

TEST(Synth, ErrorRateZeroAndOne) {
    for (double rate : {0.0, 1.0}) {
        Rng rng(3);
        SynthOptions opt;
        opt.error_rate = rate;
        for (const auto& ex : synth_dataset(opt, rng).examples) {
            for (Label l : *ex.labels) {
                EXPECT_EQ(l, rate == 0.0 ? O : B);
            }
        }
    }
}

TEST(Synth, BadPositionsAreSubstitutions) {
    for (std::size_t confusions : {0, 3}) {
        Rng rng(12);
        SynthOptions opt;
        opt.confusions = confusions;
        for (const auto& ex : synth_dataset(opt, rng).examples) {
            for (std::size_t i = 0; i < ex.tgt_tokens.size(); ++i) {
                const bool substituted = ex.tgt_tokens[i] != ex.src_tokens[i];
                EXPECT_EQ((*ex.labels)[i] == B, substituted);
            }
        }
    }
}

TEST(Synth, BadFractionNearErrorRate) {
    for (double rate : {0.1, 0.3, 0.6}) {
        Rng rng(77);
        SynthOptions opt;
        opt.error_rate = rate;
        opt.n_sentences = 600; // > 10^4 tokens
        auto split = synth_dataset(opt, rng);
        std::size_t bad = 0;
        for (const auto& ex : split.examples) {
            bad += std::count(ex.labels->begin(), ex.labels->end(), B);
        }
        ASSERT_GE(split.token_count(), 10000U);
        EXPECT_NEAR(static_cast<double>(bad) / static_cast<double>(split.token_count()), rate, 0.02);
    }
}

TEST(Synth, ConfusionSetsAreSmall) {
    Rng rng(5);
    SynthOptions opt;
    opt.n_sentences = 400;
    opt.confusions = 3;
    std::map<std::string, std::set<std::string>> wrong;
    for (const auto& ex : synth_dataset(opt, rng).examples) {
        for (std::size_t i = 0; i < ex.tgt_tokens.size(); ++i) {
            if ((*ex.labels)[i] == B) {
                wrong[ex.src_tokens[i]].insert(ex.tgt_tokens[i]);
            }
        }
    }
    ASSERT_FALSE(wrong.empty());
    for (const auto& [src, targets] : wrong) {
        EXPECT_LE(targets.size(), 3U) << src;
    }
}

TEST(Synth, FeatureFlagsAndPos) {
    Rng rng(1);
    auto split = synth_dataset({}, rng);
    const auto& ex = split.examples[0];
    ASSERT_TRUE(ex.features.has_value());
    EXPECT_EQ(ex.tgt_pos.size(), ex.tgt_tokens.size());
    for (std::size_t i = 0; i < ex.tgt_tokens.size(); ++i) {
        for (std::size_t c = 0; c < 4; ++c) {
            const double v = (*ex.features)[i][c];
            EXPECT_TRUE(v == 0.0 || v == 1.0);
        }
    }
    EXPECT_EQ(synth_features(3)[0], 1.0);
    EXPECT_EQ(synth_features(3)[2], 1.0);
    EXPECT_EQ(synth_features(14)[1], 1.0);
    EXPECT_EQ(synth_features(16)[3], 1.0);
}

TEST(Synth, PassesValidation) {
    Rng rng(21);
    auto split = synth_dataset({}, rng);
    for (std::size_t i = 0; i < split.examples.size(); ++i) {
        EXPECT_NO_THROW(validate_example(split.examples[i], i));
    }
}

} // namespace
} // namespace ceqe::data
