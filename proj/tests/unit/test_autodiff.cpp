// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "ceqe/errors.hpp"
#include "ceqe/ops.hpp"
#include "ceqe/optim.hpp"
#include "gradcheck.hpp"

namespace ceqe::ad {
namespace {

using testing::grad_check;

constexpr double kGradTol = 1e-4;

Tensor var(Shape shape, std::vector<double> v) {
    return Tensor::variable(std::move(shape), std::move(v));
}

Tensor random_var(Shape shape, Rng& rng, double scale = 1.0) {
    std::vector<double> v(shape_size(shape));
    for (double& x : v) {
        x = rng.normal(0.0, scale);
    }
    return Tensor::variable(std::move(shape), std::move(v));
}

// Fixed weights make the scalar probe sensitive to every output element.
Tensor probe(const Tensor& y) {
    std::vector<double> w(y.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = 0.3 + 0.17 * static_cast<double>(i % 7) - 0.05 * static_cast<double>(i % 3);
    }
    return sum(mul(y, Tensor::constant(y.shape(), std::move(w))));
}

std::vector<double> vals(const Tensor& t) {
    return {t.values().begin(), t.values().end()};
}

std::vector<double> grads(const Tensor& t) {
    return {t.grad().begin(), t.grad().end()};
}

// ---------------------------------------------------------------- affine

TEST(Affine, IdentityWeights) {
    auto y = affine(var({1, 2}, {1, 2}), var({2, 2}, {1, 0, 0, 1}), var({2}, {0, 0}));
    EXPECT_EQ(vals(y), (std::vector<double>{1, 2}));
}

TEST(Affine, HandArithmetic) {
    auto y = affine(var({1, 2}, {1, 2}), var({2, 2}, {1, 1, 1, 1}), var({2}, {1, -1}));
    EXPECT_EQ(vals(y), (std::vector<double>{4, 2}));
}

TEST(Affine, BiasGradientCountsRows) {
    auto b = var({3}, {0.1, 0.2, 0.3});
    Rng rng(1);
    auto y = affine(random_var({4, 2}, rng), random_var({2, 3}, rng), b);
    backward(sum(y));
    EXPECT_EQ(grads(b), (std::vector<double>{4, 4, 4}));
}

TEST(Affine, ShapeMismatchNamesBothShapes) {
    try {
        affine(var({1, 3}, {1, 2, 3}), var({2, 2}, {1, 0, 0, 1}), var({2}, {0, 0}));
        FAIL() << "expected a dimension error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Dimension);
        EXPECT_NE(std::string(e.what()).find("[1x3]"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("[2x2]"), std::string::npos) << e.what();
    }
}

TEST(Affine, GradCheck) {
    Rng rng(2);
    auto x = random_var({5, 4}, rng);
    auto w = random_var({4, 7}, rng);
    auto b = random_var({7}, rng);
    auto r = grad_check({x, w, b}, [&] { return probe(affine(x, w, b)); });
    EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

// ------------------------------------------------------- elementwise ops

TEST(Relu, Forward) {
    EXPECT_EQ(vals(relu(var({3}, {-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
}

TEST(Relu, AllNegativeGivesZeroOutputAndGradient) {
    auto x = var({4}, {-1, -2, -0.5, -3});
    auto y = relu(x);
    backward(sum(y));
    EXPECT_EQ(vals(y), (std::vector<double>(4, 0.0)));
    EXPECT_EQ(grads(x), (std::vector<double>(4, 0.0)));
}

TEST(Relu, GradientAtThreeIsUpstream) {
    auto x = var({1}, {3.0});
    backward(sum(mul(relu(x), Tensor::constant({1}, {2.5}))));
    EXPECT_DOUBLE_EQ(x.grad()[0], 2.5);
    EXPECT_LT(grad_check({x}, [&] { return probe(relu(x)); }).max_rel_error, kGradTol);
}

TEST(Relu, GradCheckAwayFromKink) {
    Rng rng(3);
    std::vector<double> v(35);
    for (double& x : v) {
        x = rng.normal(0.0, 1.0);
        if (std::abs(x) < 0.05) {
            x = 0.5;
        }
    }
    auto x = var({5, 7}, v);
    auto r = grad_check({x}, [&] { return probe(relu(x)); });
    EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

TEST(Sigmoid, ZeroAndSymmetry) {
    EXPECT_DOUBLE_EQ(sigmoid(var({1}, {0.0})).item(), 0.5);
    EXPECT_DOUBLE_EQ(tanh_op(var({1}, {0.0})).item(), 0.0);
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        const double x = rng.normal(0.0, 5.0);
        const double a = sigmoid(var({1}, {x})).item();
        const double b = sigmoid(var({1}, {-x})).item();
        EXPECT_NEAR(b, 1.0 - a, 1e-15);
    }
}

TEST(Sigmoid, ExtremeInputsStayFinite) {
    auto y = sigmoid(var({2}, {-800.0, 800.0}));
    EXPECT_EQ(vals(y), (std::vector<double>{0.0, 1.0}));
}

TEST(Sigmoid, GradientsAtSamplePoints) {
    for (double x0 : {-2.0, 0.0, 2.0}) {
        auto x = var({1}, {x0});
        EXPECT_LT(grad_check({x}, [&] { return probe(sigmoid(x)); }).max_rel_error, 1e-6);
        EXPECT_LT(grad_check({x}, [&] { return probe(tanh_op(x)); }).max_rel_error, 1e-6);
    }
}

TEST(Sigmoid, GradCheckRandom) {
    Rng rng(5);
    auto x = random_var({4, 6}, rng, 2.0);
    EXPECT_LT(grad_check({x}, [&] { return probe(sigmoid(x)); }).max_rel_error, kGradTol);
    EXPECT_LT(grad_check({x}, [&] { return probe(tanh_op(x)); }).max_rel_error, kGradTol);
}

TEST(MulAdd, GradCheck) {
    Rng rng(6);
    auto a = random_var({3, 5}, rng);
    auto b = random_var({3, 5}, rng);
    EXPECT_LT(grad_check({a, b}, [&] { return probe(mul(a, b)); }).max_rel_error, kGradTol);
    EXPECT_LT(grad_check({a, b}, [&] { return probe(add(a, b)); }).max_rel_error, kGradTol);
}

TEST(Matmul, GradCheck) {
    Rng rng(7);
    auto a = random_var({3, 5}, rng);
    auto w = random_var({5, 2}, rng);
    EXPECT_LT(grad_check({a, w}, [&] { return probe(matmul(a, w)); }).max_rel_error, kGradTol);
}

// ---------------------------------------------------------------- concat

TEST(Concat, SingleInputIsIdentity) {
    auto x = var({2, 2}, {1, 2, 3, 4});
    auto y = concat({x}, 1);
    EXPECT_EQ(y.shape(), x.shape());
    EXPECT_EQ(vals(y), vals(x));
}

TEST(Concat, Columns) {
    auto y = concat({var({2, 1}, {1, 2}), var({2, 1}, {3, 4})}, 1);
    EXPECT_EQ(y.shape(), (Shape{2, 2}));
    EXPECT_EQ(vals(y), (std::vector<double>{1, 3, 2, 4}));
}

TEST(Concat, IncompatibleShapes) {
    EXPECT_THROW(concat({var({2, 1}, {1, 2}), var({3, 1}, {3, 4, 5})}, 1), Error);
}

TEST(Concat, GradCheckBothAxes) {
    Rng rng(8);
    auto a = random_var({3, 2}, rng);
    auto b = random_var({3, 4}, rng);
    auto c = random_var({1, 2}, rng);
    EXPECT_LT(grad_check({a, b}, [&] { return probe(concat({a, b}, 1)); }).max_rel_error, kGradTol);
    EXPECT_LT(grad_check({a, c}, [&] { return probe(concat({a, c}, 0)); }).max_rel_error, kGradTol);
}

TEST(SliceGather, GradCheck) {
    Rng rng(9);
    auto x = random_var({4, 5}, rng);
    std::vector<std::size_t> rows{3, 0, 3, 1};
    EXPECT_LT(grad_check({x}, [&] { return probe(slice_cols(x, 1, 4)); }).max_rel_error, kGradTol);
    EXPECT_LT(grad_check({x}, [&] { return probe(gather_rows(x, rows)); }).max_rel_error, kGradTol);
}

// ------------------------------------------------------------- embedding

TEST(Embedding, FirstRow) {
    auto table = var({3, 2}, {1, 2, 3, 4, 5, 6});
    std::vector<std::size_t> ids{0};
    EXPECT_EQ(vals(embedding_lookup(table, ids)), (std::vector<double>{1, 2}));
}

TEST(Embedding, RepeatedIdsAccumulate) {
    auto table = var({4, 2}, std::vector<double>(8, 0.5));
    std::vector<std::size_t> ids{3, 3};
    auto y = embedding_lookup(table, ids);
    backward(sum(mul(y, Tensor::constant({2, 2}, {1.5, -2, 1.5, -2}))));
    EXPECT_EQ(grads(table), (std::vector<double>{0, 0, 0, 0, 0, 0, 3, -4}));
}

TEST(Embedding, EmptyIdList) {
    auto table = var({4, 3}, std::vector<double>(12, 1.0));
    auto y = embedding_lookup(table, std::span<const std::size_t>{});
    EXPECT_EQ(y.shape(), (Shape{0, 3}));
}

TEST(Embedding, OutOfRangeNamesId) {
    auto table = var({4, 3}, std::vector<double>(12, 1.0));
    std::vector<std::size_t> ids{1, 17};
    try {
        embedding_lookup(table, ids);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Index);
        EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
    }
}

TEST(Embedding, GradCheck) {
    Rng rng(10);
    auto table = random_var({5, 3}, rng);
    std::vector<std::size_t> ids{4, 0, 4, 2};
    EXPECT_LT(grad_check({table}, [&] { return probe(embedding_lookup(table, ids)); }).max_rel_error, kGradTol);
}

TEST(EmbeddingMean, MatchesLookupThenMean) {
    Rng rng(11);
    auto table = random_var({6, 4}, rng);
    std::vector<std::vector<std::size_t>> bags{{2}, {1, 5}, {3, 3, 0}};
    auto fused = embedding_mean(table, bags);
    for (std::size_t i = 0; i < bags.size(); ++i) {
        auto ref = mean_rows(embedding_lookup(table, bags[i]));
        for (std::size_t c = 0; c < 4; ++c) {
            EXPECT_NEAR(fused.at(i, c), ref.at(0, c), 1e-15);
        }
    }
    EXPECT_LT(grad_check({table}, [&] { return probe(embedding_mean(table, bags)); }).max_rel_error, kGradTol);
}

TEST(EmbeddingMean, OrderIndependentExactly) {
    Rng rng(12);
    auto table = random_var({6, 4}, rng);
    std::vector<std::vector<std::size_t>> a{{1, 5, 2}};
    std::vector<std::vector<std::size_t>> b{{2, 1, 5}};
    EXPECT_EQ(vals(embedding_mean(table, a)), vals(embedding_mean(table, b)));
}

// ------------------------------------------------------------- mean_rows

TEST(MeanRows, SingleRowUnchanged) {
    auto x = var({1, 3}, {1, -2, 5});
    EXPECT_EQ(vals(mean_rows(x)), vals(x));
}

TEST(MeanRows, TwoRows) {
    EXPECT_EQ(vals(mean_rows(var({2, 2}, {1, 3, 3, 5}))), (std::vector<double>{2, 4}));
}

TEST(MeanRows, EmptyIsContractViolation) {
    try {
        mean_rows(var({0, 3}, {}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Contract);
    }
}

TEST(MeanRows, GradientIsUpstreamOverK) {
    auto x = var({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    backward(sum(mean_rows(x)));
    EXPECT_EQ(grads(x), (std::vector<double>(8, 0.25)));
    EXPECT_LT(grad_check({x}, [&] { return probe(mean_rows(x)); }).max_rel_error, kGradTol);
}

// ------------------------------------------------------------ masking ops

TEST(MaskOps, GradCheck) {
    Rng rng(13);
    auto a = random_var({4, 3}, rng);
    auto b = random_var({4, 3}, rng);
    auto z = Tensor::variable({4, 3}, std::vector<double>{0.1, 0.5, 0.9, 0.3, 0.2, 0.7, 0.6, 0.4, 0.8, 0.35, 0.65, 0.15});
    std::vector<std::uint8_t> mask{1, 0, 1, 0};
    EXPECT_LT(grad_check({a}, [&] { return probe(mask_rows(a, mask)); }).max_rel_error, kGradTol);
    EXPECT_LT(grad_check({a, b}, [&] { return probe(where_rows(mask, a, b)); }).max_rel_error, kGradTol);
    EXPECT_LT(grad_check({z, a, b}, [&] { return probe(gate_blend(z, a, b)); }).max_rel_error, kGradTol);
}

// ------------------------------------------------------------------ conv

TEST(Conv, WidthOneHandArithmetic) {
    auto x = var({3, 2}, {5, 9, -2, 9, 7, 9});
    auto y = conv1d_same(x, var({1, 1, 2}, {1, 0}), var({1}, {0}), 1);
    EXPECT_EQ(vals(y), (std::vector<double>{5, 0, 7}));
}

TEST(Conv, ZeroFiltersGiveZeros) {
    Rng rng(14);
    auto y = conv1d_same(random_var({5, 3}, rng), var({2, 3, 3}, std::vector<double>(18, 0.0)),
                         var({2}, {0, 0}), 3);
    EXPECT_EQ(vals(y), std::vector<double>(10, 0.0));
}

TEST(Conv, SingleTokenSeesOnlyCenterTap) {
    // filters[f][u][v]: u = 0 left neighbour, 1 centre, 2 right neighbour
    auto x = var({1, 2}, {2.0, -1.0});
    auto filters = var({1, 3, 2}, {10, 10, 0.5, 3.0, 10, 10});
    auto y = conv1d_same(x, filters, var({1}, {0.25}), 3);
    EXPECT_DOUBLE_EQ(y.item(), std::max(0.0, 0.5 * 2.0 + 3.0 * -1.0 + 0.25));
    auto y2 = conv1d_same(x, var({1, 3, 2}, {10, 10, 2.0, 1.0, 10, 10}), var({1}, {0.25}), 3);
    EXPECT_DOUBLE_EQ(y2.item(), 2.0 * 2.0 - 1.0 + 0.25);
}

TEST(Conv, EvenWidthIsConfigError) {
    try {
        conv1d_same(var({2, 1}, {1, 2}), var({1, 2, 1}, {1, 1}), var({1}, {0}), 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Config);
    }
}

TEST(Conv, EmptyInputGivesEmptyOutput) {
    auto y = conv1d_same(var({0, 2}, {}), var({3, 1, 2}, std::vector<double>(6, 1.0)), var({3}, {0, 0, 0}), 1);
    EXPECT_EQ(y.shape(), (Shape{0, 3}));
}

TEST(Conv, OutputLengthEqualsInputLength) {
    Rng rng(15);
    for (std::size_t h : {1, 3, 5, 7}) {
        for (std::size_t n = 1; n <= 9; ++n) {
            auto y = conv1d_same(random_var({n, 2}, rng), random_var({3, h, 2}, rng), random_var({3}, rng), h);
            EXPECT_EQ(y.shape(), (Shape{n, 3})) << "h=" << h << " n=" << n;
        }
    }
}

TEST(Conv, SegmentsDoNotLeak) {
    // Two stacked sequences of length 3 convolve exactly like separate calls.
    Rng rng(16);
    auto x = random_var({6, 2}, rng);
    auto f = random_var({2, 5, 2}, rng);
    auto b = random_var({2}, rng);
    auto joint = conv1d_same(x, f, b, 5, 3);
    std::vector<std::size_t> first{0, 1, 2}, second{3, 4, 5};
    auto a = conv1d_same(gather_rows(x, first), f, b, 5);
    auto c = conv1d_same(gather_rows(x, second), f, b, 5);
    auto expected = vals(concat({a, c}, 0));
    EXPECT_EQ(vals(joint), expected);
}

TEST(Conv, GradCheck) {
    Rng rng(17);
    for (std::size_t h : {1, 3, 5}) {
        auto x = random_var({5, 3}, rng);
        auto f = random_var({2, h, 3}, rng, 0.5);
        auto b = var({2}, {0.3, 0.2});
        auto r = grad_check({x, f, b}, [&] { return probe(conv1d_same(x, f, b, h)); });
        EXPECT_LT(r.max_rel_error, kGradTol) << "h=" << h << " " << r.worst;
    }
}

// ------------------------------------------------------------ layer_norm

TEST(LayerNorm, ConstantRowBecomesZero) {
    auto y = layer_norm(var({1, 3}, {4, 4, 4}), var({3}, {1, 1, 1}), var({3}, {0, 0, 0}), 1e-5);
    EXPECT_EQ(vals(y), std::vector<double>(3, 0.0));
}

TEST(LayerNorm, TwoElementRow) {
    auto y = layer_norm(var({1, 2}, {1, 3}), var({2}, {1, 1}), var({2}, {0, 0}), 1e-14);
    EXPECT_NEAR(y.at(0, 0), -1.0, 1e-12);
    EXPECT_NEAR(y.at(0, 1), 1.0, 1e-12);
}

TEST(LayerNorm, RowsAreStandardized) {
    Rng rng(18);
    const std::size_t d = 9;
    auto x = random_var({20, d}, rng, 3.0);
    auto y = layer_norm(x, var({d}, std::vector<double>(d, 1.0)), var({d}, std::vector<double>(d, 0.0)), 1e-12);
    for (std::size_t r = 0; r < 20; ++r) {
        double mean = 0.0, var2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            mean += y.at(r, c);
        }
        mean /= d;
        for (std::size_t c = 0; c < d; ++c) {
            var2 += (y.at(r, c) - mean) * (y.at(r, c) - mean);
        }
        var2 /= d;
        EXPECT_NEAR(mean, 0.0, 1e-9);
        EXPECT_NEAR(var2, 1.0, 1e-6);
    }
}

TEST(LayerNorm, GradCheck) {
    Rng rng(19);
    auto x = random_var({4, 5}, rng);
    auto g = random_var({5}, rng);
    auto s = random_var({5}, rng);
    auto r = grad_check({x, g, s}, [&] { return probe(layer_norm(x, g, s, 1e-5)); });
    EXPECT_LT(r.max_rel_error, kGradTol) << r.worst;
}

// --------------------------------------------------------------- dropout

TEST(Dropout, ZeroRateIsIdentity) {
    Rng rng(20);
    auto x = random_var({3, 3}, rng);
    EXPECT_EQ(vals(dropout(x, 0.0, true, rng)), vals(x));
    EXPECT_EQ(vals(dropout(x, 0.0, false, rng)), vals(x));
}

TEST(Dropout, InferenceIsBitwiseIdentity) {
    Rng rng(21);
    auto x = random_var({7, 5}, rng);
    const Rng before = rng;
    auto y = dropout(x, 0.3, false, rng);
    EXPECT_EQ(std::memcmp(y.values().data(), x.values().data(), x.size() * sizeof(double)), 0);
    EXPECT_TRUE(rng == before);
}

TEST(Dropout, ZeroFractionAndScaling) {
    Rng rng(22);
    const std::size_t n = 100000;
    auto x = var({n}, std::vector<double>(n, 1.0));
    auto y = dropout(x, 0.3, true, rng);
    std::size_t zeros = 0;
    for (double v : y.values()) {
        if (v == 0.0) {
            ++zeros;
        } else {
            EXPECT_DOUBLE_EQ(v, 1.0 / 0.7);
        }
    }
    EXPECT_NEAR(static_cast<double>(zeros) / n, 0.3, 0.01);
}

TEST(Dropout, RateOfOneRejected) {
    Rng rng(23);
    auto x = var({2}, {1, 2});
    EXPECT_THROW(dropout(x, 1.0, true, rng), Error);
    EXPECT_THROW(dropout(x, -0.1, true, rng), Error);
}

TEST(Dropout, BackwardUsesSameMask) {
    Rng rng(24);
    auto x = random_var({4, 4}, rng);
    Rng a(99);
    auto y = dropout(x, 0.5, true, a);
    backward(sum(y));
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_DOUBLE_EQ(x.grad()[i], y.values()[i] == 0.0 ? 0.0 : 2.0);
    }
    auto r = grad_check({x}, [&] {
        Rng fixed(99);
        return probe(dropout(x, 0.5, true, fixed));
    });
    EXPECT_LT(r.max_rel_error, kGradTol);
}

// ----------------------------------------------------------- softmax_xent

TEST(SoftmaxXent, EvenLogits) {
    std::vector<int> labels{0};
    std::vector<std::uint8_t> mask{1};
    auto r = softmax_xent(var({1, 2}, {0, 0}), labels, mask);
    EXPECT_DOUBLE_EQ(r.probs.at(0, 0), 0.5);
    EXPECT_NEAR(r.loss.item(), std::log(2.0), 1e-15);
}

TEST(SoftmaxXent, LargeMargin) {
    std::vector<int> labels{1};
    std::vector<std::uint8_t> mask{1};
    auto r = softmax_xent(var({1, 2}, {0, 10}), labels, mask);
    EXPECT_LT(r.loss.item(), 1e-4);
    EXPECT_NEAR(r.loss.item(), std::log1p(std::exp(-10.0)), 1e-15);
}

TEST(SoftmaxXent, MaskedRowsDropOut) {
    Rng rng(25);
    auto logits = random_var({4, 2}, rng);
    std::vector<int> labels{0, 1, 1, 0};
    std::vector<std::uint8_t> mask{1, 0, 1, 0};
    auto full = softmax_xent(logits, labels, mask);
    std::vector<std::size_t> keep{0, 2};
    std::vector<int> sub_labels{0, 1};
    std::vector<std::uint8_t> all{1, 1};
    auto sub = softmax_xent(gather_rows(logits, keep), sub_labels, all);
    EXPECT_DOUBLE_EQ(full.loss.item(), sub.loss.item());
    EXPECT_EQ(full.n_tokens, 2U);
    backward(full.loss);
    EXPECT_EQ(logits.grad()[2], 0.0);
    EXPECT_EQ(logits.grad()[3], 0.0);
}

TEST(SoftmaxXent, NoRealTokens) {
    std::vector<int> labels{0};
    std::vector<std::uint8_t> mask{0};
    try {
        softmax_xent(var({1, 2}, {0, 0}), labels, mask);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Contract);
    }
}

TEST(SoftmaxXent, ProbsSumToOne) {
    Rng rng(26);
    auto logits = random_var({50, 2}, rng, 30.0);
    std::vector<int> labels(50, 1);
    std::vector<std::uint8_t> mask(50, 1);
    auto r = softmax_xent(logits, labels, mask);
    for (std::size_t i = 0; i < 50; ++i) {
        EXPECT_NEAR(r.probs.at(i, 0) + r.probs.at(i, 1), 1.0, 1e-12);
    }
}

TEST(SoftmaxXent, GradCheck) {
    Rng rng(27);
    auto logits = random_var({5, 2}, rng);
    std::vector<int> labels{0, 1, 1, 0, 1};
    std::vector<std::uint8_t> mask{1, 1, 0, 1, 1};
    auto r = grad_check({logits}, [&] { return softmax_xent(logits, labels, mask).loss; });
    EXPECT_LT(r.max_rel_error, kGradTol);
}

// -------------------------------------------------------------- backward

TEST(Backward, SumGivesOnes) {
    auto x = var({3}, {1, 2, 3});
    backward(sum(x));
    EXPECT_EQ(grads(x), (std::vector<double>{1, 1, 1}));
}

TEST(Backward, SquareGivesTwoX) {
    auto x = var({2}, {1, 2});
    backward(sum(mul(x, x)));
    EXPECT_EQ(grads(x), (std::vector<double>{2, 4}));
}

TEST(Backward, RepeatedCallsAccumulate) {
    auto x = var({2}, {1, 2});
    auto loss = sum(mul(x, x));
    backward(loss);
    backward(loss);
    EXPECT_EQ(grads(x), (std::vector<double>{4, 8}));
}

TEST(Backward, NonScalarRejected) {
    auto x = var({2}, {1, 2});
    try {
        backward(x);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Contract);
    }
}

TEST(Backward, ConstantsNeverAccumulate) {
    auto c = Tensor::constant({2}, {1, 2});
    auto x = var({2}, {3, 4});
    backward(sum(mul(c, x)));
    EXPECT_TRUE(c.grad().empty());
    EXPECT_FALSE(c.requires_grad());
}

TEST(Backward, SharedSubgraphVisitedOnce) {
    auto x = var({1}, {3.0});
    auto y = mul(x, x);
    backward(sum(add(y, y))); // d/dx 2x^2 = 4x
    EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

// ------------------------------------------------------------- optimizer

Parameter param_with_grad(std::vector<double> values, std::vector<double> grad) {
    Parameter p("p", {values.size()});
    std::copy(values.begin(), values.end(), p.tensor.mutable_values().begin());
    p.tensor.node()->ensure_grad() = std::move(grad);
    return p;
}

TEST(Clip, BelowLimitUnchanged) {
    auto p = param_with_grad({0, 0}, {0, 3});
    Parameter* ps[] = {&p};
    EXPECT_DOUBLE_EQ(clip_global_norm(ps, 5.0), 3.0);
    EXPECT_EQ(grads(p.tensor), (std::vector<double>{0, 3}));
}

TEST(Clip, BoundaryUnchanged) {
    auto p = param_with_grad({0, 0}, {3, 4});
    Parameter* ps[] = {&p};
    EXPECT_DOUBLE_EQ(clip_global_norm(ps, 5.0), 5.0);
    EXPECT_EQ(grads(p.tensor), (std::vector<double>{3, 4}));
}

TEST(Clip, ScalesDown) {
    auto p = param_with_grad({0, 0}, {6, 8});
    Parameter* ps[] = {&p};
    EXPECT_DOUBLE_EQ(clip_global_norm(ps, 5.0), 10.0);
    EXPECT_EQ(grads(p.tensor), (std::vector<double>{3, 4}));
}

TEST(Clip, Idempotent) {
    Rng rng(28);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> g1(6), g2(3);
        for (double& g : g1) {
            g = rng.normal(0.0, 4.0);
        }
        for (double& g : g2) {
            g = rng.normal(0.0, 4.0);
        }
        auto a = param_with_grad(std::vector<double>(6, 0.0), g1);
        auto b = param_with_grad(std::vector<double>(3, 0.0), g2);
        Parameter* ps[] = {&a, &b};
        clip_global_norm(ps, 5.0);
        const auto once_a = grads(a.tensor);
        const auto once_b = grads(b.tensor);
        clip_global_norm(ps, 5.0);
        for (std::size_t i = 0; i < once_a.size(); ++i) {
            EXPECT_NEAR(a.tensor.grad()[i], once_a[i], 1e-15);
        }
        for (std::size_t i = 0; i < once_b.size(); ++i) {
            EXPECT_NEAR(b.tensor.grad()[i], once_b[i], 1e-15);
        }
        EXPECT_LE(global_grad_norm(ps), 5.0 + 1e-12);
    }
}

TEST(Adam, FirstStepMovesByLr) {
    auto p = param_with_grad({1.0, -2.0, 0.5}, {0.3, -7.0, 1e-3});
    Parameter* ps[] = {&p};
    adam_step(ps, 0.001);
    EXPECT_NEAR(p.tensor.values()[0], 1.0 - 0.001, 1e-8);
    EXPECT_NEAR(p.tensor.values()[1], -2.0 + 0.001, 1e-8);
    EXPECT_NEAR(p.tensor.values()[2], 0.5 - 0.001, 1e-7);
    EXPECT_EQ(p.step_count, 1U);
    for (double g : p.tensor.grad()) {
        EXPECT_EQ(g, 0.0);
    }
}

TEST(Adam, ZeroGradientLeavesParameters) {
    auto p = param_with_grad({1.0, 2.0}, {0.0, 0.0});
    Parameter* ps[] = {&p};
    adam_step(ps, 0.1);
    EXPECT_EQ(vals(p.tensor), (std::vector<double>{1.0, 2.0}));
}

TEST(Adam, ScalarQuadraticConverges) {
    Parameter p("theta", {1});
    p.tensor.mutable_values()[0] = 1.0;
    Parameter* ps[] = {&p};
    for (int i = 0; i < 200; ++i) {
        backward(sum(mul(p.tensor, p.tensor)));
        adam_step(ps, 0.1);
    }
    EXPECT_LT(std::abs(p.tensor.values()[0]), 0.05);
}

TEST(Engine, SameSeedSameParameters) {
    auto run = [] {
        Rng rng(31);
        Parameter w("w", {3, 2});
        Parameter b("b", {2});
        for (double& v : w.tensor.mutable_values()) {
            v = rng.normal(0.0, 1.0);
        }
        Parameter* ps[] = {&w, &b};
        for (int step = 0; step < 25; ++step) {
            auto x = random_var({4, 3}, rng);
            auto h = dropout(relu(affine(x, w.tensor, b.tensor)), 0.3, true, rng);
            backward(probe(h));
            clip_global_norm(ps, 5.0);
            adam_step(ps, 0.01);
        }
        return std::make_pair(vals(w.tensor), vals(b.tensor));
    };
    auto a = run();
    auto b = run();
    EXPECT_EQ(a, b);
}

TEST(Rng, CounterStateRoundTrips) {
    Rng a(5);
    for (int i = 0; i < 10; ++i) {
        a.next_u64();
    }
    Rng b(a.seed(), a.counter());
    for (int i = 0; i < 10; ++i) {
        EXPECT_EQ(a.next_u64(), b.next_u64());
    }
}

} // namespace
} // namespace ceqe::ad
