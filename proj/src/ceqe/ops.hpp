// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations used by the CEQE network. Matrices are rank-2
// tensors in row-major order; a batch of sequences is stored as B*T rows
// with row b*T + t holding position t of sequence b.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ceqe/rng.hpp"
#include "ceqe/tensor.hpp"

namespace ceqe::ad {

/// x[N x a] * W[a x b] + bias[b]
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor matmul(const Tensor& x, const Tensor& weight);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);

/// All shapes must agree except along `axis`.
Tensor concat(std::span<const Tensor> tensors, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> tensors, std::size_t axis);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
/// out[i] = x[rows[i]]; backward scatter-adds.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Row gather from an embedding table with range checking.
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids);
/// out[i] = mean of table rows listed in bags[i]; every bag must be non-empty.
/// Equivalent to mean_rows(embedding_lookup(table, bag)) per row.
Tensor embedding_mean(const Tensor& table, std::span<const std::vector<std::size_t>> bags);
/// Mean along the first axis: [k x d] -> [1 x d], k >= 1.
Tensor mean_rows(const Tensor& x);

/// Zeroes rows whose mask entry is 0.
Tensor mask_rows(const Tensor& x, std::span<const std::uint8_t> mask);
/// Row-wise select: mask[i] ? a[i] : b[i].
Tensor where_rows(std::span<const std::uint8_t> mask, const Tensor& a, const Tensor& b);
/// (1 - gate) * prev + gate * candidate, elementwise.
Tensor gate_blend(const Tensor& gate, const Tensor& prev, const Tensor& candidate);

/// Same-length 1D convolution followed by ReLU.
///
/// x is [N x k]; filters is [n_f x h x k]; bias is [n_f]. Each run of
/// `seq_len` consecutive rows is an independent sequence padded with
/// (h - 1) / 2 zero rows on each side (seq_len == 0 means one sequence).
Tensor conv1d_same(const Tensor& x, const Tensor& filters, const Tensor& bias, std::size_t h,
                   std::size_t seq_len = 0);

/// Per-row normalization with population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps);

/// Inverted dropout. Returns `x` itself when not training or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

struct XentResult {
    Tensor loss;  // scalar, mean over unmasked rows
    Tensor probs; // [N x 2], constant
    std::size_t n_tokens = 0;
};

/// Row-wise softmax cross-entropy over two classes (0 = OK, 1 = BAD).
XentResult softmax_xent(const Tensor& logits, std::span<const int> labels,
                        std::span<const std::uint8_t> mask);

} // namespace ceqe::ad
