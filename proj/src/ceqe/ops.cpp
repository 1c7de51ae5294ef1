// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#include "ceqe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "ceqe/errors.hpp"

namespace ceqe::ad {

namespace {

void require_matrix(const Tensor& t, const char* op) {
    if (!t.defined() || t.rank() != 2) {
        fail(ErrorKind::Dimension, std::string(op) + ": expected a matrix, got " +
                                       (t.defined() ? shape_str(t.shape()) : "<undefined>"));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        fail(ErrorKind::Dimension,
             std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

// Grad buffer of input i, or nullptr when that input does not need one.
double* input_grad(Node& node, std::size_t i) {
    Node& in = *node.inputs[i];
    return in.requires_grad ? in.ensure_grad().data() : nullptr;
}

const double* input_values(const Node& node, std::size_t i) {
    return node.inputs[i]->values.data();
}

// out[N x b] += x[N x a] * w[a x b]
void gemm_acc(const double* x, const double* w, double* out, std::size_t n, std::size_t a, std::size_t b) {
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = out + i * b;
        const double* xrow = x + i * a;
        for (std::size_t k = 0; k < a; ++k) {
            const double xv = xrow[k];
            if (xv == 0.0) {
                continue;
            }
            const double* wrow = w + k * b;
            for (std::size_t j = 0; j < b; ++j) {
                orow[j] += xv * wrow[j];
            }
        }
    }
}

// Gradients of out = x * w given g = dL/dout.
void gemm_backward(const double* x, const double* w, const double* g, double* gx, double* gw, std::size_t n,
                   std::size_t a, std::size_t b) {
    if (gx) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* grow = g + i * b;
            double* gxrow = gx + i * a;
            for (std::size_t k = 0; k < a; ++k) {
                const double* wrow = w + k * b;
                double acc = 0.0;
                for (std::size_t j = 0; j < b; ++j) {
                    acc += grow[j] * wrow[j];
                }
                gxrow[k] += acc;
            }
        }
    }
    if (gw) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* grow = g + i * b;
            const double* xrow = x + i * a;
            for (std::size_t k = 0; k < a; ++k) {
                const double xv = xrow[k];
                if (xv == 0.0) {
                    continue;
                }
                double* gwrow = gw + k * b;
                for (std::size_t j = 0; j < b; ++j) {
                    gwrow[j] += xv * grow[j];
                }
            }
        }
    }
}

template <class Forward, class Derivative>
Tensor unary(const Tensor& x, const char* op, Forward f, Derivative df) {
    std::vector<double> out(x.size());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = f(xv[i]);
    }
    return Tensor::from_op(op, x.shape(), std::move(out), {x}, [df](Node& self) {
        double* gx = input_grad(self, 0);
        if (!gx) {
            return;
        }
        const double* xv = input_values(self, 0);
        for (std::size_t i = 0; i < self.values.size(); ++i) {
            gx[i] += self.grad[i] * df(xv[i], self.values[i]);
        }
    });
}

} // namespace

Tensor matmul(const Tensor& x, const Tensor& weight) {
    require_matrix(x, "matmul");
    require_matrix(weight, "matmul");
    const std::size_t n = x.dim(0), a = x.dim(1), b = weight.dim(1);
    if (weight.dim(0) != a) {
        fail(ErrorKind::Dimension,
             "matmul: inner dimensions differ, " + shape_str(x.shape()) + " vs " + shape_str(weight.shape()));
    }
    std::vector<double> out(n * b, 0.0);
    gemm_acc(x.values().data(), weight.values().data(), out.data(), n, a, b);
    return Tensor::from_op("matmul", {n, b}, std::move(out), {x, weight}, [n, a, b](Node& self) {
        gemm_backward(input_values(self, 0), input_values(self, 1), self.grad.data(), input_grad(self, 0),
                      input_grad(self, 1), n, a, b);
    });
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_matrix(x, "affine");
    require_matrix(weight, "affine");
    const std::size_t n = x.dim(0), a = x.dim(1), b = weight.dim(1);
    if (weight.dim(0) != a) {
        fail(ErrorKind::Dimension,
             "affine: inner dimensions differ, " + shape_str(x.shape()) + " vs " + shape_str(weight.shape()));
    }
    if (bias.size() != b) {
        fail(ErrorKind::Dimension,
             "affine: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(weight.shape()));
    }
    std::vector<double> out(n * b);
    auto bv = bias.values();
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(bv.begin(), bv.end(), out.begin() + static_cast<std::ptrdiff_t>(i * b));
    }
    gemm_acc(x.values().data(), weight.values().data(), out.data(), n, a, b);
    return Tensor::from_op("affine", {n, b}, std::move(out), {x, weight, bias}, [n, a, b](Node& self) {
        gemm_backward(input_values(self, 0), input_values(self, 1), self.grad.data(), input_grad(self, 0),
                      input_grad(self, 1), n, a, b);
        if (double* gb = input_grad(self, 2)) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < b; ++j) {
                    gb[j] += self.grad[i * b + j];
                }
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] + bv[i];
    }
    return Tensor::from_op("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (double* g = input_grad(self, k)) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                    g[i] += self.grad[i];
                }
            }
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = av[i] * bv[i];
    }
    return Tensor::from_op("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
        const double* av = input_values(self, 0);
        const double* bv = input_values(self, 1);
        double* ga = input_grad(self, 0);
        double* gb = input_grad(self, 1);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (ga) {
                ga[i] += self.grad[i] * bv[i];
            }
            if (gb) {
                gb[i] += self.grad[i] * av[i];
            }
        }
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) {
        total += v;
    }
    return Tensor::from_op("sum", {1}, {total}, {x}, [](Node& self) {
        if (double* g = input_grad(self, 0)) {
            const std::size_t n = self.inputs[0]->values.size();
            for (std::size_t i = 0; i < n; ++i) {
                g[i] += self.grad[0];
            }
        }
    });
}

Tensor relu(const Tensor& x) {
    return unary(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
        [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, "sigmoid",
        [](double v) {
            if (v >= 0.0) {
                return 1.0 / (1.0 + std::exp(-v));
            }
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double out) { return out * (1.0 - out); });
}

Tensor tanh_op(const Tensor& x) {
    return unary(
        x, "tanh", [](double v) { return std::tanh(v); }, [](double, double out) { return 1.0 - out * out; });
}

Tensor concat(std::span<const Tensor> tensors, std::size_t axis) {
    if (tensors.empty()) {
        fail(ErrorKind::Dimension, "concat: no inputs");
    }
    const Shape& first = tensors[0].shape();
    if (axis >= first.size()) {
        fail(ErrorKind::Dimension, "concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
    }
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const Tensor& t : tensors) {
        const Shape& s = t.shape();
        bool ok = s.size() == first.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d) {
            ok = d == axis || s[d] == first[d];
        }
        if (!ok) {
            fail(ErrorKind::Dimension, "concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s) +
                                           " along axis " + std::to_string(axis));
        }
        out_shape[axis] += s[axis];
    }
    if (tensors.size() == 1) {
        return tensors[0];
    }

    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) {
        outer *= first[d];
    }
    for (std::size_t d = axis + 1; d < first.size(); ++d) {
        inner *= first[d];
    }
    std::vector<std::size_t> blocks;
    std::size_t out_block = 0;
    for (const Tensor& t : tensors) {
        blocks.push_back(t.dim(axis) * inner);
        out_block += blocks.back();
    }

    std::vector<double> out(outer * out_block);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        auto v = tensors[k].values();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * blocks[k]), blocks[k],
                        out.begin() + static_cast<std::ptrdiff_t>(o * out_block + offset));
        }
        offset += blocks[k];
    }

    std::vector<Tensor> inputs(tensors.begin(), tensors.end());
    return Tensor::from_op("concat", std::move(out_shape), std::move(out), std::move(inputs),
                           [blocks, outer, out_block](Node& self) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < blocks.size(); ++k) {
                                   if (double* g = input_grad(self, k)) {
                                       for (std::size_t o = 0; o < outer; ++o) {
                                           const double* src = self.grad.data() + o * out_block + offset;
                                           double* dst = g + o * blocks[k];
                                           for (std::size_t i = 0; i < blocks[k]; ++i) {
                                               dst[i] += src[i];
                                           }
                                       }
                                   }
                                   offset += blocks[k];
                               }
                           });
}

Tensor concat(std::initializer_list<Tensor> tensors, std::size_t axis) {
    return concat(std::span<const Tensor>(tensors.begin(), tensors.size()), axis);
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    require_matrix(x, "slice_cols");
    const std::size_t n = x.dim(0), c = x.dim(1);
    if (begin > end || end > c) {
        fail(ErrorKind::Dimension, "slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                       ") outside " + shape_str(x.shape()));
    }
    const std::size_t w = end - begin;
    std::vector<double> out(n * w);
    auto xv = x.values();
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(i * c + begin), w,
                    out.begin() + static_cast<std::ptrdiff_t>(i * w));
    }
    return Tensor::from_op("slice_cols", {n, w}, std::move(out), {x}, [n, c, w, begin](Node& self) {
        double* g = input_grad(self, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                g[i * c + begin + j] += self.grad[i * w + j];
            }
        }
    });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
    require_matrix(x, "gather_rows");
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<double> out(rows.size() * c);
    auto xv = x.values();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= r) {
            fail(ErrorKind::Index, "gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                                       shape_str(x.shape()));
        }
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(rows[i] * c), c,
                    out.begin() + static_cast<std::ptrdiff_t>(i * c));
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return Tensor::from_op("gather_rows", {rows.size(), c}, std::move(out), {x}, [idx, c](Node& self) {
        double* g = input_grad(self, 0);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            double* dst = g + idx[i] * c;
            const double* src = self.grad.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) {
                dst[j] += src[j];
            }
        }
    });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> ids) {
    require_matrix(table, "embedding_lookup");
    for (std::size_t id : ids) {
        if (id >= table.dim(0)) {
            fail(ErrorKind::Index, "embedding_lookup: id " + std::to_string(id) + " outside table of " +
                                       std::to_string(table.dim(0)) + " rows");
        }
    }
    return gather_rows(table, ids);
}

Tensor embedding_mean(const Tensor& table, std::span<const std::vector<std::size_t>> bags) {
    require_matrix(table, "embedding_mean");
    const std::size_t v = table.dim(0), d = table.dim(1);
    std::vector<double> out(bags.size() * d, 0.0);
    auto tv = table.values();
    // Bags are summed in id order so the mean does not depend on how the
    // caller listed them.
    std::vector<std::vector<std::size_t>> saved(bags.begin(), bags.end());
    for (auto& bag : saved) {
        std::sort(bag.begin(), bag.end());
    }
    for (std::size_t i = 0; i < saved.size(); ++i) {
        const auto& bag = saved[i];
        if (bag.empty()) {
            fail(ErrorKind::Contract, "embedding_mean: empty bag at row " + std::to_string(i));
        }
        double* orow = out.data() + i * d;
        for (std::size_t id : bag) {
            if (id >= v) {
                fail(ErrorKind::Index, "embedding_mean: id " + std::to_string(id) + " outside table of " +
                                           std::to_string(v) + " rows");
            }
            for (std::size_t j = 0; j < d; ++j) {
                orow[j] += tv[id * d + j];
            }
        }
        const double inv = 1.0 / static_cast<double>(bag.size());
        for (std::size_t j = 0; j < d; ++j) {
            orow[j] *= inv;
        }
    }
    return Tensor::from_op("embedding_mean", {bags.size(), d}, std::move(out), {table},
                           [saved = std::move(saved), d](Node& self) {
                               double* g = input_grad(self, 0);
                               for (std::size_t i = 0; i < saved.size(); ++i) {
                                   const double inv = 1.0 / static_cast<double>(saved[i].size());
                                   const double* src = self.grad.data() + i * d;
                                   for (std::size_t id : saved[i]) {
                                       for (std::size_t j = 0; j < d; ++j) {
                                           g[id * d + j] += src[j] * inv;
                                       }
                                   }
                               }
                           });
}

Tensor mean_rows(const Tensor& x) {
    require_matrix(x, "mean_rows");
    const std::size_t k = x.dim(0), d = x.dim(1);
    if (k == 0) {
        fail(ErrorKind::Contract, "mean_rows: no rows to average");
    }
    std::vector<double> out(d, 0.0);
    auto xv = x.values();
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out[j] += xv[i * d + j];
        }
    }
    for (double& v : out) {
        v /= static_cast<double>(k);
    }
    return Tensor::from_op("mean_rows", {1, d}, std::move(out), {x}, [k, d](Node& self) {
        double* g = input_grad(self, 0);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                g[i * d + j] += self.grad[j] / static_cast<double>(k);
            }
        }
    });
}

Tensor mask_rows(const Tensor& x, std::span<const std::uint8_t> mask) {
    require_matrix(x, "mask_rows");
    const std::size_t n = x.dim(0), c = x.dim(1);
    if (mask.size() != n) {
        fail(ErrorKind::Dimension, "mask_rows: mask length " + std::to_string(mask.size()) + " vs " +
                                       shape_str(x.shape()));
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) {
            std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i * c), c, 0.0);
        }
    }
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    return Tensor::from_op("mask_rows", x.shape(), std::move(out), {x}, [m, c](Node& self) {
        double* g = input_grad(self, 0);
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (m[i]) {
                for (std::size_t j = 0; j < c; ++j) {
                    g[i * c + j] += self.grad[i * c + j];
                }
            }
        }
    });
}

Tensor where_rows(std::span<const std::uint8_t> mask, const Tensor& a, const Tensor& b) {
    require_matrix(a, "where_rows");
    require_same_shape(a, b, "where_rows");
    const std::size_t n = a.dim(0), c = a.dim(1);
    if (mask.size() != n) {
        fail(ErrorKind::Dimension, "where_rows: mask length " + std::to_string(mask.size()) + " vs " +
                                       shape_str(a.shape()));
    }
    std::vector<double> out(n * c);
    auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& src = mask[i] ? av : bv;
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * c), c,
                    out.begin() + static_cast<std::ptrdiff_t>(i * c));
    }
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    return Tensor::from_op("where_rows", a.shape(), std::move(out), {a, b}, [m, c](Node& self) {
        double* ga = input_grad(self, 0);
        double* gb = input_grad(self, 1);
        for (std::size_t i = 0; i < m.size(); ++i) {
            double* g = m[i] ? ga : gb;
            if (!g) {
                continue;
            }
            for (std::size_t j = 0; j < c; ++j) {
                g[i * c + j] += self.grad[i * c + j];
            }
        }
    });
}

Tensor gate_blend(const Tensor& gate, const Tensor& prev, const Tensor& candidate) {
    require_same_shape(gate, prev, "gate_blend");
    require_same_shape(gate, candidate, "gate_blend");
    std::vector<double> out(gate.size());
    auto z = gate.values(), h = prev.values(), c = candidate.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (1.0 - z[i]) * h[i] + z[i] * c[i];
    }
    return Tensor::from_op("gate_blend", gate.shape(), std::move(out), {gate, prev, candidate}, [](Node& self) {
        const double* z = input_values(self, 0);
        const double* h = input_values(self, 1);
        const double* c = input_values(self, 2);
        double* gz = input_grad(self, 0);
        double* gh = input_grad(self, 1);
        double* gc = input_grad(self, 2);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double g = self.grad[i];
            if (gz) {
                gz[i] += g * (c[i] - h[i]);
            }
            if (gh) {
                gh[i] += g * (1.0 - z[i]);
            }
            if (gc) {
                gc[i] += g * z[i];
            }
        }
    });
}

namespace {

// Linear part of the same-length convolution.
Tensor conv1d_linear(const Tensor& x, const Tensor& filters, const Tensor& bias, std::size_t h,
                     std::size_t seq_len) {
    const std::size_t n = x.dim(0), k = x.dim(1), nf = filters.dim(0);
    const std::size_t pad = (h - 1) / 2;
    const std::size_t n_seq = seq_len == 0 ? 1 : n / seq_len;
    const std::size_t len = seq_len == 0 ? n : seq_len;

    std::vector<double> out(n * nf);
    auto xv = x.values();
    auto fv = filters.values();
    auto bv = bias.values();
    for (std::size_t s = 0; s < n_seq; ++s) {
        for (std::size_t i = 0; i < len; ++i) {
            double* orow = out.data() + (s * len + i) * nf;
            std::copy(bv.begin(), bv.end(), orow);
            for (std::size_t u = 0; u < h; ++u) {
                // source position i + u - pad, skipped when it falls in the padding
                if (i + u < pad || i + u - pad >= len) {
                    continue;
                }
                const double* xrow = xv.data() + (s * len + i + u - pad) * k;
                for (std::size_t f = 0; f < nf; ++f) {
                    const double* frow = fv.data() + (f * h + u) * k;
                    double acc = 0.0;
                    for (std::size_t v = 0; v < k; ++v) {
                        acc += frow[v] * xrow[v];
                    }
                    orow[f] += acc;
                }
            }
        }
    }

    return Tensor::from_op(
        "conv1d", {n, nf}, std::move(out), {x, filters, bias}, [n_seq, len, k, nf, h, pad](Node& self) {
            const double* xv = input_values(self, 0);
            const double* fv = input_values(self, 1);
            double* gx = input_grad(self, 0);
            double* gf = input_grad(self, 1);
            double* gb = input_grad(self, 2);
            for (std::size_t s = 0; s < n_seq; ++s) {
                for (std::size_t i = 0; i < len; ++i) {
                    const double* grow = self.grad.data() + (s * len + i) * nf;
                    if (gb) {
                        for (std::size_t f = 0; f < nf; ++f) {
                            gb[f] += grow[f];
                        }
                    }
                    for (std::size_t u = 0; u < h; ++u) {
                        if (i + u < pad || i + u - pad >= len) {
                            continue;
                        }
                        const std::size_t src = s * len + i + u - pad;
                        const double* xrow = xv + src * k;
                        for (std::size_t f = 0; f < nf; ++f) {
                            const double g = grow[f];
                            if (g == 0.0) {
                                continue;
                            }
                            if (gf) {
                                double* gfrow = gf + (f * h + u) * k;
                                for (std::size_t v = 0; v < k; ++v) {
                                    gfrow[v] += g * xrow[v];
                                }
                            }
                            if (gx) {
                                const double* frow = fv + (f * h + u) * k;
                                double* gxrow = gx + src * k;
                                for (std::size_t v = 0; v < k; ++v) {
                                    gxrow[v] += g * frow[v];
                                }
                            }
                        }
                    }
                }
            }
        });
}

} // namespace

Tensor conv1d_same(const Tensor& x, const Tensor& filters, const Tensor& bias, std::size_t h, std::size_t seq_len) {
    require_matrix(x, "conv1d_same");
    if (h == 0 || h % 2 == 0) {
        fail(ErrorKind::Config, "conv1d_same: window size must be odd and positive, got " + std::to_string(h));
    }
    if (filters.rank() != 3 || filters.dim(1) != h || filters.dim(2) != x.dim(1)) {
        fail(ErrorKind::Dimension, "conv1d_same: filters " + shape_str(filters.shape()) +
                                       " incompatible with input " + shape_str(x.shape()) + " and h=" +
                                       std::to_string(h));
    }
    if (bias.size() != filters.dim(0)) {
        fail(ErrorKind::Dimension, "conv1d_same: bias " + shape_str(bias.shape()) + " vs filters " +
                                       shape_str(filters.shape()));
    }
    if (seq_len != 0 && x.dim(0) % seq_len != 0) {
        fail(ErrorKind::Dimension, "conv1d_same: " + std::to_string(x.dim(0)) + " rows are not a multiple of " +
                                       "sequence length " + std::to_string(seq_len));
    }
    return relu(conv1d_linear(x, filters, bias, h, seq_len));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
    require_matrix(x, "layer_norm");
    const std::size_t n = x.dim(0), d = x.dim(1);
    if (d == 0) {
        fail(ErrorKind::Dimension, "layer_norm: rows must be non-empty");
    }
    if (gain.size() != d || shift.size() != d) {
        fail(ErrorKind::Dimension, "layer_norm: gain/shift " + shape_str(gain.shape()) + "/" +
                                       shape_str(shift.shape()) + " vs input " + shape_str(x.shape()));
    }
    auto xv = x.values(), gv = gain.values(), sv = shift.values();
    auto xhat = std::make_shared<std::vector<double>>(n * d);
    auto inv_std = std::make_shared<std::vector<double>>(n);
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = xv.data() + i * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            mean += row[j];
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            var += (row[j] - mean) * (row[j] - mean);
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (row[j] - mean) * inv;
            (*xhat)[i * d + j] = xh;
            out[i * d + j] = xh * gv[j] + sv[j];
        }
    }
    return Tensor::from_op("layer_norm", {n, d}, std::move(out), {x, gain, shift}, [xhat, inv_std, n, d](Node& self) {
        const double* gv = input_values(self, 1);
        double* gx = input_grad(self, 0);
        double* gg = input_grad(self, 1);
        double* gs = input_grad(self, 2);
        std::vector<double> dxhat(d);
        for (std::size_t i = 0; i < n; ++i) {
            const double* g = self.grad.data() + i * d;
            const double* xh = xhat->data() + i * d;
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                if (gg) {
                    gg[j] += g[j] * xh[j];
                }
                if (gs) {
                    gs[j] += g[j];
                }
                dxhat[j] = g[j] * gv[j];
                mean_dxhat += dxhat[j];
                mean_dxhat_xhat += dxhat[j] * xh[j];
            }
            if (!gx) {
                continue;
            }
            mean_dxhat /= static_cast<double>(d);
            mean_dxhat_xhat /= static_cast<double>(d);
            const double inv = (*inv_std)[i];
            for (std::size_t j = 0; j < d; ++j) {
                gx[i * d + j] += inv * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
            }
        }
    });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) {
        fail(ErrorKind::Config, "dropout: probability must be in [0, 1), got " + std::to_string(p));
    }
    if (!training || p == 0.0) {
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> scale(x.size());
    std::vector<double> out(x.size());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        scale[i] = rng.uniform() < p ? 0.0 : keep_scale;
        out[i] = xv[i] * scale[i];
    }
    return Tensor::from_op("dropout", x.shape(), std::move(out), {x}, [scale = std::move(scale)](Node& self) {
        double* g = input_grad(self, 0);
        for (std::size_t i = 0; i < scale.size(); ++i) {
            g[i] += self.grad[i] * scale[i];
        }
    });
}

XentResult softmax_xent(const Tensor& logits, std::span<const int> labels, std::span<const std::uint8_t> mask) {
    require_matrix(logits, "softmax_xent");
    const std::size_t n = logits.dim(0);
    if (logits.dim(1) != 2) {
        fail(ErrorKind::Dimension, "softmax_xent: expected two classes, got " + shape_str(logits.shape()));
    }
    if (labels.size() != n || mask.size() != n) {
        fail(ErrorKind::Dimension, "softmax_xent: " + std::to_string(n) + " rows but " +
                                       std::to_string(labels.size()) + " labels and " + std::to_string(mask.size()) +
                                       " mask entries");
    }
    auto lv = logits.values();
    std::vector<double> probs(n * 2);
    std::size_t m = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = lv[2 * i], b = lv[2 * i + 1];
        const double mx = std::max(a, b);
        const double ea = std::exp(a - mx), eb = std::exp(b - mx);
        const double z = ea + eb;
        probs[2 * i] = ea / z;
        probs[2 * i + 1] = eb / z;
        if (!mask[i]) {
            continue;
        }
        if (labels[i] != 0 && labels[i] != 1) {
            fail(ErrorKind::Contract, "softmax_xent: label " + std::to_string(labels[i]) + " at row " +
                                          std::to_string(i) + " is not 0 (OK) or 1 (BAD)");
        }
        // log-sum-exp form keeps large margins exact
        const double chosen = labels[i] == 0 ? a : b;
        total += (mx - chosen) + std::log(z);
        ++m;
    }
    if (m == 0) {
        fail(ErrorKind::Contract, "softmax_xent: batch has no unmasked tokens");
    }
    const double loss = total / static_cast<double>(m);

    XentResult result;
    result.n_tokens = m;
    result.probs = Tensor::constant({n, 2}, probs);
    std::vector<int> lab(labels.begin(), labels.end());
    std::vector<std::uint8_t> msk(mask.begin(), mask.end());
    result.loss = Tensor::from_op("softmax_xent", {1}, {loss}, {logits},
                                  [probs = std::move(probs), lab = std::move(lab), msk = std::move(msk), m](Node& self) {
                                      double* g = input_grad(self, 0);
                                      const double scale = self.grad[0] / static_cast<double>(m);
                                      for (std::size_t i = 0; i < msk.size(); ++i) {
                                          if (!msk[i]) {
                                              continue;
                                          }
                                          for (std::size_t c = 0; c < 2; ++c) {
                                              const double target = static_cast<int>(c) == lab[i] ? 1.0 : 0.0;
                                              g[2 * i + c] += scale * (probs[2 * i + c] - target);
                                          }
                                      }
                                  });
    return result;
}

} // namespace ceqe::ad
