// Copyright 2026 The kgjoint Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kgjoint/tensor.hpp"

// Differentiable kernels. Unless stated otherwise, operands are viewed as
// matrices (rows x cols) and rank-1 tensors count as a single row.
namespace kgjoint::ops {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kLeakyReluSlope = 0.2;

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T, for b stored as (n x k).
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// Adds a single row to every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor elu(const Tensor& a, double alpha = 1.0);
Tensor leaky_relu(const Tensor& a, double slope = kLeakyReluSlope);

// Max-subtracted softmax along axis 0 or 1 of a rank-2 tensor (axis 0 of a
// rank-1 tensor).
Tensor softmax(const Tensor& x, size_t axis);

// Row-wise normalization followed by the gamma/beta affine map.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps);

// Mean of -log softmax(logits[i])[targets[i]] over rows.
Tensor cross_entropy(const Tensor& logits, std::span<const size_t> targets);
Tensor cross_entropy(const Tensor& logits, size_t target);

Tensor gather_rows(const Tensor& table, std::span<const size_t> ids);
// Copy of base where row i gains rows[slots[i]] for every slots[i] >= 0.
Tensor scatter_add_rows(const Tensor& base, const Tensor& rows,
                        std::span<const int64_t> slots);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, size_t begin, size_t end);
Tensor slice_cols(const Tensor& a, size_t begin, size_t end);
Tensor reshape(const Tensor& a, Shape shape);

// out[i, k] = sum_j x[i, k*d + j] * w[k, j] with w of shape (heads x d).
Tensor head_dot(const Tensor& x, const Tensor& w);

// Softmax over the edges sharing a segment id, independently per column.
Tensor segment_softmax(const Tensor& scores, std::span<const size_t> segment,
                       size_t segment_count);

// out[s, k*d + j] = sum over edges e in segment s of
// weights[e, k] * values[e, k*d + j].
Tensor segment_weighted_sum(const Tensor& weights, const Tensor& values,
                            std::span<const size_t> segment, size_t segment_count);

// Scaled dot-product attention for `batch` sequences of `seq_len` rows each,
// split into `heads` column blocks. key_mask has one entry per row; masked
// keys receive exactly zero weight. When probs is non-null it receives the
// attention weights laid out as [batch][head][query][key].
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            size_t batch, size_t seq_len, size_t heads,
                            std::span<const uint8_t> key_mask,
                            std::vector<double>* probs = nullptr);

// out[m, c] = q[m] . candidates[m * group + c].
Tensor grouped_row_dot(const Tensor& q, const Tensor& candidates, size_t group);

}  // namespace kgjoint::ops
