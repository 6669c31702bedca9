// Copyright 2026 The SimMAT Authors.
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

#include <vector>

#include "simmat/autograd.hpp"

/// Differentiable operations over BasicVar. Every op is instantiated for
/// float (training) and double (gradient verification).
namespace simmat::ops {

// Matrix products. Shapes are [rows, cols].
template <class T> BasicVar<T> matmul(const BasicVar<T>& a, const BasicVar<T>& b);     // a·b
template <class T> BasicVar<T> matmul_nt(const BasicVar<T>& a, const BasicVar<T>& b);  // a·bᵀ

/// x[N,in] · wᵀ + b. The weight may have any shape [out, ...] whose trailing
/// axes flatten to `in`; `bias` may be undefined.
template <class T>
BasicVar<T> linear(const BasicVar<T>& x, const BasicVar<T>& weight, const BasicVar<T>& bias);

// Elementwise.
template <class T> BasicVar<T> add(const BasicVar<T>& a, const BasicVar<T>& b);
template <class T> BasicVar<T> sub(const BasicVar<T>& a, const BasicVar<T>& b);
template <class T> BasicVar<T> mul(const BasicVar<T>& a, const BasicVar<T>& b);
template <class T> BasicVar<T> scale(const BasicVar<T>& a, T factor);
/// a[M,N] + row[N] broadcast over rows.
template <class T> BasicVar<T> add_row(const BasicVar<T>& a, const BasicVar<T>& row);
template <class T> BasicVar<T> relu(const BasicVar<T>& a);
/// tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
template <class T> BasicVar<T> gelu(const BasicVar<T>& a);
template <class T> BasicVar<T> sigmoid(const BasicVar<T>& a);

// Row-wise normalizations over the last axis of a 2-D value.
template <class T> BasicVar<T> softmax_rows(const BasicVar<T>& a);
template <class T>
BasicVar<T> layer_norm_rows(const BasicVar<T>& x, const BasicVar<T>& gamma, const BasicVar<T>& beta,
                            T eps = T(1e-6));

// Layout.
template <class T> BasicVar<T> transpose(const BasicVar<T>& a);
template <class T> BasicVar<T> reshape(const BasicVar<T>& a, Shape shape);
template <class T> BasicVar<T> slice_rows(const BasicVar<T>& a, std::int64_t begin, std::int64_t end);
template <class T> BasicVar<T> slice_cols(const BasicVar<T>& a, std::int64_t begin, std::int64_t end);
template <class T> BasicVar<T> concat_rows(const std::vector<BasicVar<T>>& parts);
template <class T> BasicVar<T> concat_cols(const std::vector<BasicVar<T>>& parts);
/// Channel `channel` of x[C,H,W] repeated `times` → [times,H,W].
template <class T> BasicVar<T> repeat_channel(const BasicVar<T>& x, std::int64_t channel, std::int64_t times);
/// Non-overlapping P×P patches of x[C,H,W] → [(H/P)·(W/P), C·P·P], patch
/// features ordered (c, py, px) to match a [D,C,P,P] convolution kernel.
template <class T> BasicVar<T> patchify(const BasicVar<T>& x, std::int64_t patch);

// Reductions.
template <class T> BasicVar<T> sum(const BasicVar<T>& a);
template <class T> BasicVar<T> mean(const BasicVar<T>& a);
/// Elementwise arithmetic mean of equally shaped values.
template <class T> BasicVar<T> mean_of(const std::vector<BasicVar<T>>& parts);

// Convolutions over single images [C,H,W].
/// weight [Cout,Cin,k,k]; bias [Cout] or undefined.
template <class T>
BasicVar<T> conv2d(const BasicVar<T>& input, const BasicVar<T>& weight, const BasicVar<T>& bias,
                   int stride, int padding);
/// weight [Cin,Cout,k,k]; output side (H−1)·stride + k.
template <class T>
BasicVar<T> conv_transpose2d(const BasicVar<T>& input, const BasicVar<T>& weight,
                             const BasicVar<T>& bias, int stride);

/// Multi-head scaled dot-product attention on already-projected
/// q[Nq,D], k[Nk,D], v[Nk,D]. Returns [Nq,D] (heads concatenated).
template <class T>
BasicVar<T> multihead_attention(const BasicVar<T>& q, const BasicVar<T>& k, const BasicVar<T>& v,
                                int heads);

}  // namespace simmat::ops
