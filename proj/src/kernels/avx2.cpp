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

// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <cmath>

#include "simmat/kernels.hpp"

namespace simmat::kernels::avx2 {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

// Four rows of C, sixteen columns, accumulated over all of k.
inline void block_4x16(int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
                       bool accumulate) {
  __m256 c00, c01, c10, c11, c20, c21, c30, c31;
  if (accumulate) {
    c00 = _mm256_loadu_ps(c);
    c01 = _mm256_loadu_ps(c + 8);
    c10 = _mm256_loadu_ps(c + ldc);
    c11 = _mm256_loadu_ps(c + ldc + 8);
    c20 = _mm256_loadu_ps(c + 2 * ldc);
    c21 = _mm256_loadu_ps(c + 2 * ldc + 8);
    c30 = _mm256_loadu_ps(c + 3 * ldc);
    c31 = _mm256_loadu_ps(c + 3 * ldc + 8);
  } else {
    c00 = c01 = c10 = c11 = c20 = c21 = c30 = c31 = _mm256_setzero_ps();
  }
  const float* a0 = a;
  const float* a1 = a + lda;
  const float* a2 = a + 2 * lda;
  const float* a3 = a + 3 * lda;
  for (int p = 0; p < k; ++p) {
    const float* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
    const __m256 b0 = _mm256_loadu_ps(brow);
    const __m256 b1 = _mm256_loadu_ps(brow + 8);
    __m256 av = _mm256_broadcast_ss(a0 + p);
    c00 = _mm256_fmadd_ps(av, b0, c00);
    c01 = _mm256_fmadd_ps(av, b1, c01);
    av = _mm256_broadcast_ss(a1 + p);
    c10 = _mm256_fmadd_ps(av, b0, c10);
    c11 = _mm256_fmadd_ps(av, b1, c11);
    av = _mm256_broadcast_ss(a2 + p);
    c20 = _mm256_fmadd_ps(av, b0, c20);
    c21 = _mm256_fmadd_ps(av, b1, c21);
    av = _mm256_broadcast_ss(a3 + p);
    c30 = _mm256_fmadd_ps(av, b0, c30);
    c31 = _mm256_fmadd_ps(av, b1, c31);
  }
  _mm256_storeu_ps(c, c00);
  _mm256_storeu_ps(c + 8, c01);
  _mm256_storeu_ps(c + ldc, c10);
  _mm256_storeu_ps(c + ldc + 8, c11);
  _mm256_storeu_ps(c + 2 * ldc, c20);
  _mm256_storeu_ps(c + 2 * ldc + 8, c21);
  _mm256_storeu_ps(c + 3 * ldc, c30);
  _mm256_storeu_ps(c + 3 * ldc + 8, c31);
}

// One row of C, eight columns.
inline void block_1x8(int k, const float* a, const float* b, int ldb, float* c, bool accumulate) {
  __m256 acc = accumulate ? _mm256_loadu_ps(c) : _mm256_setzero_ps();
  for (int p = 0; p < k; ++p) {
    acc = _mm256_fmadd_ps(_mm256_broadcast_ss(a + p),
                          _mm256_loadu_ps(b + static_cast<std::ptrdiff_t>(p) * ldb), acc);
  }
  _mm256_storeu_ps(c, acc);
}

inline void block_1x1(int k, const float* a, const float* b, int ldb, float* c, bool accumulate) {
  float acc = accumulate ? *c : 0.0f;
  for (int p = 0; p < k; ++p) acc = std::fma(a[p], b[static_cast<std::ptrdiff_t>(p) * ldb], acc);
  *c = acc;
}

}  // namespace

void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
          bool accumulate) {
  const int n16 = n - n % 16;
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    const float* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
    float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < n16; j += 16) block_4x16(k, arow, lda, b + j, ldb, crow + j, ldc, accumulate);
    for (int r = 0; r < 4; ++r) {
      const float* ar = arow + static_cast<std::ptrdiff_t>(r) * lda;
      float* cr = crow + static_cast<std::ptrdiff_t>(r) * ldc;
      int j = n16;
      for (; j + 8 <= n; j += 8) block_1x8(k, ar, b + j, ldb, cr + j, accumulate);
      for (; j < n; ++j) block_1x1(k, ar, b + j, ldb, cr + j, accumulate);
    }
  }
  for (; i < m; ++i) {
    const float* ar = a + static_cast<std::ptrdiff_t>(i) * lda;
    float* cr = c + static_cast<std::ptrdiff_t>(i) * ldc;
    int j = 0;
    for (; j + 8 <= n; j += 8) block_1x8(k, ar, b + j, ldb, cr + j, accumulate);
    for (; j < n; ++j) block_1x1(k, ar, b + j, ldb, cr + j, accumulate);
  }
}

float dot(const float* x, const float* y, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
  }
  float total = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) total += x[i] * y[i];
  return total;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

}  // namespace simmat::kernels::avx2
