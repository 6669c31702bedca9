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

#include "simmat/kernels.hpp"

namespace simmat::kernels::scalar {
namespace {

template <class T>
void gemm_ref(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
              bool accumulate) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (!accumulate) {
      for (int j = 0; j < n; ++j) crow[j] = T{0};
    }
    const T* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
    // i-k-j order: each C element still accumulates over k in increasing order.
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
T dot_ref(const T* x, const T* y, std::size_t n) {
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
          bool accumulate) {
  gemm_ref(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
          int ldc, bool accumulate) {
  gemm_ref(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
float dot(const float* x, const float* y, std::size_t n) { return dot_ref(x, y, n); }
double dot(const double* x, const double* y, std::size_t n) { return dot_ref(x, y, n); }
void axpy(float alpha, const float* x, float* y, std::size_t n) { axpy_ref(alpha, x, y, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { axpy_ref(alpha, x, y, n); }

}  // namespace simmat::kernels::scalar
