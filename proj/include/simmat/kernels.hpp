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

#include <cstddef>
#include <string_view>

namespace simmat::kernels {

/// Instruction-set tier used by the float kernels.
enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

/// Best tier supported by the running CPU and compiled into this build.
Isa detected_isa();

/// Tier used by dispatching entry points. Defaults to detected_isa(),
/// unless SIMMAT_ISA=scalar is set in the environment.
Isa active_isa();

/// Override the active tier. Requesting an unsupported tier falls back to
/// scalar. Not thread-safe with respect to concurrent kernel calls.
void set_active_isa(Isa isa);

// All matrices are row-major with explicit leading dimensions.
//
// gemm: C[M,N] = A[M,K] * B[K,N]            (accumulate == false)
//       C[M,N] += A[M,K] * B[K,N]           (accumulate == true)
//
// For each output element the K products are summed in increasing k order,
// so a given tier is bit-reproducible for fixed shapes.

namespace scalar {
void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
          bool accumulate);
void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
          int ldc, bool accumulate);
float dot(const float* x, const float* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

#if defined(SIMMAT_HAVE_AVX2)
namespace avx2 {
void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
          bool accumulate);
float dot(const float* x, const float* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
}  // namespace avx2
#endif

// Dispatching entry points. Double precision always takes the scalar path.
void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
          bool accumulate);
void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
          int ldc, bool accumulate);
float dot(const float* x, const float* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

}  // namespace simmat::kernels
