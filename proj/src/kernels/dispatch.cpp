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

#include <atomic>
#include <cstdlib>
#include <string>

#include "simmat/kernels.hpp"

namespace simmat::kernels {
namespace {

Isa initial_isa() {
  if (const char* env = std::getenv("SIMMAT_ISA")) {
    if (std::string(env) == "scalar") return Isa::kScalar;
  }
  return detected_isa();
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{initial_isa()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

Isa detected_isa() {
#if defined(SIMMAT_HAVE_AVX2)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::kAvx2;
#endif
  return Isa::kScalar;
}

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::kAvx2 && detected_isa() != Isa::kAvx2) isa = Isa::kScalar;
  active_slot().store(isa, std::memory_order_relaxed);
}

void gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
          bool accumulate) {
#if defined(SIMMAT_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) return avx2::gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
#endif
  scalar::gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c,
          int ldc, bool accumulate) {
  scalar::gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

float dot(const float* x, const float* y, std::size_t n) {
#if defined(SIMMAT_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) return avx2::dot(x, y, n);
#endif
  return scalar::dot(x, y, n);
}

double dot(const double* x, const double* y, std::size_t n) { return scalar::dot(x, y, n); }

void axpy(float alpha, const float* x, float* y, std::size_t n) {
#if defined(SIMMAT_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) return avx2::axpy(alpha, x, y, n);
#endif
  scalar::axpy(alpha, x, y, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) { scalar::axpy(alpha, x, y, n); }

}  // namespace simmat::kernels
