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

#include "simmat/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "simmat/kernels.hpp"

namespace simmat::ops {
namespace {

template <class T>
using V = BasicVar<T>;

template <class T>
using NodeT = Node<T>;

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(s));
  }
}

void require_axis(std::int64_t got, std::int64_t want, const char* op, const char* axis) {
  if (got != want) {
    throw DimensionError(std::string(op) + ": axis " + axis + " is " + std::to_string(got) +
                         ", expected " + std::to_string(want));
  }
}

template <class T>
void transpose_into(const T* src, int rows, int cols, std::vector<T>& dst) {
  dst.resize(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
}

/// C[M,N] (+)= op(A)·op(B), where op(A) is [M,K] (A stored [K,M] when ta)
/// and op(B) is [K,N] (B stored [N,K] when tb).
template <class T>
void mm(bool ta, bool tb, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  std::vector<T> at, bt;
  if (ta) {
    transpose_into(a, k, m, at);
    a = at.data();
  }
  if (tb) {
    transpose_into(b, n, k, bt);
    b = bt.data();
  }
  kernels::gemm(m, n, k, a, k, b, n, c, n, accumulate);
}

template <class T>
bool wants_grad(const NodeT<T>& self, std::size_t i) {
  return self.parents[i] && self.parents[i]->requires_grad;
}

template <class T>
std::vector<T>& pgrad(NodeT<T>& self, std::size_t i) {
  return self.parents[i]->ensure_grad();
}

// im2col for a [C,H,W] image into [C·k·k, Ho·Wo]; col2im is its adjoint.
template <class T>
void im2col(const T* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* cols) {
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + (static_cast<std::size_t>(ch * k + ki) * k + kj) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    ? x[(static_cast<std::size_t>(ch) * h + iy) * w + ix]
                                    : T{0};
          }
        }
      }
}

template <class T>
void col2im(const T* cols, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* x) {
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const T* row = cols + (static_cast<std::size_t>(ch * k + ki) * k + kj) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix < 0 || ix >= w) continue;
            x[(static_cast<std::size_t>(ch) * h + iy) * w + ix] += row[oy * wo + ox];
          }
        }
      }
}

template <class T>
void add_into(std::vector<T>& dst, std::span<const T> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

template <class T>
V<T> matmul(const V<T>& a, const V<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const int m = static_cast<int>(a.dim(0)), k = static_cast<int>(a.dim(1)), n = static_cast<int>(b.dim(1));
  require_axis(b.dim(0), k, "matmul", "0 of rhs");
  BasicTensor<T> out({m, n});
  mm<T>(false, false, m, n, k, a.value().data().data(), b.value().data().data(), out.storage().data(), false);
  return V<T>::make(std::move(out), {a, b}, [m, n, k](NodeT<T>& self) {
    const T* g = self.grad.data();
    const T* av = self.parents[0]->value.storage().data();
    const T* bv = self.parents[1]->value.storage().data();
    if (wants_grad(self, 0)) mm<T>(false, true, m, k, n, g, bv, pgrad(self, 0).data(), true);
    if (wants_grad(self, 1)) mm<T>(true, false, k, n, m, av, g, pgrad(self, 1).data(), true);
  });
}

template <class T>
V<T> matmul_nt(const V<T>& a, const V<T>& b) {
  require_rank(a.shape(), 2, "matmul_nt");
  require_rank(b.shape(), 2, "matmul_nt");
  const int m = static_cast<int>(a.dim(0)), k = static_cast<int>(a.dim(1)), n = static_cast<int>(b.dim(0));
  require_axis(b.dim(1), k, "matmul_nt", "1 of rhs");
  BasicTensor<T> out({m, n});
  mm<T>(false, true, m, n, k, a.value().data().data(), b.value().data().data(), out.storage().data(), false);
  return V<T>::make(std::move(out), {a, b}, [m, n, k](NodeT<T>& self) {
    const T* g = self.grad.data();
    const T* av = self.parents[0]->value.storage().data();
    const T* bv = self.parents[1]->value.storage().data();
    if (wants_grad(self, 0)) mm<T>(false, false, m, k, n, g, bv, pgrad(self, 0).data(), true);
    if (wants_grad(self, 1)) mm<T>(true, false, n, k, m, g, av, pgrad(self, 1).data(), true);
  });
}

template <class T>
V<T> linear(const V<T>& x, const V<T>& weight, const V<T>& bias) {
  require_rank(x.shape(), 2, "linear");
  const int n = static_cast<int>(x.dim(0)), in = static_cast<int>(x.dim(1));
  const int out_dim = static_cast<int>(weight.dim(0));
  require_axis(weight.numel() / out_dim, in, "linear", "input features of weight");
  if (bias.defined()) require_axis(bias.numel(), out_dim, "linear", "0 of bias");
  BasicTensor<T> out({n, out_dim});
  mm<T>(false, true, n, out_dim, in, x.value().data().data(), weight.value().data().data(),
        out.storage().data(), false);
  if (bias.defined()) {
    const T* bv = bias.value().data().data();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < out_dim; ++c) out.storage()[static_cast<std::size_t>(r) * out_dim + c] += bv[c];
  }
  std::vector<V<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return V<T>::make(std::move(out), std::move(parents), [n, in, out_dim, has_bias](NodeT<T>& self) {
    const T* g = self.grad.data();
    if (wants_grad(self, 0))
      mm<T>(false, false, n, in, out_dim, g, self.parents[1]->value.storage().data(), pgrad(self, 0).data(), true);
    if (wants_grad(self, 1))
      mm<T>(true, false, out_dim, in, n, g, self.parents[0]->value.storage().data(), pgrad(self, 1).data(), true);
    if (has_bias && wants_grad(self, 2)) {
      auto& gb = pgrad(self, 2);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < out_dim; ++c) gb[c] += g[static_cast<std::size_t>(r) * out_dim + c];
    }
  });
}

namespace {
template <class T, class Fwd, class Bwd>
V<T> binary(const V<T>& a, const V<T>& b, const char* name, Fwd fwd, Bwd bwd) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(name) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  BasicTensor<T> out(a.shape());
  const auto av = a.value().data();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return V<T>::make(std::move(out), {a, b}, [bwd](NodeT<T>& self) {
    const auto& av = self.parents[0]->value.storage();
    const auto& bv = self.parents[1]->value.storage();
    const bool ga = wants_grad(self, 0), gb = wants_grad(self, 1);
    T* da = ga ? pgrad(self, 0).data() : nullptr;
    T* db = gb ? pgrad(self, 1).data() : nullptr;
    for (std::size_t i = 0; i < self.grad.size(); ++i) bwd(self.grad[i], av[i], bv[i], da ? da + i : nullptr, db ? db + i : nullptr);
  });
}

template <class T, class Fwd, class Deriv>
V<T> unary(const V<T>& a, Fwd fwd, Deriv deriv) {
  BasicTensor<T> out(a.shape());
  const auto av = a.value().data();
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return V<T>::make(std::move(out), {a}, [deriv](NodeT<T>& self) {
    const auto& x = self.parents[0]->value.storage();
    const auto& y = self.value.storage();
    auto& dx = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i] * deriv(x[i], y[i]);
  });
}
}  // namespace

template <class T>
V<T> add(const V<T>& a, const V<T>& b) {
  return binary<T>(a, b, "add", [](T x, T y) { return x + y; },
                   [](T g, T, T, T* da, T* db) {
                     if (da) *da += g;
                     if (db) *db += g;
                   });
}

template <class T>
V<T> sub(const V<T>& a, const V<T>& b) {
  return binary<T>(a, b, "sub", [](T x, T y) { return x - y; },
                   [](T g, T, T, T* da, T* db) {
                     if (da) *da += g;
                     if (db) *db -= g;
                   });
}

template <class T>
V<T> mul(const V<T>& a, const V<T>& b) {
  return binary<T>(a, b, "mul", [](T x, T y) { return x * y; },
                   [](T g, T x, T y, T* da, T* db) {
                     if (da) *da += g * y;
                     if (db) *db += g * x;
                   });
}

template <class T>
V<T> scale(const V<T>& a, T factor) {
  BasicTensor<T> out(a.shape());
  const auto av = a.value().data();
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  return V<T>::make(std::move(out), {a}, [factor](NodeT<T>& self) {
    auto& dx = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i] * factor;
  });
}

template <class T>
V<T> add_row(const V<T>& a, const V<T>& row) {
  require_rank(a.shape(), 2, "add_row");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  require_axis(row.numel(), n, "add_row", "length of row");
  BasicTensor<T> out(a.shape());
  for (std::int64_t r = 0; r < m; ++r)
    for (std::int64_t c = 0; c < n; ++c) out.at(r, c) = a.value().at(r, c) + row.value()[static_cast<std::size_t>(c)];
  return V<T>::make(std::move(out), {a, row}, [m, n](NodeT<T>& self) {
    if (wants_grad(self, 0)) add_into(pgrad(self, 0), std::span<const T>(self.grad));
    if (wants_grad(self, 1)) {
      auto& dr = pgrad(self, 1);
      for (std::int64_t r = 0; r < m; ++r)
        for (std::int64_t c = 0; c < n; ++c) dr[static_cast<std::size_t>(c)] += self.grad[static_cast<std::size_t>(r * n + c)];
    }
  });
}

template <class T>
V<T> relu(const V<T>& a) {
  return unary<T>(a, [](T x) { return x > T{0} ? x : T{0}; }, [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <class T>
V<T> gelu(const V<T>& a) {
  constexpr T kC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = static_cast<T>(0.044715);
  return unary<T>(
      a,
      [](T x) { return T(0.5) * x * (T{1} + std::tanh(kC * (x + kA * x * x * x))); },
      [](T x, T) {
        const T t = std::tanh(kC * (x + kA * x * x * x));
        return T(0.5) * (T{1} + t) + T(0.5) * x * (T{1} - t * t) * kC * (T{1} + T{3} * kA * x * x);
      });
}

template <class T>
V<T> sigmoid(const V<T>& a) {
  return unary<T>(a, [](T x) { return T{1} / (T{1} + std::exp(-x)); }, [](T, T y) { return y * (T{1} - y); });
}

template <class T>
V<T> softmax_rows(const V<T>& a) {
  require_rank(a.shape(), 2, "softmax_rows");
  const std::int64_t m = a.dim(0), n = a.dim(1);
  BasicTensor<T> out(a.shape());
  for (std::int64_t r = 0; r < m; ++r) {
    const T* x = a.value().data().data() + r * n;
    T* y = out.storage().data() + r * n;
    T mx = x[0];
    for (std::int64_t c = 1; c < n; ++c) mx = std::max(mx, x[c]);
    T s{0};
    for (std::int64_t c = 0; c < n; ++c) s += (y[c] = std::exp(x[c] - mx));
    const T inv = T{1} / s;
    for (std::int64_t c = 0; c < n; ++c) y[c] *= inv;
  }
  return V<T>::make(std::move(out), {a}, [m, n](NodeT<T>& self) {
    auto& dx = pgrad(self, 0);
    for (std::int64_t r = 0; r < m; ++r) {
      const T* y = self.value.storage().data() + r * n;
      const T* g = self.grad.data() + r * n;
      T dotv{0};
      for (std::int64_t c = 0; c < n; ++c) dotv += g[c] * y[c];
      for (std::int64_t c = 0; c < n; ++c) dx[static_cast<std::size_t>(r * n + c)] += y[c] * (g[c] - dotv);
    }
  });
}

template <class T>
V<T> layer_norm_rows(const V<T>& x, const V<T>& gamma, const V<T>& beta, T eps) {
  require_rank(x.shape(), 2, "layer_norm_rows");
  const std::int64_t m = x.dim(0), n = x.dim(1);
  require_axis(gamma.numel(), n, "layer_norm_rows", "length of gamma");
  require_axis(beta.numel(), n, "layer_norm_rows", "length of beta");
  BasicTensor<T> out(x.shape());
  std::vector<T> xhat(static_cast<std::size_t>(m * n));
  std::vector<T> inv_std(static_cast<std::size_t>(m));
  const T* gv = gamma.value().data().data();
  const T* bv = beta.value().data().data();
  for (std::int64_t r = 0; r < m; ++r) {
    const T* xr = x.value().data().data() + r * n;
    T mu{0};
    for (std::int64_t c = 0; c < n; ++c) mu += xr[c];
    mu /= static_cast<T>(n);
    T var{0};
    for (std::int64_t c = 0; c < n; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<T>(n);
    const T is = T{1} / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (std::int64_t c = 0; c < n; ++c) {
      const T h = (xr[c] - mu) * is;
      xhat[static_cast<std::size_t>(r * n + c)] = h;
      out.storage()[static_cast<std::size_t>(r * n + c)] = h * gv[c] + bv[c];
    }
  }
  return V<T>::make(std::move(out), {x, gamma, beta},
                    [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](NodeT<T>& self) {
    const T* g = self.grad.data();
    const T* gv = self.parents[1]->value.storage().data();
    if (wants_grad(self, 0)) {
      auto& dx = pgrad(self, 0);
      std::vector<T> dh(static_cast<std::size_t>(n));
      for (std::int64_t r = 0; r < m; ++r) {
        T mean_dh{0}, mean_dh_h{0};
        for (std::int64_t c = 0; c < n; ++c) {
          dh[static_cast<std::size_t>(c)] = g[r * n + c] * gv[c];
          mean_dh += dh[static_cast<std::size_t>(c)];
          mean_dh_h += dh[static_cast<std::size_t>(c)] * xhat[static_cast<std::size_t>(r * n + c)];
        }
        mean_dh /= static_cast<T>(n);
        mean_dh_h /= static_cast<T>(n);
        const T is = inv_std[static_cast<std::size_t>(r)];
        for (std::int64_t c = 0; c < n; ++c) {
          dx[static_cast<std::size_t>(r * n + c)] +=
              is * (dh[static_cast<std::size_t>(c)] - mean_dh - xhat[static_cast<std::size_t>(r * n + c)] * mean_dh_h);
        }
      }
    }
    if (wants_grad(self, 1)) {
      auto& dg = pgrad(self, 1);
      for (std::int64_t r = 0; r < m; ++r)
        for (std::int64_t c = 0; c < n; ++c) dg[static_cast<std::size_t>(c)] += g[r * n + c] * xhat[static_cast<std::size_t>(r * n + c)];
    }
    if (wants_grad(self, 2)) {
      auto& db = pgrad(self, 2);
      for (std::int64_t r = 0; r < m; ++r)
        for (std::int64_t c = 0; c < n; ++c) db[static_cast<std::size_t>(c)] += g[r * n + c];
    }
  });
}

template <class T>
V<T> transpose(const V<T>& a) {
  require_rank(a.shape(), 2, "transpose");
  const int m = static_cast<int>(a.dim(0)), n = static_cast<int>(a.dim(1));
  std::vector<T> buf;
  transpose_into(a.value().data().data(), m, n, buf);
  return V<T>::make(BasicTensor<T>({n, m}, std::move(buf)), {a}, [m, n](NodeT<T>& self) {
    auto& dx = pgrad(self, 0);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) dx[static_cast<std::size_t>(r) * n + c] += self.grad[static_cast<std::size_t>(c) * m + r];
  });
}

template <class T>
V<T> reshape(const V<T>& a, Shape shape) {
  return V<T>::make(a.value().reshaped(std::move(shape)), {a}, [](NodeT<T>& self) {
    add_into(pgrad(self, 0), std::span<const T>(self.grad));
  });
}

template <class T>
V<T> slice_rows(const V<T>& a, std::int64_t begin, std::int64_t end) {
  require_rank(a.shape(), 2, "slice_rows");
  if (begin < 0 || end > a.dim(0) || begin >= end) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside axis 0 of " + shape_str(a.shape()));
  }
  const std::int64_t n = a.dim(1);
  const auto src = a.value().data();
  std::vector<T> buf(src.begin() + begin * n, src.begin() + end * n);
  return V<T>::make(BasicTensor<T>({end - begin, n}, std::move(buf)), {a}, [begin, n](NodeT<T>& self) {
    auto& dx = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[static_cast<std::size_t>(begin * n) + i] += self.grad[i];
  });
}

template <class T>
V<T> slice_cols(const V<T>& a, std::int64_t begin, std::int64_t end) {
  require_rank(a.shape(), 2, "slice_cols");
  if (begin < 0 || end > a.dim(1) || begin >= end) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside axis 1 of " + shape_str(a.shape()));
  }
  const std::int64_t m = a.dim(0), n = a.dim(1), w = end - begin;
  BasicTensor<T> out({m, w});
  for (std::int64_t r = 0; r < m; ++r)
    for (std::int64_t c = 0; c < w; ++c) out.at(r, c) = a.value().at(r, begin + c);
  return V<T>::make(std::move(out), {a}, [m, n, w, begin](NodeT<T>& self) {
    auto& dx = pgrad(self, 0);
    for (std::int64_t r = 0; r < m; ++r)
      for (std::int64_t c = 0; c < w; ++c) dx[static_cast<std::size_t>(r * n + begin + c)] += self.grad[static_cast<std::size_t>(r * w + c)];
  });
}

template <class T>
V<T> concat_rows(const std::vector<V<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::int64_t n = parts[0].dim(1);
  std::int64_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p.shape(), 2, "concat_rows");
    require_axis(p.dim(1), n, "concat_rows", "1");
    rows += p.dim(0);
  }
  std::vector<T> buf;
  buf.reserve(static_cast<std::size_t>(rows * n));
  std::vector<std::int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(static_cast<std::int64_t>(buf.size()));
    buf.insert(buf.end(), p.value().data().begin(), p.value().data().end());
  }
  return V<T>::make(BasicTensor<T>({rows, n}, std::move(buf)), parts, [offsets](NodeT<T>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!wants_grad(self, i)) continue;
      auto& dx = pgrad(self, i);
      for (std::size_t j = 0; j < dx.size(); ++j) dx[j] += self.grad[static_cast<std::size_t>(offsets[i]) + j];
    }
  });
}

template <class T>
V<T> concat_cols(const std::vector<V<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::int64_t m = parts[0].dim(0);
  std::int64_t cols = 0;
  std::vector<std::int64_t> offsets;
  for (const auto& p : parts) {
    require_rank(p.shape(), 2, "concat_cols");
    require_axis(p.dim(0), m, "concat_cols", "0");
    offsets.push_back(cols);
    cols += p.dim(1);
  }
  BasicTensor<T> out({m, cols});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::int64_t w = parts[i].dim(1);
    for (std::int64_t r = 0; r < m; ++r)
      for (std::int64_t c = 0; c < w; ++c) out.at(r, offsets[i] + c) = parts[i].value().at(r, c);
  }
  return V<T>::make(std::move(out), parts, [offsets, m, cols](NodeT<T>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!wants_grad(self, i)) continue;
      auto& dx = pgrad(self, i);
      const std::int64_t w = self.parents[i]->value.dim(1);
      for (std::int64_t r = 0; r < m; ++r)
        for (std::int64_t c = 0; c < w; ++c) dx[static_cast<std::size_t>(r * w + c)] += self.grad[static_cast<std::size_t>(r * cols + offsets[i] + c)];
    }
  });
}

template <class T>
V<T> repeat_channel(const V<T>& x, std::int64_t channel, std::int64_t times) {
  require_rank(x.shape(), 3, "repeat_channel");
  if (channel < 0 || channel >= x.dim(0)) throw DimensionError("repeat_channel: channel out of range");
  const std::int64_t plane = x.dim(1) * x.dim(2);
  const auto src = x.value().data().subspan(static_cast<std::size_t>(channel * plane), static_cast<std::size_t>(plane));
  std::vector<T> buf;
  buf.reserve(static_cast<std::size_t>(plane * times));
  for (std::int64_t t = 0; t < times; ++t) buf.insert(buf.end(), src.begin(), src.end());
  return V<T>::make(BasicTensor<T>({times, x.dim(1), x.dim(2)}, std::move(buf)), {x},
                    [channel, times, plane](NodeT<T>& self) {
    auto& dx = pgrad(self, 0);
    for (std::int64_t t = 0; t < times; ++t)
      for (std::int64_t i = 0; i < plane; ++i) dx[static_cast<std::size_t>(channel * plane + i)] += self.grad[static_cast<std::size_t>(t * plane + i)];
  });
}

template <class T>
V<T> patchify(const V<T>& x, std::int64_t patch) {
  require_rank(x.shape(), 3, "patchify");
  const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % patch != 0) throw DimensionError("patchify: axis 1 (" + std::to_string(h) + ") not divisible by patch " + std::to_string(patch));
  if (w % patch != 0) throw DimensionError("patchify: axis 2 (" + std::to_string(w) + ") not divisible by patch " + std::to_string(patch));
  const std::int64_t gh = h / patch, gw = w / patch, feat = c * patch * patch;
  // index[out] = flat input index
  std::vector<std::int64_t> index(static_cast<std::size_t>(gh * gw * feat));
  for (std::int64_t gy = 0; gy < gh; ++gy)
    for (std::int64_t gx = 0; gx < gw; ++gx)
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t py = 0; py < patch; ++py)
          for (std::int64_t px = 0; px < patch; ++px) {
            const std::int64_t t = gy * gw + gx;
            const std::int64_t f = (ch * patch + py) * patch + px;
            index[static_cast<std::size_t>(t * feat + f)] = (ch * h + gy * patch + py) * w + gx * patch + px;
          }
  BasicTensor<T> out({gh * gw, feat});
  const auto src = x.value().data();
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = src[static_cast<std::size_t>(index[i])];
  return V<T>::make(std::move(out), {x}, [index = std::move(index)](NodeT<T>& self) {
    auto& dx = pgrad(self, 0);
    for (std::size_t i = 0; i < index.size(); ++i) dx[static_cast<std::size_t>(index[i])] += self.grad[i];
  });
}

template <class T>
V<T> sum(const V<T>& a) {
  T s{0};
  for (T v : a.value().data()) s += v;
  return V<T>::make(BasicTensor<T>({1}, std::vector<T>{s}), {a}, [](NodeT<T>& self) {
    auto& dx = pgrad(self, 0);
    const T g = self.grad[0];
    for (auto& d : dx) d += g;
  });
}

template <class T>
V<T> mean(const V<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.numel()));
}

template <class T>
V<T> mean_of(const std::vector<V<T>>& parts) {
  if (parts.empty()) throw DimensionError("mean_of: no inputs");
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) throw DimensionError("mean_of: shape " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
  }
  BasicTensor<T> out(parts[0].shape());
  for (const auto& p : parts) add_into(out.storage(), p.value().data());
  const T inv = T{1} / static_cast<T>(parts.size());
  for (auto& v : out.storage()) v *= inv;
  return V<T>::make(std::move(out), parts, [inv](NodeT<T>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!wants_grad(self, i)) continue;
      auto& dx = pgrad(self, i);
      for (std::size_t j = 0; j < dx.size(); ++j) dx[j] += self.grad[j] * inv;
    }
  });
}

template <class T>
V<T> conv2d(const V<T>& input, const V<T>& weight, const V<T>& bias, int stride, int padding) {
  require_rank(input.shape(), 3, "conv2d");
  require_rank(weight.shape(), 4, "conv2d");
  const int cin = static_cast<int>(input.dim(0)), h = static_cast<int>(input.dim(1)), w = static_cast<int>(input.dim(2));
  const int cout = static_cast<int>(weight.dim(0)), k = static_cast<int>(weight.dim(2));
  require_axis(weight.dim(1), cin, "conv2d", "1 of weight (input channels)");
  require_axis(weight.dim(3), k, "conv2d", "3 of weight (square kernel)");
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  if (k > h + 2 * padding) throw DimensionError("conv2d: kernel larger than padded axis 1 (height)");
  if (k > w + 2 * padding) throw DimensionError("conv2d: kernel larger than padded axis 2 (width)");
  if (bias.defined()) require_axis(bias.numel(), cout, "conv2d", "0 of bias");
  const int ho = (h + 2 * padding - k) / stride + 1;
  const int wo = (w + 2 * padding - k) / stride + 1;
  const int ck = cin * k * k;
  const int hw = ho * wo;
  std::vector<T> cols(static_cast<std::size_t>(ck) * hw);
  im2col(input.value().data().data(), cin, h, w, k, stride, padding, ho, wo, cols.data());
  BasicTensor<T> out({cout, ho, wo});
  kernels::gemm(cout, hw, ck, weight.value().data().data(), ck, cols.data(), hw, out.storage().data(), hw, false);
  if (bias.defined()) {
    const auto bv = bias.value().data();
    for (int o = 0; o < cout; ++o)
      for (int i = 0; i < hw; ++i) out.storage()[static_cast<std::size_t>(o) * hw + i] += bv[static_cast<std::size_t>(o)];
  }
  std::vector<V<T>> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return V<T>::make(std::move(out), std::move(parents),
                    [cols = std::move(cols), cin, h, w, cout, k, stride, padding, ho, wo, ck, hw, has_bias](NodeT<T>& self) {
    const T* g = self.grad.data();
    if (wants_grad(self, 1)) mm<T>(false, true, cout, ck, hw, g, cols.data(), pgrad(self, 1).data(), true);
    if (wants_grad(self, 0)) {
      std::vector<T> dcols(static_cast<std::size_t>(ck) * hw);
      mm<T>(true, false, ck, hw, cout, self.parents[1]->value.storage().data(), g, dcols.data(), false);
      col2im(dcols.data(), cin, h, w, k, stride, padding, ho, wo, pgrad(self, 0).data());
    }
    if (has_bias && wants_grad(self, 2)) {
      auto& db = pgrad(self, 2);
      for (int o = 0; o < cout; ++o) {
        T s{0};
        for (int i = 0; i < hw; ++i) s += g[static_cast<std::size_t>(o) * hw + i];
        db[static_cast<std::size_t>(o)] += s;
      }
    }
  });
}

template <class T>
V<T> conv_transpose2d(const V<T>& input, const V<T>& weight, const V<T>& bias, int stride) {
  require_rank(input.shape(), 3, "conv_transpose2d");
  require_rank(weight.shape(), 4, "conv_transpose2d");
  const int cin = static_cast<int>(input.dim(0)), h = static_cast<int>(input.dim(1)), w = static_cast<int>(input.dim(2));
  require_axis(weight.dim(0), cin, "conv_transpose2d", "0 of weight (input channels)");
  const int cout = static_cast<int>(weight.dim(1)), k = static_cast<int>(weight.dim(2));
  require_axis(weight.dim(3), k, "conv_transpose2d", "3 of weight (square kernel)");
  if (stride < 1) throw DimensionError("conv_transpose2d: stride must be >= 1");
  if (bias.defined()) require_axis(bias.numel(), cout, "conv_transpose2d", "0 of bias");
  const int ho = (h - 1) * stride + k, wo = (w - 1) * stride + k;
  const int ck = cout * k * k, hw = h * w;
  std::vector<T> cols(static_cast<std::size_t>(ck) * hw);
  // cols[Cout·k², HW] = W_flatᵀ · x, with W_flat [Cin, Cout·k²].
  mm<T>(true, false, ck, hw, cin, weight.value().data().data(), input.value().data().data(), cols.data(), false);
  BasicTensor<T> out({cout, ho, wo});
  col2im(cols.data(), cout, ho, wo, k, stride, 0, h, w, out.storage().data());
  if (bias.defined()) {
    const auto bv = bias.value().data();
    const std::size_t plane = static_cast<std::size_t>(ho) * wo;
    for (int o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < plane; ++i) out.storage()[o * plane + i] += bv[static_cast<std::size_t>(o)];
  }
  std::vector<V<T>> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return V<T>::make(std::move(out), std::move(parents),
                    [cin, h, w, cout, k, stride, ho, wo, ck, hw, has_bias](NodeT<T>& self) {
    std::vector<T> dcols(static_cast<std::size_t>(ck) * hw);
    im2col(self.grad.data(), cout, ho, wo, k, stride, 0, h, w, dcols.data());
    if (wants_grad(self, 0))
      mm<T>(false, false, cin, hw, ck, self.parents[1]->value.storage().data(), dcols.data(), pgrad(self, 0).data(), true);
    if (wants_grad(self, 1))
      mm<T>(false, true, cin, ck, hw, self.parents[0]->value.storage().data(), dcols.data(), pgrad(self, 1).data(), true);
    if (has_bias && wants_grad(self, 2)) {
      auto& db = pgrad(self, 2);
      const std::size_t plane = static_cast<std::size_t>(ho) * wo;
      for (int o = 0; o < cout; ++o) {
        T s{0};
        for (std::size_t i = 0; i < plane; ++i) s += self.grad[o * plane + i];
        db[static_cast<std::size_t>(o)] += s;
      }
    }
  });
}

template <class T>
V<T> multihead_attention(const V<T>& q, const V<T>& k, const V<T>& v, int heads) {
  const std::int64_t d = q.dim(1);
  if (heads < 1 || d % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  }
  require_axis(k.dim(1), d, "multihead_attention", "1 of keys");
  require_axis(v.dim(1), d, "multihead_attention", "1 of values");
  require_axis(v.dim(0), k.dim(0), "multihead_attention", "0 of values");
  const std::int64_t dh = d / heads;
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(dh));
  if (heads == 1) {
    auto p = softmax_rows(scale(matmul_nt(q, k), inv_sqrt));
    return matmul(p, v);
  }
  std::vector<V<T>> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    const std::int64_t b = hd * dh, e = b + dh;
    auto p = softmax_rows(scale(matmul_nt(slice_cols(q, b, e), slice_cols(k, b, e)), inv_sqrt));
    outs.push_back(matmul(p, slice_cols(v, b, e)));
  }
  return concat_cols(outs);
}

#define SIMMAT_INSTANTIATE_OPS(T)                                                                  \
  template V<T> matmul(const V<T>&, const V<T>&);                                                  \
  template V<T> matmul_nt(const V<T>&, const V<T>&);                                               \
  template V<T> linear(const V<T>&, const V<T>&, const V<T>&);                                     \
  template V<T> add(const V<T>&, const V<T>&);                                                     \
  template V<T> sub(const V<T>&, const V<T>&);                                                     \
  template V<T> mul(const V<T>&, const V<T>&);                                                     \
  template V<T> scale(const V<T>&, T);                                                             \
  template V<T> add_row(const V<T>&, const V<T>&);                                                 \
  template V<T> relu(const V<T>&);                                                                 \
  template V<T> gelu(const V<T>&);                                                                 \
  template V<T> sigmoid(const V<T>&);                                                              \
  template V<T> softmax_rows(const V<T>&);                                                         \
  template V<T> layer_norm_rows(const V<T>&, const V<T>&, const V<T>&, T);                         \
  template V<T> transpose(const V<T>&);                                                            \
  template V<T> reshape(const V<T>&, Shape);                                                       \
  template V<T> slice_rows(const V<T>&, std::int64_t, std::int64_t);                               \
  template V<T> slice_cols(const V<T>&, std::int64_t, std::int64_t);                               \
  template V<T> concat_rows(const std::vector<V<T>>&);                                             \
  template V<T> concat_cols(const std::vector<V<T>>&);                                             \
  template V<T> repeat_channel(const V<T>&, std::int64_t, std::int64_t);                           \
  template V<T> patchify(const V<T>&, std::int64_t);                                               \
  template V<T> sum(const V<T>&);                                                                  \
  template V<T> mean(const V<T>&);                                                                 \
  template V<T> mean_of(const std::vector<V<T>>&);                                                 \
  template V<T> conv2d(const V<T>&, const V<T>&, const V<T>&, int, int);                           \
  template V<T> conv_transpose2d(const V<T>&, const V<T>&, const V<T>&, int);                      \
  template V<T> multihead_attention(const V<T>&, const V<T>&, const V<T>&, int);

SIMMAT_INSTANTIATE_OPS(float)
SIMMAT_INSTANTIATE_OPS(double)

}  // namespace simmat::ops
