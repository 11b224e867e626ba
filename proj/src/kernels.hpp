#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <vector>

namespace tnt::kernels {

// C[M, N] += A[M, K] * B[K, N], all row-major and dense. Summation over k is
// in increasing order for every output, so results do not depend on how the
// caller partitions rows.
using v4d = double __attribute__((vector_size(32)));

[[gnu::always_inline]] inline v4d load4(const double* p) {
  v4d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

[[gnu::always_inline]] inline void store4(double* p, v4d v) { std::memcpy(p, &v, sizeof v); }

inline void gemm_acc(std::int64_t m, std::int64_t n, std::int64_t k, const double* __restrict a,
                     const double* __restrict b, double* __restrict c) {
  std::int64_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    std::int64_t j = 0;
    for (; j + 8 <= n; j += 8) {
      v4d c00{}, c01{}, c10{}, c11{}, c20{}, c21{}, c30{}, c31{};
      for (std::int64_t p = 0; p < k; ++p) {
        const v4d b0 = load4(b + p * n + j);
        const v4d b1 = load4(b + p * n + j + 4);
        c00 += a0[p] * b0;
        c01 += a0[p] * b1;
        c10 += a1[p] * b0;
        c11 += a1[p] * b1;
        c20 += a2[p] * b0;
        c21 += a2[p] * b1;
        c30 += a3[p] * b0;
        c31 += a3[p] * b1;
      }
      double* r0 = c + i * n + j;
      store4(r0, load4(r0) + c00);
      store4(r0 + 4, load4(r0 + 4) + c01);
      store4(r0 + n, load4(r0 + n) + c10);
      store4(r0 + n + 4, load4(r0 + n + 4) + c11);
      store4(r0 + 2 * n, load4(r0 + 2 * n) + c20);
      store4(r0 + 2 * n + 4, load4(r0 + 2 * n + 4) + c21);
      store4(r0 + 3 * n, load4(r0 + 3 * n) + c30);
      store4(r0 + 3 * n + 4, load4(r0 + 3 * n + 4) + c31);
    }
    for (; j + 4 <= n; j += 4) {
      v4d c0{}, c1{}, c2{}, c3{};
      for (std::int64_t p = 0; p < k; ++p) {
        const v4d bv = load4(b + p * n + j);
        c0 += a0[p] * bv;
        c1 += a1[p] * bv;
        c2 += a2[p] * bv;
        c3 += a3[p] * bv;
      }
      double* r0 = c + i * n + j;
      store4(r0, load4(r0) + c0);
      store4(r0 + n, load4(r0 + n) + c1);
      store4(r0 + 2 * n, load4(r0 + 2 * n) + c2);
      store4(r0 + 3 * n, load4(r0 + 3 * n) + c3);
    }
    for (; j < n; ++j) {
      for (std::int64_t r = 0; r < 4; ++r) {
        double acc = 0.0;
        for (std::int64_t p = 0; p < k; ++p) acc += a[(i + r) * k + p] * b[p * n + j];
        c[(i + r) * n + j] += acc;
      }
    }
  }
  for (; i < m; ++i) {
    const double* ai = a + i * k;
    std::int64_t j = 0;
    for (; j + 4 <= n; j += 4) {
      v4d acc{};
      for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * load4(b + p * n + j);
      store4(c + i * n + j, load4(c + i * n + j) + acc);
    }
    for (; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * b[p * n + j];
      c[i * n + j] += acc;
    }
  }
}

// out[cols, rows] = in[rows, cols]^T
inline void transpose(std::int64_t rows, std::int64_t cols, const double* __restrict in, double* __restrict out) {
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  }
}

inline std::vector<double> transposed(std::int64_t rows, std::int64_t cols, const double* in) {
  std::vector<double> out(static_cast<std::size_t>(rows * cols));
  transpose(rows, cols, in, out.data());
  return out;
}

}  // namespace tnt::kernels
