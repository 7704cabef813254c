#pragma once

// Dense kernels shared by the convolution and linear ops. Every output
// element accumulates its products in ascending reduction index, regardless
// of blocking or worker count.

#include <algorithm>
#include <cstddef>
#include <cstring>

#include "parallel.hpp"

namespace cgap2::kernels {

// Register tile: kRows rows of C by two 64-byte vectors of columns stay in
// registers for the whole reduction, so each element still sees its products
// in index order.
inline constexpr std::size_t kRows = 4;

namespace detail_ {

template <typename T>
struct Vec {
  typedef T type __attribute__((vector_size(64)));
  static constexpr std::size_t lanes = 64 / sizeof(T);
  static type load(const T* p) {
    type v;
    std::memcpy(&v, p, sizeof v);
    return v;
  }
  static void store(T* p, type v) { std::memcpy(p, &v, sizeof v); }
};

template <typename T>
inline constexpr std::size_t kCols = 2 * Vec<T>::lanes;

template <typename T>
inline void tile_4xn(std::size_t N, std::size_t K, const T* A, const T* B, T* C, std::size_t i, std::size_t j) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  T* c0 = C + i * N + j;
  typename V::type acc[kRows][2];
  for (std::size_t r = 0; r < kRows; ++r) acc[r][0] = V::load(c0 + r * N), acc[r][1] = V::load(c0 + r * N + L);
  const T* a0 = A + i * K;
  for (std::size_t l = 0; l < K; ++l) {
    const T* b = B + l * N + j;
    const auto b0 = V::load(b), b1 = V::load(b + L);
    for (std::size_t r = 0; r < kRows; ++r) {
      const T x = a0[r * K + l];
      acc[r][0] += x * b0;
      acc[r][1] += x * b1;
    }
  }
  for (std::size_t r = 0; r < kRows; ++r) V::store(c0 + r * N, acc[r][0]), V::store(c0 + r * N + L, acc[r][1]);
}

template <typename T>
inline void tile_1xn(std::size_t N, std::size_t K, const T* A, const T* B, T* C, std::size_t i, std::size_t j) {
  using V = Vec<T>;
  constexpr std::size_t L = V::lanes;
  T* c = C + i * N + j;
  auto acc0 = V::load(c), acc1 = V::load(c + L);
  const T* a = A + i * K;
  for (std::size_t l = 0; l < K; ++l) {
    const T* b = B + l * N + j;
    acc0 += a[l] * V::load(b);
    acc1 += a[l] * V::load(b + L);
  }
  V::store(c, acc0);
  V::store(c + L, acc1);
}

}  // namespace detail_

/// C[M][N] += A[M][K] * B[K][N]
template <typename T>
void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  detail::parallel_for(M, 8, [&](std::size_t row_begin, std::size_t row_end) {
    const std::size_t full = N - N % detail_::kCols<T>;
    const std::size_t row_full = row_begin + (row_end - row_begin) / kRows * kRows;
    // Column tiles outermost so each K x kCols panel of B is loaded once and
    // reused from cache by every row block.
    for (std::size_t j = 0; j < full; j += detail_::kCols<T>) {
      for (std::size_t i = row_begin; i < row_full; i += kRows) detail_::tile_4xn(N, K, A, B, C, i, j);
      for (std::size_t i = row_full; i < row_end; ++i) detail_::tile_1xn(N, K, A, B, C, i, j);
    }
    for (std::size_t i = row_begin; i < row_end; ++i)
      for (std::size_t l = 0; l < K; ++l) {
        const T a = A[i * K + l];
        const T* b = B + l * N;
        for (std::size_t j = full; j < N; ++j) C[i * N + j] += a * b[j];
      }
  });
}

/// C[M][N] += A[M][K] * B[N][K]^T. Each dot product is reduced in vector
/// lanes and then folded in a fixed order, so results do not depend on the
/// worker count.
template <typename T>
void gemm_nt_acc(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  using V = detail_::Vec<T>;
  constexpr std::size_t L = V::lanes;
  const std::size_t kfull = K - K % L;
  auto fold = [](typename V::type v) {
    T s = T(0);
    for (std::size_t q = 0; q < L; ++q) s += v[q];
    return s;
  };
  detail::parallel_for(M, 4, [&](std::size_t row_begin, std::size_t row_end) {
    for (std::size_t i = row_begin; i < row_end; i += 2) {
      const bool pair = i + 1 < row_end;
      const T* a0 = A + i * K;
      const T* a1 = pair ? a0 + K : a0;
      std::size_t j = 0;
      for (; j + 2 <= N; j += 2) {
        const T* b0 = B + j * K;
        const T* b1 = b0 + K;
        typename V::type s00{}, s01{}, s10{}, s11{};
        for (std::size_t l = 0; l < kfull; l += L) {
          const auto x0 = V::load(a0 + l), x1 = V::load(a1 + l), y0 = V::load(b0 + l), y1 = V::load(b1 + l);
          s00 += x0 * y0;
          s01 += x0 * y1;
          s10 += x1 * y0;
          s11 += x1 * y1;
        }
        T t00 = fold(s00), t01 = fold(s01), t10 = fold(s10), t11 = fold(s11);
        for (std::size_t l = kfull; l < K; ++l) {
          t00 += a0[l] * b0[l];
          t01 += a0[l] * b1[l];
          t10 += a1[l] * b0[l];
          t11 += a1[l] * b1[l];
        }
        C[i * N + j] += t00;
        C[i * N + j + 1] += t01;
        if (pair) C[(i + 1) * N + j] += t10, C[(i + 1) * N + j + 1] += t11;
      }
      for (; j < N; ++j) {
        const T* b0 = B + j * K;
        typename V::type s0{}, s1{};
        for (std::size_t l = 0; l < kfull; l += L) {
          const auto y0 = V::load(b0 + l);
          s0 += V::load(a0 + l) * y0;
          s1 += V::load(a1 + l) * y0;
        }
        T t0 = fold(s0), t1 = fold(s1);
        for (std::size_t l = kfull; l < K; ++l) t0 += a0[l] * b0[l], t1 += a1[l] * b0[l];
        C[i * N + j] += t0;
        if (pair) C[(i + 1) * N + j] += t1;
      }
    }
  });
}

/// C[M][N] += A^T * B with A stored [K][M] and B stored [K][N].
template <typename T>
void gemm_tn_acc(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  for (std::size_t l = 0; l < K; ++l) {
    const T* b = B + l * N;
    for (std::size_t i = 0; i < M; ++i) {
      const T a = A[l * M + i];
      T* c = C + i * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
    }
  }
}

/// dst[cols][rows] = src[rows][cols]
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t rb = 0; rb < rows; rb += kTile)
    for (std::size_t cb = 0; cb < cols; cb += kTile)
      for (std::size_t r = rb; r < std::min(rows, rb + kTile); ++r)
        for (std::size_t c = cb; c < std::min(cols, cb + kTile); ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace cgap2::kernels
