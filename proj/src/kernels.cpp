// SPDX-License-Identifier: Apache-2.0
#include "fairprep/kernels.hpp"

#include <algorithm>

namespace fairprep::kernels {

namespace {

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

inline void gemm_row(const double* a, const double* b, double* out, std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(out, out + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = a[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += aip * brow[j];
  }
}

inline void gemm_tn_row(const double* a, const double* b, double* out, std::size_t p, std::size_t m, std::size_t k,
                        std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(out, out + n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double aip = a[i * k + p];
    const double* brow = b + i * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += aip * brow[j];
  }
}

inline void gemm_nt_row(const double* a, const double* b, double* out, std::size_t n, std::size_t k, bool accumulate) {
  for (std::size_t j = 0; j < k; ++j) {
    const double* brow = b + j * n;
    double s = 0.0;
    for (std::size_t q = 0; q < n; ++q) s += a[q] * brow[q];
    out[j] = accumulate ? out[j] + s : s;
  }
}

inline void sq_dist_row(const double* a, const double* b, double* out, std::size_t p, std::size_t d) {
  for (std::size_t j = 0; j < p; ++j) {
    const double* brow = b + j * d;
    double s = 0.0;
    for (std::size_t q = 0; q < d; ++q) {
      const double diff = a[q] - brow[q];
      s += diff * diff;
    }
    out[j] = s;
  }
}

}  // namespace

namespace serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) gemm_row(a.data() + i * k, b.data(), out.data() + i * n, k, n, accumulate);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t p = 0; p < k; ++p) gemm_tn_row(a.data(), b.data(), out.data() + p * n, p, m, k, n, accumulate);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t n, std::size_t k, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) gemm_nt_row(a.data() + i * n, b.data(), out.data() + i * k, n, k, accumulate);
}

void sq_distances(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                  std::size_t p, std::size_t d) {
  for (std::size_t i = 0; i < m; ++i) sq_dist_row(a.data() + i * d, b.data(), out.data() + i * p, p, d);
}

}  // namespace serial

namespace omp {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_row(a.data() + r * k, b.data(), out.data() + r * n, k, n, accumulate);
  }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < rows; ++p) {
    const auto r = static_cast<std::size_t>(p);
    gemm_tn_row(a.data(), b.data(), out.data() + r * n, r, m, k, n, accumulate);
  }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t n, std::size_t k, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    gemm_nt_row(a.data() + r * n, b.data(), out.data() + r * k, n, k, accumulate);
  }
}

void sq_distances(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                  std::size_t p, std::size_t d) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    sq_dist_row(a.data() + r * d, b.data(), out.data() + r * p, p, d);
  }
}

}  // namespace omp

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
  if (m * k * n >= kParallelWork) return omp::gemm(a, b, out, m, k, n, accumulate);
  serial::gemm(a, b, out, m, k, n, accumulate);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  if (m * k * n >= kParallelWork) return omp::gemm_tn(a, b, out, m, k, n, accumulate);
  serial::gemm_tn(a, b, out, m, k, n, accumulate);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t n, std::size_t k, bool accumulate) {
  if (m * k * n >= kParallelWork) return omp::gemm_nt(a, b, out, m, n, k, accumulate);
  serial::gemm_nt(a, b, out, m, n, k, accumulate);
}

void sq_distances(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                  std::size_t p, std::size_t d) {
  if (m * p * d >= kParallelWork) return omp::sq_distances(a, b, out, m, p, d);
  serial::sq_distances(a, b, out, m, p, d);
}

}  // namespace fairprep::kernels
