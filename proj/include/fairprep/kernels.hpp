// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense kernels used by the network engine and the nearest-neighbour models.
// Each kernel has a serial reference and an OpenMP version. The OpenMP versions
// partition output rows only; every output element is accumulated in the same
// order as the reference, so both produce bit-identical results.

#include <cstddef>
#include <span>

namespace fairprep::kernels {

namespace serial {
/// out(m x n) = a(m x k) * b(k x n), or += when accumulate is set.
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate = false);
/// out(k x n) = a(m x k)^T * b(m x n)
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
/// out(m x k) = a(m x n) * b(k x n)^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t n, std::size_t k, bool accumulate = false);
/// out(m x p) squared euclidean distances between rows of a(m x d) and b(p x d).
void sq_distances(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                  std::size_t p, std::size_t d);
}  // namespace serial

namespace omp {
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate = false);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t n, std::size_t k, bool accumulate = false);
void sq_distances(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                  std::size_t p, std::size_t d);
}  // namespace omp

// Dispatch used by the library: OpenMP above a work threshold, serial otherwise.
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate = false);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate = false);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t n, std::size_t k, bool accumulate = false);
void sq_distances(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                  std::size_t p, std::size_t d);

}  // namespace fairprep::kernels
