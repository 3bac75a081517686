// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "fairprep/error.hpp"
#include "fairprep/kernels.hpp"
#include "fairprep/matrix.hpp"
#include "fairprep/rng.hpp"

using namespace fairprep;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Triple loop with plain indexing, independent of the kernel code.
std::vector<double> naive_product(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0.0L;
      for (std::size_t t = 0; t < k; ++t) s += static_cast<long double>(a[i * k + t]) * b[t * n + j];
      out[i * n + j] = static_cast<double>(s);
    }
  return out;
}

}  // namespace

TEST_CASE("matrix construction and shape checks") {
  Matrix m(2, 3, 1.5);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.size() == 6);
  CHECK(m(1, 2) == 1.5);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);

  const Matrix id = Matrix::identity(3);
  CHECK(id(0, 0) == 1.0);
  CHECK(id(0, 1) == 0.0);

  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5}, {6}};
  const Matrix h = Matrix::hcat(a, b);
  CHECK(h == Matrix{{1, 2, 5}, {3, 4, 6}});
  CHECK(Matrix::vcat(a, a).rows() == 4);
  CHECK_THROWS_AS(Matrix::hcat(a, Matrix(3, 1)), ShapeError);
  CHECK_THROWS_AS(Matrix::vcat(a, Matrix(1, 3)), ShapeError);

  const std::vector<std::size_t> idx{1, 1, 0};
  CHECK(a.gather_rows(idx) == Matrix{{3, 4}, {3, 4}, {1, 2}});
  CHECK(h.col_block(1, 2) == Matrix{{2, 5}, {4, 6}});
  CHECK(h.col(2) == std::vector<double>{5, 6});
  CHECK(a.all_finite());
  Matrix bad = a;
  bad(0, 0) = NAN;
  CHECK_FALSE(bad.all_finite());
}

TEST_CASE("rng is reproducible and permutations are complete") {
  Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng r(3);
  auto p = r.permutation(50);
  std::vector<std::size_t> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> expected(50);
  std::iota(expected.begin(), expected.end(), std::size_t{0});
  CHECK(sorted == expected);

  Rng s(11);
  s.normal();
  const std::string saved = s.state();
  const double next = s.normal();
  Rng t;
  t.set_state(saved);
  CHECK(t.normal() == next);

  Rng g(5);
  for (int i = 0; i < 1000; ++i) CHECK(std::isfinite(g.gumbel()));
}

TEST_CASE("gemm variants agree with a naive triple loop") {
  Rng rng(21);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 2}, {17, 9, 13}, {64, 33, 40}};
  for (const auto& s : shapes) {
    const std::size_t m = s[0], k = s[1], n = s[2];
    const auto a = random_values(m * k, rng), b = random_values(k * n, rng);
    const auto expected = naive_product(a, b, m, k, n);
    std::vector<double> out(m * n);
    kernels::serial::gemm(a, b, out, m, k, n);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(expected[i]).epsilon(1e-12));

    // a^T b with a stored (k x m): compare against the explicit transpose.
    const auto at = random_values(k * m, rng);
    std::vector<double> at_t(m * k);
    for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i)
      for (std::size_t j = 0; j < static_cast<std::size_t>(m); ++j) at_t[j * k + i] = at[i * m + j];
    const auto expected_tn = naive_product(at_t, b, m, k, n);
    std::vector<double> out_tn(m * n);
    kernels::serial::gemm_tn(at, b, out_tn, k, m, n);
    for (std::size_t i = 0; i < out_tn.size(); ++i)
      CHECK(out_tn[i] == doctest::Approx(expected_tn[i]).epsilon(1e-12));

    // a b^T with b stored (n x k).
    const auto bt = random_values(n * k, rng);
    std::vector<double> bt_t(k * n);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
      for (std::size_t j = 0; j < static_cast<std::size_t>(k); ++j) bt_t[j * n + i] = bt[i * k + j];
    const auto expected_nt = naive_product(a, bt_t, m, k, n);
    std::vector<double> out_nt(m * n);
    kernels::serial::gemm_nt(a, bt, out_nt, m, k, n);
    for (std::size_t i = 0; i < out_nt.size(); ++i)
      CHECK(out_nt[i] == doctest::Approx(expected_nt[i]).epsilon(1e-12));
  }
}

TEST_CASE("accumulate adds into the output") {
  const std::vector<double> a{1, 2}, b{3, 4};
  std::vector<double> out{10.0};
  kernels::serial::gemm(a, b, out, 1, 2, 1, true);
  CHECK(out[0] == 21.0);
}

TEST_CASE("omp kernels are bit-identical to the serial reference") {
  Rng rng(99);
  const std::size_t m = 123, k = 77, n = 45;
  const auto a = random_values(m * k, rng), b = random_values(k * n, rng);
  std::vector<double> s(m * n), p(m * n);
  kernels::serial::gemm(a, b, s, m, k, n);
  kernels::omp::gemm(a, b, p, m, k, n);
  CHECK(s == p);

  const auto c = random_values(m * n, rng);
  std::vector<double> s_tn(k * n), p_tn(k * n);
  kernels::serial::gemm_tn(a, c, s_tn, m, k, n);
  kernels::omp::gemm_tn(a, c, p_tn, m, k, n);
  CHECK(s_tn == p_tn);

  const auto d = random_values(n * k, rng);
  std::vector<double> s_nt(m * n), p_nt(m * n);
  kernels::serial::gemm_nt(a, d, s_nt, m, k, n);
  kernels::omp::gemm_nt(a, d, p_nt, m, k, n);
  CHECK(s_nt == p_nt);

  const auto q = random_values(60 * k, rng);
  std::vector<double> s_d(m * 60), p_d(m * 60);
  kernels::serial::sq_distances(a, q, s_d, m, 60, k);
  kernels::omp::sq_distances(a, q, p_d, m, 60, k);
  CHECK(s_d == p_d);
}

TEST_CASE("squared distances match the definition") {
  const std::vector<double> a{0, 0, 1, 1}, b{3, 4};
  std::vector<double> out(2);
  kernels::serial::sq_distances(a, b, out, 2, 1, 2);
  CHECK(out[0] == doctest::Approx(25.0));
  CHECK(out[1] == doctest::Approx(13.0));
}
