#include <doctest.h>

#include <random>
#include <vector>

#include "handtraj/kernels/gemm.hpp"

using namespace handtraj::kernels;

namespace {

template <typename Real>
std::vector<Real> random_matrix(std::size_t n, std::mt19937& gen) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(dist(gen));
  return v;
}

// Naive triple loop: C = op(A) * op(B) with explicit index arithmetic.
std::vector<double> naive(std::size_t m, std::size_t n, std::size_t k, const std::vector<double>& a,
                          const std::vector<double>& b, bool ta, bool tb) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * m + i] : a[i * k + p];
        const double bv = tb ? b[j * k + p] : b[p * n + j];
        c[i * n + j] += av * bv;
      }
  return c;
}

}  // namespace

TEST_CASE("gemm variants match the naive oracle") {
  std::mt19937 gen(7);
  const std::size_t m = 13, n = 17, k = 9;
  const auto a = random_matrix<double>(m * k, gen);
  const auto at = random_matrix<double>(k * m, gen);
  const auto b = random_matrix<double>(k * n, gen);
  const auto bt = random_matrix<double>(n * k, gen);

  std::vector<double> c(m * n, 0.0);
  gemm_nn<double>(m, n, k, a, b, c, Backend::kSerial);
  auto ref = naive(m, n, k, a, b, false, false);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));

  std::fill(c.begin(), c.end(), 0.0);
  gemm_nt<double>(m, n, k, a, bt, c, Backend::kSerial);
  ref = naive(m, n, k, a, bt, false, true);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));

  std::fill(c.begin(), c.end(), 0.0);
  gemm_tn<double>(m, n, k, at, b, c, Backend::kSerial);
  ref = naive(m, n, k, at, b, true, false);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("OpenMP backend is bit-identical to the serial reference") {
  std::mt19937 gen(11);
  const std::size_t m = 37, n = 64, k = 48;
  const auto a = random_matrix<float>(m * k, gen);
  const auto at = random_matrix<float>(k * m, gen);
  const auto b = random_matrix<float>(k * n, gen);
  const auto bt = random_matrix<float>(n * k, gen);

  auto run = [&](Backend backend) {
    std::vector<float> c1(m * n, 0.5f), c2(m * n, 0.5f), c3(m * n, 0.5f);
    gemm_nn<float>(m, n, k, a, b, c1, backend);
    gemm_nt<float>(m, n, k, a, bt, c2, backend);
    gemm_tn<float>(m, n, k, at, b, c3, backend);
    c1.insert(c1.end(), c2.begin(), c2.end());
    c1.insert(c1.end(), c3.begin(), c3.end());
    return c1;
  };
  CHECK(run(Backend::kSerial) == run(Backend::kOpenMP));
}
