#include "handtraj/kernels/gemm.hpp"

#include <atomic>
#include <cassert>

namespace handtraj::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::kSerial};

template <typename Real>
inline void axpy(Real alpha, const Real* x, Real* y, std::size_t n) {
#pragma omp simd
  for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}
}  // namespace

void set_default_backend(Backend b) { g_backend = b; }
Backend default_backend() { return g_backend; }

template <typename Real>
Real dot(const Real* a, const Real* b, std::size_t n) {
  Real acc = 0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const Real> a,
             std::span<const Real> b, std::span<Real> c, Backend backend) {
  assert(a.size() >= m * k && b.size() >= k * n && c.size() >= m * n);
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real* pc = c.data();
  if (backend == Backend::kSerial) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const Real aip = pa[i * k + p];
        if (aip != Real(0)) axpy(aip, pb + p * n, pc + i * n, n);
      }
    }
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = pa[i * k + p];
      if (aip != Real(0)) axpy(aip, pb + p * n, pc + i * n, n);
    }
  }
}

template <typename Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const Real> a,
             std::span<const Real> b, std::span<Real> c, Backend backend) {
  assert(a.size() >= m * k && b.size() >= n * k && c.size() >= m * n);
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real* pc = c.data();
  if (backend == Backend::kSerial) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) pc[i * n + j] += dot(pa + i * k, pb + j * k, k);
    }
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) pc[i * n + j] += dot(pa + i * k, pb + j * k, k);
  }
}

template <typename Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const Real> a,
             std::span<const Real> b, std::span<Real> c, Backend backend) {
  assert(a.size() >= k * m && b.size() >= k * n && c.size() >= m * n);
  const Real* pa = a.data();
  const Real* pb = b.data();
  Real* pc = c.data();
  if (backend == Backend::kSerial) {
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t i = 0; i < m; ++i) {
        const Real api = pa[p * m + i];
        if (api != Real(0)) axpy(api, pb + p * n, pc + i * n, n);
      }
    }
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t p = 0; p < k; ++p) {
      const Real api = pa[p * m + i];
      if (api != Real(0)) axpy(api, pb + p * n, pc + i * n, n);
    }
  }
}

#define HANDTRAJ_INSTANTIATE(Real)                                                              \
  template Real dot<Real>(const Real*, const Real*, std::size_t);                              \
  template void gemm_nn<Real>(std::size_t, std::size_t, std::size_t, std::span<const Real>,    \
                              std::span<const Real>, std::span<Real>, Backend);                \
  template void gemm_nt<Real>(std::size_t, std::size_t, std::size_t, std::span<const Real>,    \
                              std::span<const Real>, std::span<Real>, Backend);                \
  template void gemm_tn<Real>(std::size_t, std::size_t, std::size_t, std::span<const Real>,    \
                              std::span<const Real>, std::span<Real>, Backend);

HANDTRAJ_INSTANTIATE(float)
HANDTRAJ_INSTANTIATE(double)
#undef HANDTRAJ_INSTANTIATE

}  // namespace handtraj::kernels
