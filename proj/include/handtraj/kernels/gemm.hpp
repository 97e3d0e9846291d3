#pragma once

#include <cstddef>
#include <span>

namespace handtraj::kernels {

// Serial loops are the reference; the OpenMP variants split the output rows
// across threads and keep each element's accumulation order, so both
// backends produce bit-identical results.
enum class Backend { kSerial, kOpenMP };

void set_default_backend(Backend b);
Backend default_backend();

// Row-major throughout. All three accumulate into C.

// C[m,n] += A[m,k] * B[k,n]
template <typename Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const Real> a,
             std::span<const Real> b, std::span<Real> c, Backend backend = default_backend());

// C[m,n] += A[m,k] * B[n,k]^T
template <typename Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const Real> a,
             std::span<const Real> b, std::span<Real> c, Backend backend = default_backend());

// C[m,n] += A[k,m]^T * B[k,n]
template <typename Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const Real> a,
             std::span<const Real> b, std::span<Real> c, Backend backend = default_backend());

template <typename Real>
Real dot(const Real* a, const Real* b, std::size_t n);

}  // namespace handtraj::kernels
