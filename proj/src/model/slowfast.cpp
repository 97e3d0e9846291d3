#include "handtraj/model/slowfast.hpp"

#include <cmath>

#include "handtraj/kernels/gemm.hpp"

namespace handtraj::model {

std::size_t pooled_token_count(std::size_t T, std::size_t g, std::size_t s, std::size_t k) {
  const std::size_t side = g / k;
  return T + s * side * side;
}

std::vector<std::size_t> slow_frame_indices(std::size_t T, std::size_t s) {
  std::vector<std::size_t> idx;
  if (s == 1) return {T - 1};
  for (std::size_t i = 0; i < s; ++i) {
    idx.push_back(static_cast<std::size_t>(
        std::lround(static_cast<double>(i) * static_cast<double>(T - 1) / static_cast<double>(s - 1))));
  }
  return idx;
}

nn::Matrix<double> slowfast_operator(std::size_t T, std::size_t g, std::size_t s, std::size_t k) {
  if (k == 0 || g % k != 0) throw ConfigError("slowfast: pool kernel " + std::to_string(k) + " does not divide grid " + std::to_string(g));
  if (s > T) throw ConfigError("slowfast: more slow frames than frames");
  const std::size_t M = g * g, side = g / k;
  nn::Matrix<double> P(pooled_token_count(T, g, s, k), T * M);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t m = 0; m < M; ++m) P(t, t * M + m) = 1.0 / static_cast<double>(M);
  std::size_t row = T;
  const double w = 1.0 / static_cast<double>(k * k);
  for (std::size_t f : slow_frame_indices(T, s)) {
    for (std::size_t by = 0; by < side; ++by) {
      for (std::size_t bx = 0; bx < side; ++bx, ++row) {
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx) P(row, f * M + (by * k + dy) * g + bx * k + dx) = w;
      }
    }
  }
  return P;
}

template <typename Real>
nn::Matrix<Real> slowfast_pool(const nn::Matrix<Real>& tokens, std::size_t T, std::size_t g, std::size_t s,
                               std::size_t k) {
  if (tokens.rows != T * g * g) {
    throw ShapeMismatch("slowfast_pool: expected " + std::to_string(T * g * g) + " tokens, got " +
                        std::to_string(tokens.rows));
  }
  const auto P = slowfast_operator(T, g, s, k).cast<Real>();
  nn::Matrix<Real> out(P.rows, tokens.cols);
  kernels::gemm_nn<Real>(P.rows, tokens.cols, P.cols, P.span(), tokens.span(), out.span(), kernels::Backend::kSerial);
  return out;
}

template nn::Matrix<float> slowfast_pool(const nn::Matrix<float>&, std::size_t, std::size_t, std::size_t, std::size_t);
template nn::Matrix<double> slowfast_pool(const nn::Matrix<double>&, std::size_t, std::size_t, std::size_t,
                                          std::size_t);

}  // namespace handtraj::model
