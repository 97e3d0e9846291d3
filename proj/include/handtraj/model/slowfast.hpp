#pragma once

#include <vector>

#include "handtraj/nn/matrix.hpp"

namespace handtraj::model {

// T + s * (g/k)^2.
std::size_t pooled_token_count(std::size_t T, std::size_t g, std::size_t s, std::size_t k);

// round(i (T-1) / (s-1)) for i < s; the last frame when s == 1.
std::vector<std::size_t> slow_frame_indices(std::size_t T, std::size_t s);

// Linear operator taking T*g*g frame-major patch tokens to the pooled
// sequence [fast tokens (one per frame) | slow blocks in frame order].
// Throws ConfigError if k does not divide g or s > T.
nn::Matrix<double> slowfast_operator(std::size_t T, std::size_t g, std::size_t s, std::size_t k);

// Applies the operator to visual tokens of shape (T*g*g) x d.
template <typename Real>
nn::Matrix<Real> slowfast_pool(const nn::Matrix<Real>& tokens, std::size_t T, std::size_t g, std::size_t s,
                               std::size_t k);

}  // namespace handtraj::model
