#pragma once

#include <span>
#include <vector>

#include "handtraj/common/error.hpp"
#include "handtraj/tokens/sequence.hpp"

namespace handtraj::tokens {

// Learned affine map from hand features into embedding space; w is 6 x d,
// row-major.
template <typename Real>
struct HandEncoderParams {
  std::size_t dim = 0;
  std::vector<Real> w;
  std::vector<Real> b;
};

// base + features(h) * W + b.
template <typename Real>
std::vector<Real> encode_hand_features(std::span<const double> features, const HandEncoderParams<Real>& p,
                                       std::span<const Real> base) {
  if (features.size() != 6 || p.w.size() != 6 * p.dim || p.b.size() != p.dim || base.size() != p.dim) {
    throw ShapeMismatch("encode_hand_step: parameter shapes disagree");
  }
  std::vector<Real> out(base.begin(), base.end());
  for (std::size_t j = 0; j < p.dim; ++j) out[j] += p.b[j];
  for (std::size_t i = 0; i < 6; ++i) {
    const Real f = static_cast<Real>(features[i]);
    for (std::size_t j = 0; j < p.dim; ++j) out[j] += f * p.w[i * p.dim + j];
  }
  return out;
}

template <typename Real>
std::vector<Real> encode_hand_step(const HandStep& h, const HandEncoderParams<Real>& p, std::span<const Real> base) {
  const auto f = hand_features(h);
  return encode_hand_features<Real>(f, p, base);
}

}  // namespace handtraj::tokens
