#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "handtraj/geometry/homography.hpp"

namespace handtraj::geometry {

struct RansacConfig {
  int max_iters = 2000;
  double inlier_threshold = 3.0;  // pixels
  int min_inliers = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RansacResult {
  Homography homography;
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
};

// Fixed-budget RANSAC over 4-point samples, then DLT refits on the consensus
// set until it stops changing. The returned mask is computed against the
// returned homography, so every inlier is within the threshold. A pure
// function of (matches, cfg).
RansacResult ransac_homography(std::span<const PointMatch> matches, const RansacConfig& cfg);

}  // namespace handtraj::geometry
