#include "handtraj/geometry/ransac.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "handtraj/common/rng.hpp"

namespace handtraj::geometry {

namespace {

bool nearly_collinear(Point2 a, Point2 b, Point2 c) {
  const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  const double scale = std::max({distance(a, b), distance(a, c), distance(b, c), 1e-300});
  return std::abs(cross) <= 1e-9 * scale * scale;
}

bool sample_degenerate(const std::array<PointMatch, 4>& s) {
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      for (int k = j + 1; k < 4; ++k) {
        if (nearly_collinear(s[i].src, s[j].src, s[k].src) ||
            nearly_collinear(s[i].dst, s[j].dst, s[k].dst)) {
          return true;
        }
      }
    }
  }
  return false;
}

// Exact homography through four correspondences with h33 = 1, solved in
// Hartley-normalized coordinates.
bool solve_minimal(const std::array<PointMatch, 4>& s, Homography& out) {
  std::array<Point2, 4> src, dst;
  for (int i = 0; i < 4; ++i) {
    src[i] = s[i].src;
    dst[i] = s[i].dst;
  }
  auto normalizer = [](const std::array<Point2, 4>& pts) {
    double cx = 0, cy = 0;
    for (auto& p : pts) cx += p.x, cy += p.y;
    cx /= 4, cy /= 4;
    double d = 0;
    for (auto& p : pts) d += std::hypot(p.x - cx, p.y - cy);
    d /= 4;
    const double sc = std::sqrt(2.0) / d;
    Eigen::Matrix3d t;
    t << sc, 0, -sc * cx, 0, sc, -sc * cy, 0, 0, 1;
    return t;
  };
  const Eigen::Matrix3d ts = normalizer(src);
  const Eigen::Matrix3d td = normalizer(dst);

  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d p = ts * Eigen::Vector3d(src[i].x, src[i].y, 1.0);
    const Eigen::Vector3d q = td * Eigen::Vector3d(dst[i].x, dst[i].y, 1.0);
    const double x = p.x(), y = p.y(), u = q.x(), v = q.y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (lu.rank() < 8) return false;
  const Eigen::Matrix<double, 8, 1> h = lu.solve(b);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  try {
    out = Homography(td.inverse() * hn * ts);
  } catch (const DegenerateConfiguration&) {
    return false;
  }
  return true;
}

std::size_t score(const Homography& h, std::span<const PointMatch> matches, double threshold,
                  std::vector<bool>& mask) {
  mask.assign(matches.size(), false);
  std::size_t count = 0;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (reprojection_error(h, matches[i]) <= threshold) {
      mask[i] = true;
      ++count;
    }
  }
  return count;
}

}  // namespace

void RansacConfig::validate() const {
  if (max_iters < 1) throw ConfigError("ransac max_iters must be >= 1");
  if (!(inlier_threshold > 0.0)) throw ConfigError("ransac inlier_threshold must be > 0");
  if (min_inliers < 4) throw ConfigError("ransac min_inliers must be >= 4");
}

RansacResult ransac_homography(std::span<const PointMatch> matches, const RansacConfig& cfg) {
  cfg.validate();
  const std::size_t needed = static_cast<std::size_t>(std::max(4, cfg.min_inliers));
  if (matches.size() < needed) {
    throw InsufficientInliers("need at least " + std::to_string(needed) + " matches, got " +
                              std::to_string(matches.size()));
  }

  Rng rng(cfg.seed);
  const std::size_t n = matches.size();
  Homography best;
  std::vector<bool> best_mask, mask;
  std::size_t best_count = 0;
  bool found = false;

  std::array<PointMatch, 4> sample;
  std::array<std::size_t, 4> idx{};
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    for (int i = 0; i < 4; ++i) {
      bool fresh;
      do {
        idx[i] = rng.index(n);
        fresh = std::find(idx.begin(), idx.begin() + i, idx[i]) == idx.begin() + i;
      } while (!fresh);
      sample[i] = matches[idx[i]];
    }
    if (sample_degenerate(sample)) continue;
    Homography h;
    if (!solve_minimal(sample, h)) continue;
    const std::size_t count = score(h, matches, cfg.inlier_threshold, mask);
    if (!found || count > best_count) {
      found = true;
      best = h;
      best_count = count;
      best_mask = mask;
    }
  }
  if (!found || best_count < needed) {
    throw InsufficientInliers("best consensus " + std::to_string(best_count) + " < " +
                              std::to_string(needed));
  }

  // Refit on the consensus set until the set is stable.
  for (int round = 0; round < 10; ++round) {
    std::vector<PointMatch> inliers;
    inliers.reserve(best_count);
    for (std::size_t i = 0; i < n; ++i)
      if (best_mask[i]) inliers.push_back(matches[i]);
    Homography refit;
    try {
      refit = estimate_homography_dlt(inliers, true);
    } catch (const DegenerateConfiguration&) {
      break;
    }
    const std::size_t count = score(refit, matches, cfg.inlier_threshold, mask);
    if (count < needed) break;
    const bool stable = mask == best_mask;
    best = refit;
    best_mask = mask;
    best_count = count;
    if (stable) break;
  }

  return RansacResult{best, best_mask, best_count};
}

}  // namespace handtraj::geometry
