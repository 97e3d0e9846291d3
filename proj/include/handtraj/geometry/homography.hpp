#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "handtraj/common/error.hpp"
#include "handtraj/common/types.hpp"

namespace handtraj::geometry {

class DegenerateConfiguration : public Error {
 public:
  using Error::Error;
};

class InsufficientInliers : public Error {
 public:
  using Error::Error;
};

class AtInfinity : public Error {
 public:
  using Error::Error;
};

struct PointMatch {
  Point2 src;
  Point2 dst;
  double score = 1.0;
};

// Planar projective transform. Stored scaled so that m(2,2) == 1 whenever the
// raw matrix has a nonzero bottom-right entry.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  // Throws DegenerateConfiguration when |det| <= 1e-12 or entries are not finite.
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography identity() { return Homography(); }
  static Homography translation(double dx, double dy);
  static Homography scaling(double sx, double sy);

  const Eigen::Matrix3d& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Homography inverse() const;

  // (a * b) applies b first.
  friend Homography operator*(const Homography& a, const Homography& b) {
    return Homography(a.m_ * b.m_);
  }

  // Conjugates a pixel-space homography into coordinates normalized by the
  // frame size (x / width, y / height).
  Homography to_normalized(double width, double height) const;

  std::vector<double> to_row_major() const;
  static Homography from_row_major(std::span<const double> v);

 private:
  Eigen::Matrix3d m_;
};

// Homogeneous transform with perspective divide. Throws AtInfinity when the
// third coordinate vanishes (|w| < 1e-12).
Point2 project_point(const Homography& h, Point2 p);

// Distance between project_point(h, m.src) and m.dst; +inf when the source
// maps to infinity.
double reprojection_error(const Homography& h, const PointMatch& m);

// Least-squares DLT. With `normalize` the point sets are first moved to
// zero centroid and mean distance sqrt(2) (Hartley).
Homography estimate_homography_dlt(std::span<const PointMatch> matches, bool normalize = true);

// Product in list order: chain([A, B]) == A * B, so B is applied first.
Homography chain_homographies(std::span<const Homography> hs);

}  // namespace handtraj::geometry
