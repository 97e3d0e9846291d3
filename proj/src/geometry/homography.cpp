#include "handtraj/geometry/homography.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace handtraj::geometry {

namespace {

constexpr double kDetEpsilon = 1e-12;

// Similarity taking the points to zero centroid and mean distance sqrt(2).
Eigen::Matrix3d hartley_transform(std::span<const Point2> pts) {
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 0.0)) throw DegenerateConfiguration("all points coincide");
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

Point2 apply(const Eigen::Matrix3d& t, Point2 p) {
  const Eigen::Vector3d v = t * Eigen::Vector3d(p.x, p.y, 1.0);
  return {v.x() / v.z(), v.y() / v.z()};
}

}  // namespace

Homography::Homography(const Eigen::Matrix3d& m) : m_(m) {
  if (!m_.allFinite()) throw DegenerateConfiguration("homography has non-finite entries");
  if (m_(2, 2) != 0.0) m_ /= m_(2, 2);
  if (!(std::abs(m_.determinant()) > kDetEpsilon)) {
    throw DegenerateConfiguration("homography is singular");
  }
}

Homography Homography::translation(double dx, double dy) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = dx;
  m(1, 2) = dy;
  return Homography(m);
}

Homography Homography::scaling(double sx, double sy) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = sx;
  m(1, 1) = sy;
  return Homography(m);
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

Homography Homography::to_normalized(double width, double height) const {
  Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
  s(0, 0) = width;
  s(1, 1) = height;
  Eigen::Matrix3d s_inv = Eigen::Matrix3d::Identity();
  s_inv(0, 0) = 1.0 / width;
  s_inv(1, 1) = 1.0 / height;
  return Homography(s_inv * m_ * s);
}

std::vector<double> Homography::to_row_major() const {
  std::vector<double> v(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v[r * 3 + c] = m_(r, c);
  return v;
}

Homography Homography::from_row_major(std::span<const double> v) {
  if (v.size() != 9) throw DegenerateConfiguration("homography needs 9 entries");
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = v[r * 3 + c];
  return Homography(m);
}

Point2 project_point(const Homography& h, Point2 p) {
  const Eigen::Vector3d v = h.matrix() * Eigen::Vector3d(p.x, p.y, 1.0);
  if (std::abs(v.z()) < 1e-12) throw AtInfinity("point maps to infinity");
  return {v.x() / v.z(), v.y() / v.z()};
}

double reprojection_error(const Homography& h, const PointMatch& m) {
  const Eigen::Vector3d v = h.matrix() * Eigen::Vector3d(m.src.x, m.src.y, 1.0);
  if (std::abs(v.z()) < 1e-12) return std::numeric_limits<double>::infinity();
  return std::hypot(v.x() / v.z() - m.dst.x, v.y() / v.z() - m.dst.y);
}

Homography estimate_homography_dlt(std::span<const PointMatch> matches, bool normalize) {
  const std::size_t n = matches.size();
  if (n < 4) throw DegenerateConfiguration("DLT needs at least 4 matches, got " + std::to_string(n));

  std::vector<Point2> src(n), dst(n);
  for (std::size_t i = 0; i < n; ++i) {
    src[i] = matches[i].src;
    dst[i] = matches[i].dst;
  }
  Eigen::Matrix3d t_src = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d t_dst = Eigen::Matrix3d::Identity();
  if (normalize) {
    t_src = hartley_transform(src);
    t_dst = hartley_transform(dst);
    for (std::size_t i = 0; i < n; ++i) {
      src[i] = apply(t_src, src[i]);
      dst[i] = apply(t_dst, dst[i]);
    }
  }

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(r + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A unique solution needs rank 8: the eighth singular value must not vanish.
  if (sv.size() < 8 || !(sv(7) > 1e-10 * sv(0))) {
    throw DegenerateConfiguration("design matrix is rank-deficient");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography(t_dst.inverse() * hn * t_src);
}

Homography chain_homographies(std::span<const Homography> hs) {
  if (hs.empty()) throw DegenerateConfiguration("cannot chain an empty homography list");
  Eigen::Matrix3d m = hs.front().matrix();
  for (std::size_t i = 1; i < hs.size(); ++i) m = m * hs[i].matrix();
  return Homography(m);
}

}  // namespace handtraj::geometry
