#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "handtraj/geometry/homography.hpp"
#include "handtraj/geometry/mask.hpp"
#include "handtraj/geometry/ransac.hpp"

using namespace handtraj;
using namespace handtraj::geometry;

namespace {

// Direct 3x3 multiply + divide, independent of project_point.
Point2 oracle_project(const std::array<double, 9>& m, Point2 p) {
  const double x = m[0] * p.x + m[1] * p.y + m[2];
  const double y = m[3] * p.x + m[4] * p.y + m[5];
  const double w = m[6] * p.x + m[7] * p.y + m[8];
  return {x / w, y / w};
}

std::array<double, 9> as_array(const Homography& h) {
  std::array<double, 9> a{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a[r * 3 + c] = h(r, c);
  return a;
}

// Random well-conditioned homography acting on points of order `scale`.
Homography random_homography(std::mt19937& gen, double scale) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  while (true) {
    Eigen::Matrix3d m;
    m << 1 + 0.3 * u(gen), 0.3 * u(gen), 0.1 * scale * u(gen),
        0.3 * u(gen), 1 + 0.3 * u(gen), 0.1 * scale * u(gen),
        0.2 * u(gen) / scale, 0.2 * u(gen) / scale, 1.0;
    Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
    s(0, 0) = s(1, 1) = scale;
    const Eigen::Matrix3d unit = s.inverse() * m * s;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(unit);
    const double cond = svd.singularValues()(0) / svd.singularValues()(2);
    if (cond < 100.0) return Homography(m);
  }
}

std::vector<PointMatch> matches_from(const Homography& h, const std::vector<Point2>& src) {
  std::vector<PointMatch> out;
  for (const auto& p : src) out.push_back({p, oracle_project(as_array(h), p), 1.0});
  return out;
}

double max_abs_diff(const Homography& a, const Homography& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("DLT: identical point sets give the identity") {
  const std::vector<Point2> pts = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  const auto h = estimate_homography_dlt(matches_from(Homography::identity(), pts));
  CHECK(max_abs_diff(h, Homography::identity()) < 1e-12);
}

TEST_CASE("DLT: pure translation") {
  std::vector<PointMatch> m;
  for (Point2 p : {Point2{0, 0}, Point2{10, 0}, Point2{0, 10}, Point2{10, 12}}) {
    m.push_back({p, {p.x + 5, p.y - 3}, 1.0});
  }
  const auto h = estimate_homography_dlt(m);
  // Hand-built translation matrix.
  const std::array<double, 9> expected = {1, 0, 5, 0, 1, -3, 0, 0, 1};
  const auto got = as_array(h);
  for (int i = 0; i < 9; ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-10));
  const Point2 origin = project_point(h, {0, 0});
  CHECK(origin.x == doctest::Approx(5.0));
  CHECK(origin.y == doctest::Approx(-3.0));
}

TEST_CASE("DLT recovers a random homography from 6 noiseless matches") {
  std::mt19937 gen(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Homography truth = random_homography(gen, 1.0);
    std::vector<Point2> src;
    for (int i = 0; i < 6; ++i) src.push_back({u(gen), u(gen)});
    const auto h = estimate_homography_dlt(matches_from(truth, src));
    CHECK(max_abs_diff(h, truth) < 1e-6);
  }
}

TEST_CASE("DLT is invariant to Hartley normalization on clean data") {
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Homography truth = random_homography(gen, 1.0);
    std::vector<Point2> src;
    for (int i = 0; i < 12; ++i) src.push_back({u(gen), u(gen)});
    const auto m = matches_from(truth, src);
    CHECK(max_abs_diff(estimate_homography_dlt(m, true), estimate_homography_dlt(m, false)) < 1e-6);
  }
}

TEST_CASE("DLT rejects degenerate configurations") {
  std::vector<PointMatch> collinear;
  for (int i = 0; i < 5; ++i) collinear.push_back({{double(i), 2.0 * i}, {double(i), 2.0 * i}, 1.0});
  CHECK_THROWS_AS(estimate_homography_dlt(collinear), DegenerateConfiguration);
  std::vector<PointMatch> three = {{{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{0, 1}, {0, 1}}};
  CHECK_THROWS_AS(estimate_homography_dlt(three), DegenerateConfiguration);
}

TEST_CASE("project_point") {
  SUBCASE("identity") {
    const auto p = project_point(Homography::identity(), {0.3, 0.7});
    CHECK(p.x == 0.3);
    CHECK(p.y == 0.7);
  }
  SUBCASE("scale") {
    const auto p = project_point(Homography::scaling(2, 2), {1, 1});
    CHECK(p.x == 2.0);
    CHECK(p.y == 2.0);
  }
  SUBCASE("random against the matrix oracle") {
    std::mt19937 gen(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 200; ++i) {
      const auto h = random_homography(gen, 1.0);
      const Point2 p{u(gen), u(gen)};
      const auto got = project_point(h, p);
      const auto want = oracle_project(as_array(h), p);
      CHECK(got.x == doctest::Approx(want.x).epsilon(1e-12));
      CHECK(got.y == doctest::Approx(want.y).epsilon(1e-12));
    }
  }
  SUBCASE("points on the line at infinity") {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(2, 0) = 1.0;
    m(2, 2) = 1.0;
    CHECK_THROWS_AS(project_point(Homography(m), {-1.0, 0.0}), AtInfinity);
  }
}

TEST_CASE("Homography construction normalizes and validates") {
  Eigen::Matrix3d m = 2.0 * Eigen::Matrix3d::Identity();
  const Homography h(m);
  CHECK(h(2, 2) == 1.0);
  CHECK(h(0, 0) == 1.0);
  CHECK_THROWS_AS(Homography(Eigen::Matrix3d::Zero()), DegenerateConfiguration);
}

TEST_CASE("chain_homographies") {
  SUBCASE("identities") {
    const std::vector<Homography> hs = {Homography::identity(), Homography::identity()};
    CHECK(max_abs_diff(chain_homographies(hs), Homography::identity()) == 0.0);
  }
  SUBCASE("translations compose") {
    const std::vector<Homography> hs = {Homography::translation(1, 0), Homography::translation(0, 2)};
    const auto got = as_array(chain_homographies(hs));
    const std::array<double, 9> want = {1, 0, 1, 0, 1, 2, 0, 0, 1};
    CHECK(got == want);
  }
  SUBCASE("single element") {
    const auto h = Homography::translation(3, 4);
    const std::vector<Homography> hs = {h};
    CHECK(max_abs_diff(chain_homographies(hs), h) == 0.0);
  }
  SUBCASE("H then its inverse") {
    std::mt19937 gen(9);
    const auto h = random_homography(gen, 1.0);
    const std::vector<Homography> hs = {h, h.inverse()};
    CHECK(max_abs_diff(chain_homographies(hs), Homography::identity()) < 1e-9);
  }
  SUBCASE("composition property") {
    std::mt19937 gen(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 200; ++i) {
      const auto a = random_homography(gen, 1.0);
      const auto b = random_homography(gen, 1.0);
      const Point2 p{u(gen), u(gen)};
      const std::vector<Homography> hs = {a, b};
      const auto lhs = project_point(chain_homographies(hs), p);
      const auto rhs = project_point(a, project_point(b, p));
      CHECK(std::abs(lhs.x - rhs.x) < 1e-9);
      CHECK(std::abs(lhs.y - rhs.y) < 1e-9);
    }
  }
  CHECK_THROWS(chain_homographies(std::vector<Homography>{}));
}

TEST_CASE("RANSAC with all-inlier identity matches") {
  std::vector<PointMatch> m;
  for (int i = 0; i < 20; ++i) {
    const Point2 p{10.0 * (i % 5) + 3.0 * (i / 5), 7.0 * (i / 5) + (i % 3)};
    m.push_back({p, p, 1.0});
  }
  const auto r = ransac_homography(m, RansacConfig{});
  CHECK(max_abs_diff(r.homography, Homography::identity()) < 1e-9);
  CHECK(r.inlier_count == m.size());
  for (bool b : r.inliers) CHECK(b);
}

TEST_CASE("RANSAC rejects planted outliers") {
  const double w = 456.0, hgt = 256.0, diag = std::hypot(w, hgt);
  std::mt19937 gen(1234);
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, hgt);
  const auto truth = random_homography(gen, 200.0);
  std::vector<PointMatch> m;
  std::vector<PointMatch> true_inliers;
  for (int i = 0; i < 60; ++i) {
    const Point2 p{ux(gen), uy(gen)};
    m.push_back({p, oracle_project(as_array(truth), p), 1.0});
    true_inliers.push_back(m.back());
  }
  for (int i = 0; i < 40; ++i) m.push_back({{ux(gen), uy(gen)}, {ux(gen), uy(gen)}, 0.5});

  RansacConfig cfg;
  cfg.inlier_threshold = 2.0;
  cfg.seed = 99;
  const auto r = ransac_homography(m, cfg);
  double sq = 0.0;
  for (const auto& pm : true_inliers) sq += std::pow(reprojection_error(r.homography, pm), 2);
  CHECK(std::sqrt(sq / true_inliers.size()) < 1e-3 * diag);

  // Every reported inlier is within the threshold.
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (r.inliers[i]) CHECK(reprojection_error(r.homography, m[i]) <= cfg.inlier_threshold);
  }

  // Same inputs and seed: identical result.
  const auto again = ransac_homography(m, cfg);
  CHECK(again.homography.matrix() == r.homography.matrix());
  CHECK(again.inliers == r.inliers);
}

TEST_CASE("RANSAC precondition and config validation") {
  std::vector<PointMatch> five;
  for (int i = 0; i < 5; ++i) five.push_back({{double(i), double(i * i)}, {double(i), double(i * i)}});
  RansacConfig cfg;
  cfg.min_inliers = 6;
  CHECK_THROWS_AS(ransac_homography(five, cfg), InsufficientInliers);
  cfg.min_inliers = 3;
  CHECK_THROWS_AS(ransac_homography(five, cfg), ConfigError);
  cfg = RansacConfig{};
  cfg.inlier_threshold = 0.0;
  CHECK_THROWS_AS(ransac_homography(five, cfg), ConfigError);
}

TEST_CASE("filter_matches_by_mask") {
  const std::vector<PointMatch> m = {
      {{10, 10}, {12, 10}}, {{60, 10}, {62, 10}}, {{40, 30}, {55, 30}}, {{70, 5}, {45, 5}}};
  SUBCASE("empty masks keep everything") {
    CHECK(filter_matches_by_mask(m, BinaryMask{}, BinaryMask{}).size() == m.size());
  }
  SUBCASE("fully masked source drops everything") {
    BinaryMask full(100, 50);
    full.fill_rect(0, 0, 100, 50);
    CHECK(filter_matches_by_mask(m, full, BinaryMask{}).empty());
  }
  SUBCASE("left-half mask keeps only matches with both endpoints on the right") {
    BinaryMask left(100, 50);
    left.fill_rect(0, 0, 50, 50);
    const auto kept = filter_matches_by_mask(m, left, left);
    // Per-point containment oracle.
    std::vector<PointMatch> want;
    for (const auto& pm : m)
      if (pm.src.x >= 50 && pm.dst.x >= 50) want.push_back(pm);
    REQUIRE(kept.size() == want.size());
    for (std::size_t i = 0; i < kept.size(); ++i) CHECK(kept[i].src == want[i].src);
  }
}

TEST_CASE("mask RLE round-trips") {
  std::mt19937 gen(17);
  for (int trial = 0; trial < 20; ++trial) {
    BinaryMask m(31, 17);
    std::uniform_int_distribution<int> ux(0, 31), uy(0, 17);
    for (int r = 0; r < 3; ++r) m.fill_rect(ux(gen), uy(gen), ux(gen), uy(gen));
    const auto rle = m.to_rle();
    CHECK(BinaryMask::from_rle(31, 17, rle) == m);
  }
  const std::vector<std::uint32_t> bad = {3, 4};
  CHECK_THROWS(BinaryMask::from_rle(4, 4, bad));
}
