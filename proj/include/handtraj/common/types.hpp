#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace handtraj {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }

inline double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline bool is_finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

enum class Side : int { kLeft = 0, kRight = 1 };

inline constexpr std::array<Side, 2> kSides = {Side::kLeft, Side::kRight};

inline std::string_view side_name(Side s) { return s == Side::kLeft ? "left" : "right"; }

inline std::size_t side_index(Side s) { return static_cast<std::size_t>(s); }

// Both hands at one timestep. An empty optional means the hand is absent.
struct HandStep {
  std::optional<Point2> left;
  std::optional<Point2> right;

  const std::optional<Point2>& operator[](Side s) const { return s == Side::kLeft ? left : right; }
  std::optional<Point2>& operator[](Side s) { return s == Side::kLeft ? left : right; }

  friend bool operator==(const HandStep&, const HandStep&) = default;
};

// Per-timestep left/right hand centers in normalized last-observation-frame
// coordinates. Validity is carried by the optionals.
class HandTrajectory {
 public:
  HandTrajectory() = default;
  explicit HandTrajectory(std::size_t horizon) : left_(horizon), right_(horizon) {}

  std::size_t horizon() const { return left_.size(); }

  std::vector<std::optional<Point2>>& side(Side s) { return s == Side::kLeft ? left_ : right_; }
  const std::vector<std::optional<Point2>>& side(Side s) const {
    return s == Side::kLeft ? left_ : right_;
  }

  const std::optional<Point2>& at(Side s, std::size_t t) const { return side(s)[t]; }
  std::optional<Point2>& at(Side s, std::size_t t) { return side(s)[t]; }

  HandStep step(std::size_t t) const { return {left_[t], right_[t]}; }
  void set_step(std::size_t t, const HandStep& h) {
    left_[t] = h.left;
    right_[t] = h.right;
  }
  void push_back(const HandStep& h) {
    left_.push_back(h.left);
    right_.push_back(h.right);
  }

  std::size_t valid_count(Side s) const {
    std::size_t n = 0;
    for (const auto& p : side(s)) n += p.has_value();
    return n;
  }

  double completeness(Side s) const {
    return horizon() == 0 ? 0.0 : static_cast<double>(valid_count(s)) / static_cast<double>(horizon());
  }

  // Copy with the left/right labels exchanged.
  HandTrajectory swapped() const {
    HandTrajectory out;
    out.left_ = right_;
    out.right_ = left_;
    return out;
  }

  friend bool operator==(const HandTrajectory&, const HandTrajectory&) = default;

 private:
  std::vector<std::optional<Point2>> left_;
  std::vector<std::optional<Point2>> right_;
};

}  // namespace handtraj
