#include "handtraj/geometry/mask.hpp"

#include <algorithm>
#include <cmath>

#include "handtraj/common/error.hpp"

namespace handtraj::geometry {

BinaryMask BinaryMask::from_rle(int width, int height, std::span<const std::uint32_t> counts) {
  BinaryMask m(width, height);
  std::size_t pos = 0;
  bool value = false;
  for (std::uint32_t c : counts) {
    if (pos + c > m.bits_.size()) throw DataError("mask run lengths exceed raster size");
    if (value) std::fill_n(m.bits_.begin() + static_cast<std::ptrdiff_t>(pos), c, std::uint8_t{1});
    pos += c;
    value = !value;
  }
  if (pos != m.bits_.size()) throw DataError("mask run lengths do not cover the raster");
  return m;
}

std::vector<std::uint32_t> BinaryMask::to_rle() const {
  std::vector<std::uint32_t> counts;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::uint8_t b : bits_) {
    if (b != current) {
      counts.push_back(run);
      run = 0;
      current = b;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

void BinaryMask::fill_rect(int x0, int y0, int x1, int y1) {
  x0 = std::clamp(x0, 0, width_);
  x1 = std::clamp(x1, 0, width_);
  y0 = std::clamp(y0, 0, height_);
  y1 = std::clamp(y1, 0, height_);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) set(x, y);
}

bool BinaryMask::covers(Point2 p) const {
  if (empty() || !is_finite(p)) return false;
  const double fx = std::floor(p.x), fy = std::floor(p.y);
  if (fx < 0 || fy < 0 || fx >= width_ || fy >= height_) return false;
  return at(static_cast<int>(fx), static_cast<int>(fy));
}

std::vector<PointMatch> filter_matches_by_mask(std::span<const PointMatch> matches,
                                               const BinaryMask& src_mask,
                                               const BinaryMask& dst_mask) {
  std::vector<PointMatch> out;
  out.reserve(matches.size());
  for (const auto& m : matches) {
    if (!src_mask.covers(m.src) && !dst_mask.covers(m.dst)) out.push_back(m);
  }
  return out;
}

}  // namespace handtraj::geometry
