#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "handtraj/geometry/homography.hpp"

namespace handtraj::geometry {

// Binary raster, row-major, 1 = masked (foreground to be excluded). A mask with
// zero size masks nothing.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height) : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, 0) {}

  // `counts` alternate unmasked/masked run lengths in row-major order,
  // starting with an unmasked run (which may be 0).
  static BinaryMask from_rle(int width, int height, std::span<const std::uint32_t> counts);
  std::vector<std::uint32_t> to_rle() const;

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return bits_.empty(); }

  bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v = true) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }

  // Fills the pixel rectangle [x0, x1) x [y0, y1), clipped to the raster.
  void fill_rect(int x0, int y0, int x1, int y1);

  // Whether the pixel containing `p` is masked. Points outside the raster are
  // not masked.
  bool covers(Point2 p) const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Keeps matches whose source lies outside `src_mask` and whose destination
// lies outside `dst_mask`.
std::vector<PointMatch> filter_matches_by_mask(std::span<const PointMatch> matches,
                                               const BinaryMask& src_mask,
                                               const BinaryMask& dst_mask);

}  // namespace handtraj::geometry
