#include "handtraj/eval/plot.hpp"

#include <cmath>
#include <cstdlib>

namespace handtraj::eval {

namespace {

constexpr Rgb kLeft{30, 60, 230};
constexpr Rgb kRight{230, 40, 40};
constexpr Rgb kLeftPred{130, 200, 255};
constexpr Rgb kRightPred{255, 170, 80};

void line(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    img.set(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void disc(Image& img, int cx, int cy, int r, Rgb c, bool filled) {
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) {
      const int d2 = x * x + y * y;
      if (d2 <= r * r && (filled || d2 >= (r - 1) * (r - 1))) img.set(cx + x, cy + y, c);
    }
  }
}

void draw(Image& img, const HandTrajectory& traj, bool is_pred, int radius) {
  for (Side s : kSides) {
    const Rgb c = s == Side::kLeft ? (is_pred ? kLeftPred : kLeft) : (is_pred ? kRightPred : kRight);
    bool have_prev = false;
    int px = 0, py = 0;
    for (std::size_t t = 0; t < traj.horizon(); ++t) {
      const auto& p = traj.at(s, t);
      if (!p) {
        have_prev = false;
        continue;
      }
      const int x = static_cast<int>(std::lround(p->x * (img.width - 1)));
      const int y = static_cast<int>(std::lround(p->y * (img.height - 1)));
      if (have_prev) line(img, px, py, x, y, c);
      disc(img, x, y, radius, c, !is_pred);
      px = x;
      py = y;
      have_prev = true;
    }
  }
}

}  // namespace

Image plot_trajectories(const Image* background, const HandTrajectory& gt, const HandTrajectory* pred,
                        const PlotStyle& style) {
  Image img = background ? resize_nearest(*background, style.width, style.height)
                         : Image(style.width, style.height, Rgb{235, 235, 235});
  draw(img, gt, false, style.radius);
  if (pred) draw(img, *pred, true, style.radius);
  return img;
}

}  // namespace handtraj::eval
