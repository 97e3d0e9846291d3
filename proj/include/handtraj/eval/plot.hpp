#pragma once

#include "handtraj/common/image.hpp"
#include "handtraj/common/types.hpp"

namespace handtraj::eval {

struct PlotStyle {
  int width = 456;
  int height = 256;
  int radius = 3;
};

// Draws the ground-truth future (solid) and, if given, a prediction (hollow
// markers, lighter shade) over `background`, scaled to the plot size. Left
// hand blue, right hand red.
Image plot_trajectories(const Image* background, const HandTrajectory& gt, const HandTrajectory* pred,
                        const PlotStyle& style = {});

}  // namespace handtraj::eval
