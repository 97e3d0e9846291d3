#pragma once

#include <string>

#include "handtraj/common/json_io.hpp"
#include "handtraj/common/types.hpp"

namespace handtraj::eval {

struct KalmanConfig {
  double process_noise = 1e-3;
  double observation_noise = 1e-2;

  void validate() const;
  Json to_json() const;
};

// Constant-velocity Kalman filter per side over the context track (one step
// per context frame), followed by `horizon` prediction steps. The state is
// seeded from the first two valid observations. Sides with fewer than two
// observations are invalid. Outputs are clamped to [0,1].
HandTrajectory kalman_baseline(const HandTrajectory& context, std::size_t horizon, const KalmanConfig& cfg = {});

// Repeats the last valid observation.
HandTrajectory constant_position_baseline(const HandTrajectory& context, std::size_t horizon);

// Extrapolates the velocity between the last two valid observations.
HandTrajectory constant_velocity_baseline(const HandTrajectory& context, std::size_t horizon);

enum class BaselineKind { kKalman, kConstantPosition, kConstantVelocity };

BaselineKind baseline_from_name(const std::string& name);
std::string baseline_name(BaselineKind k);

HandTrajectory run_baseline(BaselineKind kind, const HandTrajectory& context, std::size_t horizon,
                            const KalmanConfig& cfg = {});

}  // namespace handtraj::eval
