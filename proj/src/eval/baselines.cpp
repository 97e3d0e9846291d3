#include "handtraj/eval/baselines.hpp"

#include <algorithm>

#include <Eigen/Dense>

#include "handtraj/common/error.hpp"

namespace handtraj::eval {

void KalmanConfig::validate() const {
  if (!(process_noise > 0.0) || !(observation_noise > 0.0)) {
    throw ConfigError("Kalman noise parameters must be positive");
  }
}

Json KalmanConfig::to_json() const {
  return {{"process_noise", process_noise}, {"observation_noise", observation_noise}};
}

namespace {

Point2 clamp_unit(Point2 p) { return {std::clamp(p.x, 0.0, 1.0), std::clamp(p.y, 0.0, 1.0)}; }

std::vector<std::size_t> valid_steps(const HandTrajectory& traj, Side s) {
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < traj.horizon(); ++t)
    if (traj.at(s, t)) idx.push_back(t);
  return idx;
}

}  // namespace

HandTrajectory kalman_baseline(const HandTrajectory& context, std::size_t horizon, const KalmanConfig& cfg) {
  cfg.validate();
  using Mat4 = Eigen::Matrix4d;
  using Vec4 = Eigen::Vector4d;
  Mat4 F = Mat4::Identity();
  F(0, 2) = 1.0;
  F(1, 3) = 1.0;
  Eigen::Matrix<double, 2, 4> Hm = Eigen::Matrix<double, 2, 4>::Zero();
  Hm(0, 0) = 1.0;
  Hm(1, 1) = 1.0;
  const Mat4 Q = cfg.process_noise * Mat4::Identity();
  const Eigen::Matrix2d R = cfg.observation_noise * Eigen::Matrix2d::Identity();

  HandTrajectory out(horizon);
  for (Side s : kSides) {
    const auto idx = valid_steps(context, s);
    if (idx.size() < 2) continue;
    const Point2 p0 = *context.at(s, idx[0]);
    const Point2 p1 = *context.at(s, idx[1]);
    const double gap = static_cast<double>(idx[1] - idx[0]);
    Vec4 x(p1.x, p1.y, (p1.x - p0.x) / gap, (p1.y - p0.y) / gap);
    Mat4 P = Mat4::Zero();
    P.diagonal() << cfg.observation_noise, cfg.observation_noise, 2.0 * cfg.observation_noise / (gap * gap),
        2.0 * cfg.observation_noise / (gap * gap);

    for (std::size_t t = idx[1] + 1; t < context.horizon(); ++t) {
      x = F * x;
      P = F * P * F.transpose() + Q;
      if (const auto& z = context.at(s, t)) {
        const Eigen::Vector2d innov = Eigen::Vector2d(z->x, z->y) - Hm * x;
        const Eigen::Matrix2d S = Hm * P * Hm.transpose() + R;
        const Eigen::Matrix<double, 4, 2> K = P * Hm.transpose() * S.inverse();
        x += K * innov;
        P = (Mat4::Identity() - K * Hm) * P;
      }
    }
    for (std::size_t k = 0; k < horizon; ++k) {
      x = F * x;
      out.at(s, k) = clamp_unit({x(0), x(1)});
    }
  }
  return out;
}

HandTrajectory constant_position_baseline(const HandTrajectory& context, std::size_t horizon) {
  HandTrajectory out(horizon);
  for (Side s : kSides) {
    const auto idx = valid_steps(context, s);
    if (idx.empty()) continue;
    const Point2 last = *context.at(s, idx.back());
    for (std::size_t k = 0; k < horizon; ++k) out.at(s, k) = clamp_unit(last);
  }
  return out;
}

HandTrajectory constant_velocity_baseline(const HandTrajectory& context, std::size_t horizon) {
  HandTrajectory out(horizon);
  const double end = static_cast<double>(context.horizon()) - 1.0;
  for (Side s : kSides) {
    const auto idx = valid_steps(context, s);
    if (idx.size() < 2) continue;
    const std::size_t a = idx[idx.size() - 2], b = idx.back();
    const Point2 pa = *context.at(s, a), pb = *context.at(s, b);
    const Point2 v = (1.0 / static_cast<double>(b - a)) * (pb - pa);
    for (std::size_t k = 0; k < horizon; ++k) {
      const double dt = end + 1.0 + static_cast<double>(k) - static_cast<double>(b);
      out.at(s, k) = clamp_unit(pb + dt * v);
    }
  }
  return out;
}

BaselineKind baseline_from_name(const std::string& name) {
  if (name == "kf" || name == "kalman") return BaselineKind::kKalman;
  if (name == "constant_position" || name == "cp") return BaselineKind::kConstantPosition;
  if (name == "constant_velocity" || name == "cv") return BaselineKind::kConstantVelocity;
  throw ConfigError("unknown baseline '" + name + "' (expected kf, constant_position or constant_velocity)");
}

std::string baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::kKalman: return "kf";
    case BaselineKind::kConstantPosition: return "constant_position";
    case BaselineKind::kConstantVelocity: return "constant_velocity";
  }
  return "unknown";
}

HandTrajectory run_baseline(BaselineKind kind, const HandTrajectory& context, std::size_t horizon,
                            const KalmanConfig& cfg) {
  switch (kind) {
    case BaselineKind::kKalman: return kalman_baseline(context, horizon, cfg);
    case BaselineKind::kConstantPosition: return constant_position_baseline(context, horizon);
    case BaselineKind::kConstantVelocity: return constant_velocity_baseline(context, horizon);
  }
  return HandTrajectory(horizon);
}

}  // namespace handtraj::eval
