#include "handtraj/eval/metrics.hpp"

#include <numeric>
#include <string>

namespace handtraj::eval {

WdeWeights::WdeWeights(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) throw ConfigError("WDE weights must not be empty");
  double sum = 0.0;
  for (double x : w_) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("WDE weights must be finite and nonnegative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("WDE weights must sum to 1, got " + std::to_string(sum));
}

WdeWeights WdeWeights::linear(std::size_t horizon) {
  std::vector<double> w(horizon);
  const double total = 0.5 * static_cast<double>(horizon) * static_cast<double>(horizon + 1);
  for (std::size_t t = 0; t < horizon; ++t) w[t] = static_cast<double>(t + 1) / total;
  return WdeWeights(std::move(w));
}

WdeWeights WdeWeights::uniform(std::size_t horizon) {
  return WdeWeights(std::vector<double>(horizon, 1.0 / static_cast<double>(horizon)));
}

WdeWeights WdeWeights::final_step(std::size_t horizon) {
  std::vector<double> w(horizon, 0.0);
  if (horizon > 0) w.back() = 1.0;
  return WdeWeights(std::move(w));
}

StepErrors step_errors(const HandTrajectory& pred, const HandTrajectory& gt) {
  if (pred.horizon() != gt.horizon()) {
    throw HorizonMismatch("prediction horizon " + std::to_string(pred.horizon()) + " != ground truth horizon " +
                          std::to_string(gt.horizon()));
  }
  StepErrors e{std::vector<double>(gt.horizon(), 0.0), std::vector<int>(gt.horizon(), 0)};
  for (std::size_t t = 0; t < gt.horizon(); ++t) {
    double sum = 0.0;
    int n = 0;
    for (Side s : kSides) {
      const auto& g = gt.at(s, t);
      if (!g) continue;
      const auto& p = pred.at(s, t);
      sum += p ? distance(*p, *g) : kMissingPenalty;
      ++n;
    }
    e.valid_sides[t] = n;
    e.mean_distance[t] = n > 0 ? sum / n : 0.0;
  }
  return e;
}

double ade(const HandTrajectory& pred, const HandTrajectory& gt) {
  const auto e = step_errors(pred, gt);
  const int total = std::accumulate(e.valid_sides.begin(), e.valid_sides.end(), 0);
  if (total == 0) throw NoValidGroundTruth("ground truth has no valid point");
  // Written as a weighted sum of per-step means so that uniform-weight WDE
  // reproduces it exactly.
  double out = 0.0;
  for (std::size_t t = 0; t < e.mean_distance.size(); ++t) {
    out += (static_cast<double>(e.valid_sides[t]) / total) * e.mean_distance[t];
  }
  return out;
}

double fde(const HandTrajectory& pred, const HandTrajectory& gt) {
  const auto e = step_errors(pred, gt);
  if (e.valid_sides.empty() || e.valid_sides.back() == 0) {
    throw NoValidFinalStep("ground truth final step has no valid hand");
  }
  return e.mean_distance.back();
}

double wde(const HandTrajectory& pred, const HandTrajectory& gt, const WdeWeights& w) {
  if (w.size() != gt.horizon()) {
    throw HorizonMismatch("WDE weights have length " + std::to_string(w.size()) + " but horizon is " +
                          std::to_string(gt.horizon()));
  }
  const auto e = step_errors(pred, gt);
  double out = 0.0;
  for (std::size_t t = 0; t < e.mean_distance.size(); ++t) out += w[t] * e.mean_distance[t];
  return out;
}

SampleMetrics score(const HandTrajectory& pred, const HandTrajectory& gt, const WdeWeights& w) {
  SampleMetrics m;
  m.ade = ade(pred, gt);
  m.wde = wde(pred, gt, w);
  try {
    m.fde = fde(pred, gt);
  } catch (const NoValidFinalStep&) {
  }
  return m;
}

HandTrajectory self_consistency(std::span<const HandTrajectory> generations) {
  if (generations.empty()) throw EmptyGenerationSet("self-consistency needs at least one generation");
  const std::size_t n = generations.front().horizon();
  for (const auto& g : generations) {
    if (g.horizon() != n) throw HorizonMismatch("generations disagree in horizon");
  }
  const std::size_t k = generations.size();
  HandTrajectory out(n);
  for (Side s : kSides) {
    for (std::size_t t = 0; t < n; ++t) {
      Point2 sum{};
      std::size_t valid = 0;
      for (const auto& g : generations) {
        if (const auto& p = g.at(s, t)) {
          sum = sum + *p;
          ++valid;
        }
      }
      if (valid > 0 && 2 * valid >= k) out.at(s, t) = (1.0 / static_cast<double>(valid)) * sum;
    }
  }
  return out;
}

}  // namespace handtraj::eval
