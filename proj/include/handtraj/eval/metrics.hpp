#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "handtraj/common/error.hpp"
#include "handtraj/common/types.hpp"

namespace handtraj::eval {

class NoValidFinalStep : public DataError {
 public:
  using DataError::DataError;
};

class NoValidGroundTruth : public DataError {
 public:
  using DataError::DataError;
};

// Distance charged when the prediction is missing at a step where the
// ground truth is valid: the diagonal of the unit square.
inline const double kMissingPenalty = std::sqrt(2.0);

// Normalized, nonnegative per-step weights.
class WdeWeights {
 public:
  explicit WdeWeights(std::vector<double> w);

  // w_t = t / sum_{k=1..N} k for t = 1..N.
  static WdeWeights linear(std::size_t horizon);
  static WdeWeights uniform(std::size_t horizon);
  static WdeWeights final_step(std::size_t horizon);

  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t t) const { return w_[t]; }
  const std::vector<double>& values() const { return w_; }

 private:
  std::vector<double> w_;
};

// Per-step summary shared by all metrics: mean distance over gt-valid sides
// and how many sides were valid.
struct StepErrors {
  std::vector<double> mean_distance;
  std::vector<int> valid_sides;
};

StepErrors step_errors(const HandTrajectory& pred, const HandTrajectory& gt);

// Mean distance over every gt-valid (step, side) pair.
double ade(const HandTrajectory& pred, const HandTrajectory& gt);

// Mean distance over gt-valid sides at the final step.
double fde(const HandTrajectory& pred, const HandTrajectory& gt);

// sum_t w_t * mean distance at t; steps without a valid gt side contribute 0.
double wde(const HandTrajectory& pred, const HandTrajectory& gt, const WdeWeights& w);

struct SampleMetrics {
  double ade = 0.0;
  std::optional<double> fde;  // absent when the final gt step has no valid side
  double wde = 0.0;
};

SampleMetrics score(const HandTrajectory& pred, const HandTrajectory& gt, const WdeWeights& w);

class EmptyGenerationSet : public Error {
 public:
  using Error::Error;
};

// Per-step, per-side mean of the valid generations; a point is valid when at
// least half of the generations are.
HandTrajectory self_consistency(std::span<const HandTrajectory> generations);

}  // namespace handtraj::eval
