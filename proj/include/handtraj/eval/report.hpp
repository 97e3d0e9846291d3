#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "handtraj/common/json_io.hpp"
#include "handtraj/eval/baselines.hpp"
#include "handtraj/eval/metrics.hpp"
#include "handtraj/gt/pipeline.hpp"

namespace handtraj::eval {

// One predicted sample. With several generations the scored trajectory is
// their self-consistency average.
struct PredictionRecord {
  std::string clip_id;
  std::vector<HandTrajectory> generations;
  std::uint64_t seed = 0;
  double temperature = 0.0;
  std::string source;  // "model", "kf", ...
  std::string config_hash;

  std::size_t horizon() const { return generations.empty() ? 0 : generations.front().horizon(); }
  HandTrajectory combined() const { return self_consistency(generations); }
};

Json prediction_to_json(const PredictionRecord& p);
PredictionRecord prediction_from_json(const Json& j);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);

// Wraps a GT record's future as a prediction (useful for sanity checks).
PredictionRecord prediction_from_gt(const gt::GtSample& s);

std::vector<PredictionRecord> baseline_predictions(std::span<const gt::GtSample> dataset, BaselineKind kind,
                                                   const KalmanConfig& cfg = {});

struct EvalOptions {
  std::optional<WdeWeights> weights;  // linear when unset
  std::string wde_scheme = "linear";
  std::uint64_t seed = 0;
  std::string config_hash;
  bool parallel = false;
};

struct SampleReport {
  std::string clip_id;
  SampleMetrics metrics;
  std::size_t generations = 1;
};

struct EvalReport {
  std::vector<SampleReport> samples;  // sorted by clip id
  double mean_ade = 0.0;
  double mean_fde = 0.0;  // over samples with a valid final step
  double mean_wde = 0.0;
  std::size_t sample_count = 0;
  std::size_t fde_count = 0;
  std::size_t unmatched_predictions = 0;
  std::vector<double> wde_weights;
  std::string wde_scheme;
  std::string source;
  std::size_t generations = 1;
  std::uint64_t seed = 0;
  std::string config_hash;

  Json to_json() const;
  std::string to_text() const;
};

// Scores every GT sample against its prediction (matched by clip id).
// Throws SchemaMismatch for a GT sample without a prediction or for duplicate
// prediction ids, and HorizonMismatch for horizon disagreements.
EvalReport evaluate(std::span<const gt::GtSample> dataset, std::span<const PredictionRecord> predictions,
                    const EvalOptions& opts = {});

}  // namespace handtraj::eval
