#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "handtraj/cli/pipeline.hpp"
#include "handtraj/datasetgen/chat.hpp"
#include "handtraj/datasetgen/synth.hpp"
#include "handtraj/eval/baselines.hpp"
#include "handtraj/geometry/ransac.hpp"
#include "handtraj/gt/pipeline.hpp"
#include "handtraj/model/config.hpp"

namespace handtraj::cli {

struct EvalSettings {
  std::string wde = "linear";   // linear | uniform | final | custom
  std::vector<double> weights;  // for custom
  eval::KalmanConfig kalman;
  eval::WdeWeights weights_for(std::size_t horizon) const;
};

// One seed feeds every module; module blocks carry no seed of their own.
struct RunConfig {
  std::uint64_t seed = 0;
  int workers = 1;
  gt::FilterCriteria criteria;
  geometry::RansacConfig ransac;
  datasetgen::SynthSpec synth;
  std::size_t synth_clips = 64;
  datasetgen::ChatClientConfig chat;
  model::ModelConfig model;
  model::TrainConfig train;
  SamplingConfig sampling;
  EvalSettings eval;

  Json to_json() const;
  // Throws ConfigError on unknown keys or invalid values.
  static RunConfig from_json(const Json& j);
  // Hash of the resolved configuration; stamped on every artifact.
  std::string hash() const;
  bool parallel() const { return workers > 1; }
};

// defaults < config file < "--set path.to.key=value" overrides. Values
// parse as JSON and fall back to strings.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& sets);

}  // namespace handtraj::cli
