#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "handtraj/datasetgen/frames.hpp"
#include "handtraj/datasetgen/qa.hpp"
#include "handtraj/eval/report.hpp"
#include "handtraj/model/model.hpp"
#include "handtraj/model/train.hpp"

namespace handtraj::cli {

// Word pieces of every question and answer.
tokens::Vocabulary build_vocab(std::span<const datasetgen::QASample> qa);

// Patches from the first context_frames frames of the clip; text-only when
// `frames` is null.
model::Example make_example(const datasetgen::QASample& s, const datasetgen::FrameStore* frames,
                            const tokens::Vocabulary& vocab, const model::ModelConfig& cfg);
std::vector<model::Example> make_examples(std::span<const datasetgen::QASample> qa,
                                          const datasetgen::FrameStore* frames, const tokens::Vocabulary& vocab,
                                          const model::ModelConfig& cfg);

struct SamplingConfig {
  double temperature = 0.0;
  std::size_t generations = 1;  // K
  bool deterministic_hand = true;
  std::size_t max_tokens = 64;
  std::uint64_t seed = 0;
  void validate() const;
  Json to_json() const;
  static SamplingConfig from_json(const Json& j);
};

struct Prediction {
  eval::PredictionRecord record;
  std::vector<std::string> texts;  // answer text per generation
  std::size_t malformed = 0;       // generations whose <HAND> count missed the horizon
  std::size_t overruns = 0;
};

// Generations per QA sample; sample seeds derive from (seed, clip id), so
// results do not depend on order or thread count. Trajectories are cut or
// padded with missing steps to the sample's horizon.
std::vector<Prediction> predict(const model::HandModel<float>& model, std::span<const datasetgen::QASample> qa,
                                const datasetgen::FrameStore* frames, const SamplingConfig& cfg, bool parallel);

// Horizon-length view of a generation.
HandTrajectory fit_horizon(const HandTrajectory& traj, std::size_t horizon);

// QA futures as GT records (context left empty).
std::vector<gt::GtSample> qa_as_gt(std::span<const datasetgen::QASample> qa);

}  // namespace handtraj::cli
