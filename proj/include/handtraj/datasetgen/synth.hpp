#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "handtraj/datasetgen/chat.hpp"
#include "handtraj/datasetgen/frames.hpp"
#include "handtraj/datasetgen/qa.hpp"
#include "handtraj/gt/clip.hpp"
#include "handtraj/gt/pipeline.hpp"

namespace handtraj::datasetgen {

struct SceneObject {
  std::string name;  // "scissors"
  std::string color_name;
  Rgb color;
  std::string action;  // explicit instruction
};

struct Affordance {
  std::string object;
  std::string phrase;  // implicit request, e.g. "cut a piece of paper"
};

// Bundled object glyphs and the 12-entry affordance table.
const std::vector<SceneObject>& scene_objects();
const std::vector<Affordance>& affordances();
// Object named by the implicit phrase; throws DataError if not exactly one.
const SceneObject& resolve_affordance(const std::string& phrase);
std::string implicit_question(const std::string& phrase);

struct SynthSpec {
  std::size_t context_frames = 10;
  std::size_t horizon = 4;
  int frame_size = 16;  // rendered square frames
  int width = 456;      // detection and match pixel space
  int height = 256;
  std::size_t objects_per_scene = 3;
  double object_size = 0.14;
  double hand_size = 0.12;
  double max_camera_step = 0.008;  // normalized translation per frame
  double detection_noise = 0.0;    // std of box-center jitter, normalized
  double left_hand_probability = 0.5;
  std::size_t matches_per_pair = 40;
  bool canonical_templates = true;
  std::string chat_model = "gpt-4o";  // model name used for stub fixtures

  void validate() const;
  Json to_json() const;
  static SynthSpec from_json(const Json& j);
};

struct SynthClip {
  gt::ClipRecord clip;
  gt::GtSample gt;  // exact scripted trajectories in last-observation coordinates
  std::string target;  // object name
  std::string affordance_phrase;
};

struct SynthWorld {
  std::vector<SynthClip> clips;
  FrameStore frames;  // T + N rendered frames per clip
  std::vector<QASample> explicit_qa;
  std::vector<QASample> implicit_qa;
  // Stub responses that make the LLM annotation path reproduce implicit_qa's
  // questions for these clips.
  std::vector<ChatFixture> fixtures;

  std::vector<gt::ClipRecord> clip_records() const;
  std::vector<gt::GtSample> gt_samples() const;
};

// Pure function of (seed, n_clips, spec). Clip ids are "s<seed>_<index>".
SynthWorld synth_world(std::uint64_t seed, std::size_t n_clips, const SynthSpec& spec);

}  // namespace handtraj::datasetgen
