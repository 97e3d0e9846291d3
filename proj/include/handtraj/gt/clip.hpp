#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "handtraj/common/json_io.hpp"
#include "handtraj/common/types.hpp"
#include "handtraj/geometry/homography.hpp"
#include "handtraj/geometry/mask.hpp"

namespace handtraj::gt {

// Normalized [0,1] box corners.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  Point2 center() const { return {0.5 * (x1 + x2), 0.5 * (y1 + y2)}; }
};

struct HandDetection {
  int frame_index = 0;
  Side side = Side::kRight;
  BBox bbox;
  double confidence = 0.0;

  void validate() const;
};

// Feature matches between two frames, in pixels; src lies in frame_a.
struct FramePairMatches {
  int frame_a = 0;
  int frame_b = 0;
  std::vector<geometry::PointMatch> matches;
};

struct ClipRecord {
  std::string clip_id;
  int width = 456;   // pixel size used by matches and masks
  int height = 256;
  std::vector<int> obs_frames;     // T context frames
  std::vector<int> future_frames;  // N future frames
  std::vector<HandDetection> detections;
  std::vector<FramePairMatches> matches;  // one entry per consecutive frame pair
  std::map<int, geometry::BinaryMask> masks;
  std::optional<std::string> narration;

  std::size_t context_length() const { return obs_frames.size(); }
  std::size_t horizon() const { return future_frames.size(); }

  // obs_frames followed by future_frames.
  std::vector<int> all_frames() const;

  const FramePairMatches* find_pair(int frame_a, int frame_b) const;
  const geometry::BinaryMask& mask_for(int frame) const;

  // Throws DataError on non-increasing frame indices, T < 1, N < 1, or an
  // invalid detection.
  void validate() const;
};

// Clip index records reference per-clip detection, match and mask files.
// Relative paths are resolved against the index file's directory.
std::vector<ClipRecord> load_clips(const std::filesystem::path& index_path);

struct ClipFiles {
  std::string detections = "detections.jsonl";
  std::string matches = "matches.jsonl";
  std::string masks = "masks.jsonl";
};

// Writes `index_name` plus the three referenced files into `dir`.
void save_clips(const std::filesystem::path& dir, const std::vector<ClipRecord>& clips,
                const std::string& index_name = "clips.jsonl", const ClipFiles& files = {});

}  // namespace handtraj::gt
