#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "handtraj/common/json_io.hpp"
#include "handtraj/common/types.hpp"
#include "handtraj/geometry/homography.hpp"
#include "handtraj/geometry/ransac.hpp"
#include "handtraj/gt/clip.hpp"

namespace handtraj::gt {

class MissingHomography : public Error {
 public:
  MissingHomography(int frame_a, int frame_b)
      : Error("missing homography for frame pair " + std::to_string(frame_a) + "->" +
              std::to_string(frame_b)),
        frame_a(frame_a),
        frame_b(frame_b) {}
  int frame_a;
  int frame_b;
};

struct FilterCriteria {
  double min_confidence = 0.5;
  int min_matches_per_pair = 10;
  double min_completeness = 0.5;
  double boundary_margin = 0.0;
  // Detections scoring below this are treated as noise at extraction time.
  double detection_floor = 0.1;

  void validate() const;
  Json to_json() const;
  static FilterCriteria from_json(const Json& j);
  std::string hash() const;
};

struct HandObservation {
  Point2 center;
  double confidence = 0.0;
};

using FrameHands = std::array<std::optional<HandObservation>, 2>;

// For each frame in `frames`, the highest-confidence detection per side; a
// side is absent when nothing scores at least `floor`.
std::vector<FrameHands> extract_hand_centers(std::span<const HandDetection> detections,
                                             std::span<const int> frames, double floor);

// Maps centers[first .. first+count) into the frame at `reference` using the
// consecutive-pair homographies (pair i maps frame i to frame i+1, normalized
// coordinates). Missing centers stay gaps.
HandTrajectory project_to_reference(std::span<const FrameHands> centers,
                                    std::span<const std::optional<geometry::Homography>> pair_h,
                                    std::span<const int> frames, std::size_t reference,
                                    std::size_t first, std::size_t count);

// Future frames (those after `last_obs_index`) expressed in the last
// observation frame.
HandTrajectory project_future_hands(std::span<const FrameHands> centers,
                                    std::span<const std::optional<geometry::Homography>> pair_h,
                                    std::span<const int> frames, std::size_t last_obs_index);

// Cubic Hermite interpolation per side and coordinate with Catmull-Rom
// tangents (one-sided at the ends). Interior gaps are filled; leading and
// trailing gaps stay invalid; valid knots are returned untouched. A side with
// fewer than two valid points becomes fully invalid.
HandTrajectory smooth_and_fill(const HandTrajectory& raw);

enum class RejectReason { kConfidence, kFeatureMatching, kCompleteness, kBoundary };

std::string reason_name(RejectReason r);

struct Rejection {
  std::string stage;  // "homography" or "filter"
  RejectReason reason;
  std::string detail;
};

// What the filter needs to know about how a trajectory was produced.
struct StageEvidence {
  std::vector<double> used_confidences;    // every selected detection
  std::vector<std::size_t> pair_inliers;   // per consecutive frame pair
};

// Checks, in order: confidence, feature matching, completeness (fails only if
// both sides are below the threshold), boundary. Returns the first failure.
std::optional<Rejection> filter_trajectory(const HandTrajectory& traj, const StageEvidence& evidence,
                                           const FilterCriteria& criteria);

struct GtProvenance {
  std::vector<std::size_t> inlier_counts;
  std::vector<geometry::Homography> pair_homographies;  // normalized, frame t -> t+1
  std::string criteria_hash;
};

struct GtSample {
  std::string clip_id;
  std::size_t context_length = 0;
  HandTrajectory future;   // smoothed, in last-observation-frame coordinates
  HandTrajectory context;  // raw projected centers of the context frames
  std::optional<std::string> narration;
  GtProvenance provenance;
};

using GtOutcome = std::variant<GtSample, Rejection>;

// RANSAC inlier thresholds are given at this resolution and scaled with the
// frame diagonal.
inline constexpr double kReferenceWidth = 456.0;
inline constexpr double kReferenceHeight = 256.0;

// mask filtering -> RANSAC per pair -> center extraction -> projection ->
// smoothing -> filtering. Deterministic given its arguments.
GtOutcome build_gt_sample(const ClipRecord& clip, const FilterCriteria& criteria,
                          const geometry::RansacConfig& ransac);

// Runs build_gt_sample over many clips, optionally in parallel; results come
// back sorted by clip id.
std::vector<std::pair<std::string, GtOutcome>> build_gt_dataset(std::span<const ClipRecord> clips,
                                                                const FilterCriteria& criteria,
                                                                const geometry::RansacConfig& ransac,
                                                                bool parallel = false);

Json gt_sample_to_json(const GtSample& s);
GtSample gt_sample_from_json(const Json& j);
Json rejection_to_json(const std::string& clip_id, const Rejection& r);

std::vector<GtSample> load_gt(const std::filesystem::path& path);

}  // namespace handtraj::gt
