#include "handtraj/gt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "handtraj/common/error.hpp"
#include "handtraj/common/hash.hpp"

namespace handtraj::gt {

using geometry::Homography;

void FilterCriteria::validate() const {
  if (min_confidence < 0 || min_matches_per_pair < 0 || min_completeness < 0 || boundary_margin < 0 ||
      detection_floor < 0) {
    throw ConfigError("filter criteria must be nonnegative");
  }
  if (min_completeness > 1.0) throw ConfigError("min_completeness must be in [0,1]");
  if (min_confidence > 1.0 || detection_floor > 1.0) throw ConfigError("confidence thresholds must be in [0,1]");
}

Json FilterCriteria::to_json() const {
  return {{"min_confidence", min_confidence},
          {"min_matches_per_pair", min_matches_per_pair},
          {"min_completeness", min_completeness},
          {"boundary_margin", boundary_margin},
          {"detection_floor", detection_floor}};
}

FilterCriteria FilterCriteria::from_json(const Json& j) {
  FilterCriteria c;
  c.min_confidence = j.value("min_confidence", c.min_confidence);
  c.min_matches_per_pair = j.value("min_matches_per_pair", c.min_matches_per_pair);
  c.min_completeness = j.value("min_completeness", c.min_completeness);
  c.boundary_margin = j.value("boundary_margin", c.boundary_margin);
  c.detection_floor = j.value("detection_floor", c.detection_floor);
  c.validate();
  return c;
}

std::string FilterCriteria::hash() const { return short_hash(to_json().dump()); }

std::vector<FrameHands> extract_hand_centers(std::span<const HandDetection> detections,
                                             std::span<const int> frames, double floor) {
  std::vector<FrameHands> out(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (const auto& d : detections) {
      if (d.frame_index != frames[i] || d.confidence < floor) continue;
      auto& slot = out[i][side_index(d.side)];
      // Strict '>' keeps the first of equal-score detections.
      if (!slot || d.confidence > slot->confidence) slot = HandObservation{d.bbox.center(), d.confidence};
    }
  }
  return out;
}

namespace {

// Homography taking frame `from` to frame `to` (indices into the frame list).
Homography path_homography(std::span<const std::optional<Homography>> pair_h, std::span<const int> frames,
                           std::size_t from, std::size_t to) {
  std::vector<Homography> chain;
  if (from < to) {
    for (std::size_t i = to; i-- > from;) {
      if (!pair_h[i]) throw MissingHomography(frames[i], frames[i + 1]);
      chain.push_back(*pair_h[i]);
    }
  } else if (from > to) {
    for (std::size_t i = to; i < from; ++i) {
      if (!pair_h[i]) throw MissingHomography(frames[i], frames[i + 1]);
      chain.push_back(pair_h[i]->inverse());
    }
  } else {
    return Homography::identity();
  }
  return geometry::chain_homographies(chain);
}

}  // namespace

HandTrajectory project_to_reference(std::span<const FrameHands> centers,
                                    std::span<const std::optional<Homography>> pair_h,
                                    std::span<const int> frames, std::size_t reference,
                                    std::size_t first, std::size_t count) {
  if (pair_h.size() + 1 != frames.size() || centers.size() != frames.size()) {
    throw DataError("project_to_reference: centers, homographies and frames disagree in length");
  }
  HandTrajectory traj(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = first + k;
    const Homography h = path_homography(pair_h, frames, i, reference);
    for (Side s : kSides) {
      if (const auto& obs = centers[i][side_index(s)]) {
        traj.at(s, k) = geometry::project_point(h, obs->center);
      }
    }
  }
  return traj;
}

HandTrajectory project_future_hands(std::span<const FrameHands> centers,
                                    std::span<const std::optional<Homography>> pair_h,
                                    std::span<const int> frames, std::size_t last_obs_index) {
  return project_to_reference(centers, pair_h, frames, last_obs_index, last_obs_index + 1,
                              frames.size() - last_obs_index - 1);
}

namespace {

double hermite(double p0, double m0, double p1, double m1, double h, double u) {
  const double u2 = u * u, u3 = u2 * u;
  const double h00 = 2 * u3 - 3 * u2 + 1;
  const double h10 = u3 - 2 * u2 + u;
  const double h01 = -2 * u3 + 3 * u2;
  const double h11 = u3 - u2;
  return h00 * p0 + h10 * h * m0 + h01 * p1 + h11 * h * m1;
}

}  // namespace

HandTrajectory smooth_and_fill(const HandTrajectory& raw) {
  HandTrajectory out(raw.horizon());
  for (Side s : kSides) {
    const auto& pts = raw.side(s);
    std::vector<std::size_t> knots;
    for (std::size_t t = 0; t < pts.size(); ++t)
      if (pts[t]) knots.push_back(t);
    if (knots.size() < 2) continue;

    const std::size_t n = knots.size();
    std::vector<Point2> tangent(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i == 0 ? 0 : i - 1;
      const std::size_t hi = i + 1 == n ? n - 1 : i + 1;
      const double dt = static_cast<double>(knots[hi] - knots[lo]);
      tangent[i] = (1.0 / dt) * (*pts[knots[hi]] - *pts[knots[lo]]);
    }

    for (std::size_t i = 0; i < n; ++i) out.at(s, knots[i]) = pts[knots[i]];
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t a = knots[i], b = knots[i + 1];
      const double h = static_cast<double>(b - a);
      const Point2 pa = *pts[a], pb = *pts[b];
      for (std::size_t t = a + 1; t < b; ++t) {
        const double u = static_cast<double>(t - a) / h;
        out.at(s, t) = Point2{hermite(pa.x, tangent[i].x, pb.x, tangent[i + 1].x, h, u),
                              hermite(pa.y, tangent[i].y, pb.y, tangent[i + 1].y, h, u)};
      }
    }
  }
  return out;
}

std::string reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::kConfidence: return "confidence";
    case RejectReason::kFeatureMatching: return "feature_matching";
    case RejectReason::kCompleteness: return "completeness";
    case RejectReason::kBoundary: return "boundary";
  }
  return "unknown";
}

std::optional<Rejection> filter_trajectory(const HandTrajectory& traj, const StageEvidence& evidence,
                                           const FilterCriteria& criteria) {
  for (double c : evidence.used_confidences) {
    if (c < criteria.min_confidence) {
      std::ostringstream os;
      os << "selected detection confidence " << c << " < " << criteria.min_confidence;
      return Rejection{"filter", RejectReason::kConfidence, os.str()};
    }
  }
  for (std::size_t i = 0; i < evidence.pair_inliers.size(); ++i) {
    if (evidence.pair_inliers[i] < static_cast<std::size_t>(criteria.min_matches_per_pair)) {
      return Rejection{"filter", RejectReason::kFeatureMatching,
                       "frame pair " + std::to_string(i) + " has " + std::to_string(evidence.pair_inliers[i]) +
                           " inliers"};
    }
  }
  if (traj.completeness(Side::kLeft) < criteria.min_completeness &&
      traj.completeness(Side::kRight) < criteria.min_completeness) {
    std::ostringstream os;
    os << "completeness left " << traj.completeness(Side::kLeft) << ", right "
       << traj.completeness(Side::kRight) << " < " << criteria.min_completeness;
    return Rejection{"filter", RejectReason::kCompleteness, os.str()};
  }
  const double lo = criteria.boundary_margin, hi = 1.0 - criteria.boundary_margin;
  for (Side s : kSides) {
    for (std::size_t t = 0; t < traj.horizon(); ++t) {
      const auto& p = traj.at(s, t);
      if (p && !(p->x >= lo && p->x <= hi && p->y >= lo && p->y <= hi)) {
        std::ostringstream os;
        os << side_name(s) << " hand at step " << t << " (" << p->x << ", " << p->y << ") outside ["
           << lo << ", " << hi << "]";
        return Rejection{"filter", RejectReason::kBoundary, os.str()};
      }
    }
  }
  return std::nullopt;
}

GtOutcome build_gt_sample(const ClipRecord& clip, const FilterCriteria& criteria,
                          const geometry::RansacConfig& ransac) {
  criteria.validate();
  clip.validate();
  const auto frames = clip.all_frames();
  const std::size_t n_pairs = frames.size() - 1;

  geometry::RansacConfig cfg = ransac;
  cfg.inlier_threshold *= std::hypot(clip.width, clip.height) / std::hypot(kReferenceWidth, kReferenceHeight);

  StageEvidence evidence;
  GtProvenance prov;
  std::vector<std::optional<Homography>> pair_h(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto* pm = clip.find_pair(frames[i], frames[i + 1]);
    const std::string pair_name = std::to_string(frames[i]) + "->" + std::to_string(frames[i + 1]);
    if (pm == nullptr) {
      return Rejection{"homography", RejectReason::kFeatureMatching, "no matches for frame pair " + pair_name};
    }
    const auto kept = geometry::filter_matches_by_mask(pm->matches, clip.mask_for(frames[i]),
                                                       clip.mask_for(frames[i + 1]));
    cfg.seed = ransac.seed + i;
    try {
      const auto r = geometry::ransac_homography(kept, cfg);
      pair_h[i] = r.homography.to_normalized(clip.width, clip.height);
      evidence.pair_inliers.push_back(r.inlier_count);
    } catch (const geometry::InsufficientInliers& e) {
      return Rejection{"homography", RejectReason::kFeatureMatching, "frame pair " + pair_name + ": " + e.what()};
    } catch (const geometry::DegenerateConfiguration& e) {
      return Rejection{"homography", RejectReason::kFeatureMatching, "frame pair " + pair_name + ": " + e.what()};
    }
    prov.pair_homographies.push_back(*pair_h[i]);
  }
  prov.inlier_counts = evidence.pair_inliers;
  prov.criteria_hash = criteria.hash();

  const auto centers = extract_hand_centers(clip.detections, frames, criteria.detection_floor);
  for (const auto& fh : centers)
    for (const auto& obs : fh)
      if (obs) evidence.used_confidences.push_back(obs->confidence);

  const std::size_t last = clip.context_length() - 1;
  GtSample sample;
  sample.clip_id = clip.clip_id;
  sample.context_length = clip.context_length();
  sample.narration = clip.narration;
  try {
    sample.context = project_to_reference(centers, pair_h, frames, last, 0, clip.context_length());
    sample.future = smooth_and_fill(project_future_hands(centers, pair_h, frames, last));
  } catch (const geometry::AtInfinity& e) {
    return Rejection{"homography", RejectReason::kFeatureMatching, e.what()};
  }
  if (auto rej = filter_trajectory(sample.future, evidence, criteria)) return *rej;
  sample.provenance = std::move(prov);
  return sample;
}

std::vector<std::pair<std::string, GtOutcome>> build_gt_dataset(std::span<const ClipRecord> clips,
                                                                const FilterCriteria& criteria,
                                                                const geometry::RansacConfig& ransac,
                                                                bool parallel) {
  std::vector<std::optional<GtOutcome>> outcomes(clips.size());
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(clips.size()); ++i) {
      outcomes[i] = build_gt_sample(clips[i], criteria, ransac);
    }
  } else {
    for (std::size_t i = 0; i < clips.size(); ++i) outcomes[i] = build_gt_sample(clips[i], criteria, ransac);
  }
  std::vector<std::pair<std::string, GtOutcome>> out;
  out.reserve(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) out.emplace_back(clips[i].clip_id, std::move(*outcomes[i]));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

Json gt_sample_to_json(const GtSample& s) {
  Json hs = Json::array();
  for (const auto& h : s.provenance.pair_homographies) hs.push_back(h.to_row_major());
  return {{"clip_id", s.clip_id},
          {"T", s.context_length},
          {"N", s.future.horizon()},
          {"coords", "last_obs_frame_normalized"},
          {"future", trajectory_to_json(s.future)},
          {"context", trajectory_to_json(s.context)},
          {"narration", s.narration ? Json(*s.narration) : Json(nullptr)},
          {"provenance",
           {{"inlier_counts", s.provenance.inlier_counts},
            {"homographies", std::move(hs)},
            {"homography_direction", "frame_t_to_t+1"},
            {"criteria_hash", s.provenance.criteria_hash}}}};
}

GtSample gt_sample_from_json(const Json& j) {
  GtSample s;
  s.clip_id = require(j, "clip_id", "gt record").get<std::string>();
  if (j.value("coords", std::string("last_obs_frame_normalized")) != "last_obs_frame_normalized") {
    throw SchemaMismatch("gt record " + s.clip_id + ": unsupported coordinate convention");
  }
  s.future = trajectory_from_json(require(j, "future", "gt record"));
  if (j.contains("context")) s.context = trajectory_from_json(j["context"]);
  s.context_length = j.value("T", s.context.horizon());
  if (j.value("N", s.future.horizon()) != s.future.horizon()) {
    throw HorizonMismatch("gt record " + s.clip_id + ": N disagrees with trajectory length");
  }
  if (j.contains("narration") && !j["narration"].is_null()) s.narration = j["narration"].get<std::string>();
  if (j.contains("provenance")) {
    const auto& p = j["provenance"];
    s.provenance.inlier_counts = p.value("inlier_counts", std::vector<std::size_t>{});
    for (const auto& h : p.value("homographies", Json::array())) {
      s.provenance.pair_homographies.push_back(Homography::from_row_major(h.get<std::vector<double>>()));
    }
    s.provenance.criteria_hash = p.value("criteria_hash", std::string());
  }
  return s;
}

Json rejection_to_json(const std::string& clip_id, const Rejection& r) {
  return {{"clip_id", clip_id}, {"stage", r.stage}, {"reason", reason_name(r.reason)}, {"detail", r.detail}};
}

std::vector<GtSample> load_gt(const std::filesystem::path& path) {
  std::vector<GtSample> out;
  for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    try {
      out.push_back(gt_sample_from_json(j));
    } catch (const DataError& e) {
      throw SchemaMismatch(path.filename().string() + ":" + std::to_string(line) + ": " + e.what());
    } catch (const Json::exception& e) {
      throw SchemaMismatch(path.filename().string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace handtraj::gt
