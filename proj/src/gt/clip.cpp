#include "handtraj/gt/clip.hpp"

#include <algorithm>
#include <unordered_map>

#include "handtraj/common/error.hpp"

namespace handtraj::gt {

namespace {

Side parse_side(const Json& j, const std::string& what) {
  const auto s = j.get<std::string>();
  if (s == "left") return Side::kLeft;
  if (s == "right") return Side::kRight;
  throw SchemaMismatch(what + ": side must be 'left' or 'right'");
}

std::vector<int> int_array(const Json& j, const std::string& what) {
  if (!j.is_array()) throw SchemaMismatch(what + ": expected an array of frame indices");
  return j.get<std::vector<int>>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

// Lines of one referenced file, grouped by clip id.
using Grouped = std::unordered_map<std::string, std::vector<Json>>;

const Grouped& grouped_file(std::map<std::filesystem::path, Grouped>& cache,
                            const std::filesystem::path& path) {
  auto it = cache.find(path);
  if (it != cache.end()) return it->second;
  Grouped g;
  for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    const std::string what = path.filename().string() + ":" + std::to_string(line);
    if (!j.is_object() || !j.contains("clip_id")) throw SchemaMismatch(what + ": missing field 'clip_id'");
    g[j["clip_id"].get<std::string>()].push_back(j);
  });
  return cache.emplace(path, std::move(g)).first->second;
}

Json point_json(Point2 p) { return Json::array({p.x, p.y}); }

}  // namespace

void HandDetection::validate() const {
  if (!(bbox.x1 < bbox.x2) || !(bbox.y1 < bbox.y2)) throw DataError("detection bbox must have x1<x2, y1<y2");
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw DataError("detection confidence must be in [0,1]");
}

std::vector<int> ClipRecord::all_frames() const {
  std::vector<int> f = obs_frames;
  f.insert(f.end(), future_frames.begin(), future_frames.end());
  return f;
}

const FramePairMatches* ClipRecord::find_pair(int frame_a, int frame_b) const {
  for (const auto& p : matches)
    if (p.frame_a == frame_a && p.frame_b == frame_b) return &p;
  return nullptr;
}

const geometry::BinaryMask& ClipRecord::mask_for(int frame) const {
  static const geometry::BinaryMask kEmpty;
  auto it = masks.find(frame);
  return it == masks.end() ? kEmpty : it->second;
}

void ClipRecord::validate() const {
  if (obs_frames.empty()) throw DataError(clip_id + ": need at least one observation frame");
  if (future_frames.empty()) throw DataError(clip_id + ": need at least one future frame");
  const auto frames = all_frames();
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i] <= frames[i - 1]) throw DataError(clip_id + ": frame indices must be strictly increasing");
  }
  if (width <= 0 || height <= 0) throw DataError(clip_id + ": frame size must be positive");
  for (const auto& d : detections) d.validate();
}

std::vector<ClipRecord> load_clips(const std::filesystem::path& index_path) {
  const auto base = index_path.parent_path();
  std::map<std::filesystem::path, Grouped> cache;
  std::vector<ClipRecord> clips;

  for_each_jsonl(index_path, [&](const Json& j, std::size_t line) {
    const std::string what = index_path.filename().string() + ":" + std::to_string(line);
    try {
      ClipRecord c;
      c.clip_id = require(j, "clip_id", what).get<std::string>();
      c.width = j.value("width", 456);
      c.height = j.value("height", 256);
      c.obs_frames = int_array(require(j, "obs_frames", what), what);
      c.future_frames = int_array(require(j, "future_frames", what), what);
      if (j.contains("narration") && !j["narration"].is_null()) c.narration = j["narration"].get<std::string>();

      if (j.contains("detections_file")) {
        const auto& g = grouped_file(cache, resolve(base, j["detections_file"].get<std::string>()));
        if (auto it = g.find(c.clip_id); it != g.end()) {
          for (const auto& d : it->second) {
            HandDetection det;
            det.frame_index = require(d, "frame", what).get<int>();
            det.side = parse_side(require(d, "side", what), what);
            const auto bb = require(d, "bbox", what).get<std::vector<double>>();
            if (bb.size() != 4) throw SchemaMismatch(what + ": bbox needs 4 numbers");
            det.bbox = {bb[0], bb[1], bb[2], bb[3]};
            det.confidence = require(d, "confidence", what).get<double>();
            c.detections.push_back(det);
          }
        }
      }
      if (j.contains("matches_file")) {
        const auto& g = grouped_file(cache, resolve(base, j["matches_file"].get<std::string>()));
        if (auto it = g.find(c.clip_id); it != g.end()) {
          for (const auto& m : it->second) {
            FramePairMatches pm;
            pm.frame_a = require(m, "frame_a", what).get<int>();
            pm.frame_b = require(m, "frame_b", what).get<int>();
            const auto& src = require(m, "src_xy", what);
            const auto& dst = require(m, "dst_xy", what);
            const auto& score = require(m, "score", what);
            if (src.size() != dst.size() || src.size() != score.size()) {
              throw SchemaMismatch(what + ": src_xy, dst_xy and score lengths differ");
            }
            for (std::size_t i = 0; i < src.size(); ++i) {
              pm.matches.push_back({{src[i][0].get<double>(), src[i][1].get<double>()},
                                    {dst[i][0].get<double>(), dst[i][1].get<double>()},
                                    score[i].get<double>()});
            }
            c.matches.push_back(std::move(pm));
          }
        }
      }
      if (j.contains("masks_file")) {
        const auto& g = grouped_file(cache, resolve(base, j["masks_file"].get<std::string>()));
        if (auto it = g.find(c.clip_id); it != g.end()) {
          for (const auto& m : it->second) {
            const auto counts = require(m, "counts", what).get<std::vector<std::uint32_t>>();
            c.masks[require(m, "frame", what).get<int>()] = geometry::BinaryMask::from_rle(
                m.value("width", c.width), m.value("height", c.height), counts);
          }
        }
      }
      c.validate();
      clips.push_back(std::move(c));
    } catch (const DataError& e) {
      throw DataError(what + ": " + e.what());
    } catch (const Json::exception& e) {
      throw SchemaMismatch(what + ": " + e.what());
    }
  });
  return clips;
}

void save_clips(const std::filesystem::path& dir, const std::vector<ClipRecord>& clips,
                const std::string& index_name, const ClipFiles& files) {
  std::vector<Json> index, dets, matches, masks;
  for (const auto& c : clips) {
    Json rec = {{"clip_id", c.clip_id},
                {"width", c.width},
                {"height", c.height},
                {"obs_frames", c.obs_frames},
                {"future_frames", c.future_frames},
                {"narration", c.narration ? Json(*c.narration) : Json(nullptr)},
                {"detections_file", files.detections},
                {"matches_file", files.matches},
                {"masks_file", files.masks}};
    index.push_back(std::move(rec));
    for (const auto& d : c.detections) {
      dets.push_back({{"clip_id", c.clip_id},
                      {"frame", d.frame_index},
                      {"side", std::string(side_name(d.side))},
                      {"bbox", {d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2}},
                      {"confidence", d.confidence}});
    }
    for (const auto& pm : c.matches) {
      Json src = Json::array(), dst = Json::array(), score = Json::array();
      for (const auto& m : pm.matches) {
        src.push_back(point_json(m.src));
        dst.push_back(point_json(m.dst));
        score.push_back(m.score);
      }
      matches.push_back({{"clip_id", c.clip_id},
                         {"frame_a", pm.frame_a},
                         {"frame_b", pm.frame_b},
                         {"src_xy", std::move(src)},
                         {"dst_xy", std::move(dst)},
                         {"score", std::move(score)}});
    }
    for (const auto& [frame, m] : c.masks) {
      masks.push_back({{"clip_id", c.clip_id},
                       {"frame", frame},
                       {"width", m.width()},
                       {"height", m.height()},
                       {"counts", m.to_rle()}});
    }
  }
  write_jsonl(dir / index_name, index);
  write_jsonl(dir / files.detections, dets);
  write_jsonl(dir / files.matches, matches);
  write_jsonl(dir / files.masks, masks);
}

}  // namespace handtraj::gt
