#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "handtraj/common/image.hpp"

namespace handtraj::datasetgen {

// Rendered frames per clip id, in clip frame order.
class FrameStore {
 public:
  void put(const std::string& clip_id, std::vector<Image> frames) { clips_[clip_id] = std::move(frames); }
  bool contains(const std::string& clip_id) const { return clips_.count(clip_id) > 0; }
  // Throws DataError for an unknown clip.
  const std::vector<Image>& at(const std::string& clip_id) const;
  std::size_t size() const { return clips_.size(); }
  const std::map<std::string, std::vector<Image>>& clips() const { return clips_; }

  // "HTFRAMES", u32 version, u32 clip count, then per clip: u32 id length,
  // id bytes, u32 frame count, u32 width, u32 height, RGB bytes.
  void save(const std::filesystem::path& path) const;
  static FrameStore load(const std::filesystem::path& path);

 private:
  std::map<std::string, std::vector<Image>> clips_;
};

}  // namespace handtraj::datasetgen
