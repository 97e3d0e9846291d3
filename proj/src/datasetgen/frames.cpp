#include "handtraj/datasetgen/frames.hpp"

#include <cstring>
#include <fstream>

#include "handtraj/common/error.hpp"

namespace handtraj::datasetgen {

namespace {

constexpr char kMagic[8] = {'H', 'T', 'F', 'R', 'A', 'M', 'E', 'S'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); }

std::uint32_t get_u32(std::istream& in, const std::string& where) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw SchemaMismatch(where + ": truncated frame store");
  return v;
}

}  // namespace

const std::vector<Image>& FrameStore::at(const std::string& clip_id) const {
  auto it = clips_.find(clip_id);
  if (it == clips_.end()) throw DataError("no frames for clip " + clip_id);
  return it->second;
}

void FrameStore::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(clips_.size()));
  for (const auto& [id, frames] : clips_) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    put_u32(out, static_cast<std::uint32_t>(frames.size()));
    const int w = frames.empty() ? 0 : frames[0].width, h = frames.empty() ? 0 : frames[0].height;
    put_u32(out, static_cast<std::uint32_t>(w));
    put_u32(out, static_cast<std::uint32_t>(h));
    for (const auto& f : frames) {
      if (f.width != w || f.height != h) throw ShapeMismatch("clip " + id + " mixes frame sizes");
      out.write(reinterpret_cast<const char*>(f.data.data()), static_cast<std::streamsize>(f.data.size()));
    }
  }
  if (!out) throw Error("failed writing " + path.string());
}

FrameStore FrameStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open frame store " + path.string());
  const std::string where = path.string();
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw SchemaMismatch(where + ": not a frame store");
  if (get_u32(in, where) != kVersion) throw SchemaMismatch(where + ": unsupported frame store version");
  FrameStore store;
  const std::uint32_t n = get_u32(in, where);
  for (std::uint32_t c = 0; c < n; ++c) {
    const std::uint32_t len = get_u32(in, where);
    if (len > 4096) throw SchemaMismatch(where + ": corrupt clip id");
    std::string id(len, '\0');
    in.read(id.data(), len);
    const std::uint32_t count = get_u32(in, where), w = get_u32(in, where), h = get_u32(in, where);
    if (w > 8192 || h > 8192 || count > 100000) throw SchemaMismatch(where + ": corrupt frame header");
    std::vector<Image> frames;
    for (std::uint32_t f = 0; f < count; ++f) {
      Image img(static_cast<int>(w), static_cast<int>(h));
      in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
      if (!in) throw SchemaMismatch(where + ": truncated frame data");
      frames.push_back(std::move(img));
    }
    store.put(id, std::move(frames));
  }
  return store;
}

}  // namespace handtraj::datasetgen
