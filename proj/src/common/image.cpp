#include "handtraj/common/image.hpp"

#include <fstream>
#include <sstream>

#include "handtraj/common/error.hpp"

namespace handtraj {

void write_ppm(const std::filesystem::path& path, const Image& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) throw DataError(path.string() + ": not an 8-bit P6 image");
  f.get();
  Image img(w, h);
  f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.data.size())) throw DataError(path.string() + ": truncated");
  return img;
}

Image resize_nearest(const Image& img, int width, int height) {
  Image out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = y * img.height / height;
    for (int x = 0; x < width; ++x) out.set(x, y, img.at(x * img.width / width, sy));
  }
  return out;
}

}  // namespace handtraj
