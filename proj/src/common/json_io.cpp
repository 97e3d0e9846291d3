#include "handtraj/common/json_io.hpp"

#include <fstream>
#include <sstream>

#include "handtraj/common/error.hpp"

namespace handtraj {

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, std::size_t line)>& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    }
    fn(j, lineno);
  }
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::vector<Json> out;
  for_each_jsonl(path, [&](const Json& j, std::size_t) { out.push_back(j); });
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << r.dump(-1, ' ', false, Json::error_handler_t::replace) << '\n';
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json point_to_json(const std::optional<Point2>& p) {
  if (!p) return nullptr;
  return Json::array({p->x, p->y});
}

std::optional<Point2> point_from_json(const Json& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw SchemaMismatch("expected [x, y] or null, got " + j.dump());
  }
  return Point2{j[0].get<double>(), j[1].get<double>()};
}

Json trajectory_to_json(const HandTrajectory& traj) {
  Json out = Json::object();
  for (Side s : kSides) {
    Json arr = Json::array();
    for (const auto& p : traj.side(s)) arr.push_back(point_to_json(p));
    out[std::string(side_name(s))] = std::move(arr);
  }
  return out;
}

HandTrajectory trajectory_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaMismatch("trajectory must be an object");
  const Json& left = require(j, "left", "trajectory");
  const Json& right = require(j, "right", "trajectory");
  if (!left.is_array() || !right.is_array() || left.size() != right.size()) {
    throw SchemaMismatch("trajectory sides must be arrays of equal length");
  }
  HandTrajectory traj(left.size());
  for (std::size_t t = 0; t < left.size(); ++t) {
    traj.at(Side::kLeft, t) = point_from_json(left[t]);
    traj.at(Side::kRight, t) = point_from_json(right[t]);
  }
  return traj;
}

const Json& require(const Json& j, const char* key, const std::string& what) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaMismatch(what + ": missing field '" + key + "'");
  return *it;
}

}  // namespace handtraj
