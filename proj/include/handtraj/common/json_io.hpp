#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "handtraj/common/types.hpp"

namespace handtraj {

using Json = nlohmann::json;

// Reads a line-delimited JSON file. Blank lines are skipped; a parse failure
// throws DataError naming the 1-based line number.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

// Streams records to `fn` with their 1-based line numbers.
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, std::size_t line)>& fn);

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

Json point_to_json(const std::optional<Point2>& p);
std::optional<Point2> point_from_json(const Json& j);

// {"left": [[x,y] | null, ...], "right": [...]}
Json trajectory_to_json(const HandTrajectory& traj);
HandTrajectory trajectory_from_json(const Json& j);

// Fetches a required field, throwing SchemaMismatch with `what` as context.
const Json& require(const Json& j, const char* key, const std::string& what);

}  // namespace handtraj
