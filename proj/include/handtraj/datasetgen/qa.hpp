#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "handtraj/common/json_io.hpp"
#include "handtraj/tokens/templates.hpp"

namespace handtraj::datasetgen {

struct QASample {
  std::string clip_id;
  tokens::TaskKind task = tokens::TaskKind::kVhp;
  std::string question;
  std::string answer;  // one <HAND> marker per future step
  HandTrajectory future;
  std::optional<std::string> instruction;  // explicit narration or implicit request
  std::string template_id;
  std::optional<std::string> transcript_hash;  // LLM provenance for RBHP

  // Throws HorizonMismatch when the marker count differs from the horizon.
  void validate() const;
};

Json qa_to_json(const QASample& s);
QASample qa_from_json(const Json& j);

void save_qa(const std::filesystem::path& path, const std::vector<QASample>& samples);
// Throws SchemaMismatch / HorizonMismatch naming the file and line.
std::vector<QASample> load_qa(const std::filesystem::path& path);

}  // namespace handtraj::datasetgen
