#include "handtraj/datasetgen/qa.hpp"

#include "handtraj/common/error.hpp"

namespace handtraj::datasetgen {

namespace {

std::size_t count_markers(const std::string& s) {
  std::size_t n = 0;
  for (std::size_t p = s.find("<HAND>"); p != std::string::npos; p = s.find("<HAND>", p + 1)) ++n;
  return n;
}

}  // namespace

void QASample::validate() const {
  if (clip_id.empty()) throw SchemaMismatch("QA sample without clip_id");
  const std::size_t n = count_markers(answer);
  if (n != future.horizon()) {
    throw HorizonMismatch(clip_id + ": answer has " + std::to_string(n) + " <HAND> markers for a horizon of " +
                          std::to_string(future.horizon()));
  }
  if (count_markers(question) != 0) throw SchemaMismatch(clip_id + ": question contains <HAND>");
}

Json qa_to_json(const QASample& s) {
  Json j = {{"clip_id", s.clip_id},
            {"task", tokens::task_name(s.task)},
            {"question", s.question},
            {"answer", s.answer},
            {"N", s.future.horizon()},
            {"future", trajectory_to_json(s.future)},
            {"instruction", s.instruction ? Json(*s.instruction) : Json(nullptr)},
            {"template_id", s.template_id},
            {"transcript_hash", s.transcript_hash ? Json(*s.transcript_hash) : Json(nullptr)}};
  return j;
}

QASample qa_from_json(const Json& j) {
  const std::string what = "QA sample";
  QASample s;
  try {
    s.clip_id = require(j, "clip_id", what).get<std::string>();
    s.task = tokens::task_from_name(require(j, "task", what).get<std::string>());
    s.question = require(j, "question", what).get<std::string>();
    s.answer = require(j, "answer", what).get<std::string>();
    s.future = trajectory_from_json(require(j, "future", what));
    if (j.contains("N") && j.at("N").get<std::size_t>() != s.future.horizon()) {
      throw HorizonMismatch(s.clip_id + ": N disagrees with the trajectory length");
    }
    if (j.contains("instruction") && !j.at("instruction").is_null()) s.instruction = j.at("instruction").get<std::string>();
    s.template_id = j.value("template_id", std::string());
    if (j.contains("transcript_hash") && !j.at("transcript_hash").is_null()) {
      s.transcript_hash = j.at("transcript_hash").get<std::string>();
    }
  } catch (const Json::exception& e) {
    throw SchemaMismatch(what + ": " + e.what());
  } catch (const ConfigError& e) {
    throw SchemaMismatch(what + ": " + e.what());
  }
  s.validate();
  return s;
}

void save_qa(const std::filesystem::path& path, const std::vector<QASample>& samples) {
  std::vector<Json> lines;
  lines.reserve(samples.size());
  for (const auto& s : samples) lines.push_back(qa_to_json(s));
  write_jsonl(path, lines);
}

std::vector<QASample> load_qa(const std::filesystem::path& path) {
  std::vector<QASample> out;
  for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    try {
      out.push_back(qa_from_json(j));
    } catch (const HorizonMismatch& e) {
      throw HorizonMismatch(path.string() + ":" + std::to_string(line) + ": " + e.what());
    } catch (const DataError& e) {
      throw SchemaMismatch(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace handtraj::datasetgen
