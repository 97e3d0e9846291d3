#include "handtraj/cli/config.hpp"

#include "handtraj/common/hash.hpp"
#include "handtraj/common/json_io.hpp"

namespace handtraj::cli {

namespace {

Json without_seed(Json j) {
  j.erase("seed");
  return j;
}

Json ransac_to_json(const geometry::RansacConfig& r) {
  return {{"max_iters", r.max_iters}, {"inlier_threshold", r.inlier_threshold}, {"min_inliers", r.min_inliers}};
}

void check_keys(const Json& reference, const Json& given, const std::string& where) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (reference.at(key).is_object()) {
      if (!value.is_object()) throw ConfigError("config key '" + path + "' must be an object");
      check_keys(reference.at(key), value, path);
    }
  }
}

template <typename T, typename F>
T parse_block(const Json& j, const char* key, F&& from_json) {
  try {
    return from_json(j.at(key));
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config block '") + key + "': " + e.what());
  }
}

}  // namespace

eval::WdeWeights EvalSettings::weights_for(std::size_t horizon) const {
  if (wde == "linear") return eval::WdeWeights::linear(horizon);
  if (wde == "uniform") return eval::WdeWeights::uniform(horizon);
  if (wde == "final") return eval::WdeWeights::final_step(horizon);
  if (wde == "custom") {
    if (weights.size() != horizon) {
      throw HorizonMismatch("custom WDE weights have " + std::to_string(weights.size()) + " entries for horizon " +
                            std::to_string(horizon));
    }
    return eval::WdeWeights(weights);
  }
  throw ConfigError("unknown WDE scheme '" + wde + "' (expected linear, uniform, final or custom)");
}

Json RunConfig::to_json() const {
  return {{"seed", seed},
          {"workers", workers},
          {"criteria", criteria.to_json()},
          {"ransac", ransac_to_json(ransac)},
          {"synth", synth.to_json()},
          {"synth_clips", synth_clips},
          {"chat", chat.to_json()},
          {"model", model.to_json()},
          {"train", without_seed(train.to_json())},
          {"sampling", without_seed(sampling.to_json())},
          {"eval", {{"wde", eval.wde}, {"weights", eval.weights}, {"kalman", eval.kalman.to_json()}}}};
}

RunConfig RunConfig::from_json(const Json& j) {
  RunConfig c;
  check_keys(c.to_json(), j, "");
  Json full = c.to_json();
  full.merge_patch(j);
  try {
    c.seed = full.at("seed").get<std::uint64_t>();
    c.workers = full.at("workers").get<int>();
    c.synth_clips = full.at("synth_clips").get<std::size_t>();
    const Json& r = full.at("ransac");
    c.ransac.max_iters = r.at("max_iters").get<int>();
    c.ransac.inlier_threshold = r.at("inlier_threshold").get<double>();
    c.ransac.min_inliers = r.at("min_inliers").get<int>();
    c.ransac.seed = c.seed;
    const Json& e = full.at("eval");
    c.eval.wde = e.at("wde").get<std::string>();
    c.eval.weights = e.at("weights").get<std::vector<double>>();
    c.eval.kalman.process_noise = e.at("kalman").at("process_noise").get<double>();
    c.eval.kalman.observation_noise = e.at("kalman").at("observation_noise").get<double>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (c.synth_clips == 0) throw ConfigError("synth_clips must be positive");
  c.ransac.validate();
  c.eval.kalman.validate();
  if (c.eval.wde != "custom") c.eval.weights_for(1);
  c.criteria = parse_block<gt::FilterCriteria>(full, "criteria", gt::FilterCriteria::from_json);
  c.synth = parse_block<datasetgen::SynthSpec>(full, "synth", datasetgen::SynthSpec::from_json);
  c.chat = parse_block<datasetgen::ChatClientConfig>(full, "chat", datasetgen::ChatClientConfig::from_json);
  c.model = parse_block<model::ModelConfig>(full, "model", model::ModelConfig::from_json);
  c.train = parse_block<model::TrainConfig>(full, "train", model::TrainConfig::from_json);
  c.sampling = parse_block<SamplingConfig>(full, "sampling", SamplingConfig::from_json);
  c.train.seed = c.seed;
  c.train.parallel = c.workers > 1;
  c.sampling.seed = c.seed;
  return c;
}

std::string RunConfig::hash() const { return short_hash(to_json().dump()); }

RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& sets) {
  Json merged = Json::object();
  if (file) {
    try {
      merged = Json::parse(read_text(*file));
    } catch (const Json::parse_error& e) {
      throw ConfigError(file->string() + ": " + e.what());
    }
    if (!merged.is_object()) throw ConfigError(file->string() + ": expected a JSON object");
  }
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq), text = s.substr(eq + 1);
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    std::string pointer;
    for (std::size_t p = 0; p <= key.size();) {
      const auto dot = std::min(key.find('.', p), key.size());
      pointer += "/" + key.substr(p, dot - p);
      p = dot + 1;
    }
    merged[Json::json_pointer(pointer)] = value;
  }
  return RunConfig::from_json(merged);
}

}  // namespace handtraj::cli
