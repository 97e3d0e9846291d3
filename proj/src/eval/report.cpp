#include "handtraj/eval/report.hpp"

#include <algorithm>
#include <iomanip>
#include <map>
#include <sstream>

namespace handtraj::eval {

Json prediction_to_json(const PredictionRecord& p) {
  Json gens = Json::array();
  for (const auto& g : p.generations) gens.push_back(trajectory_to_json(g));
  return {{"clip_id", p.clip_id},
          {"N", p.horizon()},
          {"future", trajectory_to_json(p.combined())},
          {"generations", std::move(gens)},
          {"K", p.generations.size()},
          {"seed", p.seed},
          {"temperature", p.temperature},
          {"source", p.source},
          {"config_hash", p.config_hash}};
}

PredictionRecord prediction_from_json(const Json& j) {
  PredictionRecord p;
  p.clip_id = require(j, "clip_id", "prediction").get<std::string>();
  const std::string what = "prediction " + p.clip_id;
  if (j.contains("generations") && !j["generations"].empty()) {
    for (const auto& g : j["generations"]) p.generations.push_back(trajectory_from_json(g));
  } else {
    p.generations.push_back(trajectory_from_json(require(j, "future", what)));
  }
  if (j.contains("N") && j["N"].get<std::size_t>() != p.horizon()) {
    throw HorizonMismatch(what + ": N disagrees with trajectory length");
  }
  for (const auto& g : p.generations) {
    if (g.horizon() != p.horizon()) throw HorizonMismatch(what + ": generations disagree in horizon");
  }
  p.seed = j.value("seed", std::uint64_t{0});
  p.temperature = j.value("temperature", 0.0);
  p.source = j.value("source", std::string());
  p.config_hash = j.value("config_hash", std::string());
  return p;
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  std::vector<PredictionRecord> out;
  for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    try {
      out.push_back(prediction_from_json(j));
    } catch (const HorizonMismatch&) {
      throw;
    } catch (const DataError& e) {
      throw SchemaMismatch(path.filename().string() + ":" + std::to_string(line) + ": " + e.what());
    } catch (const Json::exception& e) {
      throw SchemaMismatch(path.filename().string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

PredictionRecord prediction_from_gt(const gt::GtSample& s) {
  PredictionRecord p;
  p.clip_id = s.clip_id;
  p.generations.push_back(s.future);
  p.source = "gt";
  return p;
}

std::vector<PredictionRecord> baseline_predictions(std::span<const gt::GtSample> dataset, BaselineKind kind,
                                                   const KalmanConfig& cfg) {
  std::vector<PredictionRecord> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset) {
    PredictionRecord p;
    p.clip_id = s.clip_id;
    p.generations.push_back(run_baseline(kind, s.context, s.future.horizon(), cfg));
    p.source = baseline_name(kind);
    out.push_back(std::move(p));
  }
  return out;
}

EvalReport evaluate(std::span<const gt::GtSample> dataset, std::span<const PredictionRecord> predictions,
                    const EvalOptions& opts) {
  if (dataset.empty()) throw DataError("evaluation dataset is empty");
  std::map<std::string, const PredictionRecord*> by_id;
  for (const auto& p : predictions) {
    if (!by_id.emplace(p.clip_id, &p).second) throw SchemaMismatch("duplicate prediction for clip " + p.clip_id);
    if (p.generations.empty()) throw SchemaMismatch("prediction for clip " + p.clip_id + " has no trajectory");
  }

  std::vector<const gt::GtSample*> order;
  for (const auto& s : dataset) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->clip_id < b->clip_id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->clip_id == order[i - 1]->clip_id) throw SchemaMismatch("duplicate GT clip " + order[i]->clip_id);
  }

  const std::size_t horizon = order.front()->future.horizon();
  const WdeWeights weights = opts.weights ? *opts.weights : WdeWeights::linear(horizon);

  std::vector<const PredictionRecord*> matched(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto it = by_id.find(order[i]->clip_id);
    if (it == by_id.end()) throw SchemaMismatch("no prediction for clip " + order[i]->clip_id);
    if (order[i]->future.horizon() != horizon) throw HorizonMismatch("GT samples disagree in horizon");
    for (const auto& g : it->second->generations) {
      if (g.horizon() != horizon) {
        throw HorizonMismatch("prediction for clip " + order[i]->clip_id + " has horizon " +
                              std::to_string(g.horizon()) + ", expected " + std::to_string(horizon));
      }
    }
    matched[i] = it->second;
  }

  EvalReport r;
  r.samples.resize(order.size());
  const auto n = static_cast<std::ptrdiff_t>(order.size());
#pragma omp parallel for schedule(static) if (opts.parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& pred = *matched[i];
    r.samples[i] = {order[i]->clip_id, score(pred.combined(), order[i]->future, weights), pred.generations.size()};
  }

  double sa = 0.0, sf = 0.0, sw = 0.0;
  for (const auto& s : r.samples) {
    sa += s.metrics.ade;
    sw += s.metrics.wde;
    if (s.metrics.fde) {
      sf += *s.metrics.fde;
      ++r.fde_count;
    }
  }
  r.sample_count = r.samples.size();
  r.mean_ade = sa / static_cast<double>(r.sample_count);
  r.mean_wde = sw / static_cast<double>(r.sample_count);
  r.mean_fde = r.fde_count > 0 ? sf / static_cast<double>(r.fde_count) : 0.0;
  r.unmatched_predictions = predictions.size() - order.size();
  r.wde_weights = weights.values();
  r.wde_scheme = opts.weights ? opts.wde_scheme : "linear";
  r.source = matched.front()->source;
  r.generations = matched.front()->generations.size();
  r.seed = opts.seed;
  r.config_hash = opts.config_hash;
  return r;
}

Json EvalReport::to_json() const {
  Json per = Json::array();
  for (const auto& s : samples) {
    per.push_back({{"clip_id", s.clip_id},
                   {"ade", s.metrics.ade},
                   {"fde", s.metrics.fde ? Json(*s.metrics.fde) : Json(nullptr)},
                   {"wde", s.metrics.wde},
                   {"K", s.generations}});
  }
  return {{"aggregates", {{"ade", mean_ade}, {"fde", mean_fde}, {"wde", mean_wde}}},
          {"counts", {{"samples", sample_count}, {"fde_samples", fde_count}, {"unmatched_predictions", unmatched_predictions}}},
          {"wde", {{"scheme", wde_scheme}, {"weights", wde_weights}, {"note", "WDE = sum_t w_t * mean over gt-valid hands of the L2 error at step t"}}},
          {"missing_prediction_penalty", kMissingPenalty},
          {"source", source},
          {"K", generations},
          {"seed", seed},
          {"config_hash", config_hash},
          {"samples", std::move(per)}};
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "source: " << source << "  K: " << generations << "  seed: " << seed << "\n";
  os << "config: " << config_hash << "\n";
  os << "samples: " << sample_count << " (fde over " << fde_count << ")\n";
  os << "ADE " << mean_ade << "  FDE " << mean_fde << "  WDE " << mean_wde << "\n";
  os << "WDE weights (" << wde_scheme << "):";
  for (double w : wde_weights) os << " " << w;
  os << "\n";
  os << "missing predictions cost " << kMissingPenalty << " per hand-step\n";
  return os.str();
}

}  // namespace handtraj::eval
