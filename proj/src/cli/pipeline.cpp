#include "handtraj/cli/pipeline.hpp"

#include "handtraj/tokens/sequence.hpp"

namespace handtraj::cli {

tokens::Vocabulary build_vocab(std::span<const datasetgen::QASample> qa) {
  std::vector<std::string> corpus;
  corpus.reserve(2 * qa.size());
  for (const auto& s : qa) {
    corpus.push_back(s.question);
    corpus.push_back(s.answer);
  }
  return tokens::Vocabulary::build(corpus);
}

model::Example make_example(const datasetgen::QASample& s, const datasetgen::FrameStore* frames,
                            const tokens::Vocabulary& vocab, const model::ModelConfig& cfg) {
  model::Example ex;
  ex.seq = tokens::tokenize_sample(vocab, s.question, s.answer, s.future);
  if (frames != nullptr) {
    const auto& all = frames->at(s.clip_id);
    if (all.size() < cfg.context_frames) {
      throw DataError(s.clip_id + ": " + std::to_string(all.size()) + " frames for " +
                      std::to_string(cfg.context_frames) + " context frames");
    }
    ex.patches = model::frames_to_patches(std::span<const Image>(all).first(cfg.context_frames), cfg);
  }
  return ex;
}

std::vector<model::Example> make_examples(std::span<const datasetgen::QASample> qa,
                                          const datasetgen::FrameStore* frames, const tokens::Vocabulary& vocab,
                                          const model::ModelConfig& cfg) {
  std::vector<model::Example> out;
  out.reserve(qa.size());
  for (const auto& s : qa) out.push_back(make_example(s, frames, vocab, cfg));
  return out;
}

void SamplingConfig::validate() const {
  if (!(temperature >= 0)) throw ConfigError("sampling: temperature must be nonnegative");
  if (generations == 0) throw ConfigError("sampling: generations must be positive");
  if (max_tokens == 0) throw ConfigError("sampling: max_tokens must be positive");
}

Json SamplingConfig::to_json() const {
  return {{"temperature", temperature},
          {"generations", generations},
          {"deterministic_hand", deterministic_hand},
          {"max_tokens", max_tokens},
          {"seed", seed}};
}

SamplingConfig SamplingConfig::from_json(const Json& j) {
  SamplingConfig c;
  for (const auto& [key, value] : j.items()) {
    if (!c.to_json().contains(key)) throw ConfigError("sampling: unknown key '" + key + "'");
  }
  c.temperature = j.value("temperature", c.temperature);
  c.generations = j.value("generations", c.generations);
  c.deterministic_hand = j.value("deterministic_hand", c.deterministic_hand);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

HandTrajectory fit_horizon(const HandTrajectory& traj, std::size_t horizon) {
  HandTrajectory out(horizon);
  for (std::size_t t = 0; t < std::min(horizon, traj.horizon()); ++t) out.set_step(t, traj.step(t));
  return out;
}

namespace {

std::uint64_t sample_seed(std::uint64_t seed, const std::string& clip_id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : clip_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return seed ^ h;
}

}  // namespace

std::vector<Prediction> predict(const model::HandModel<float>& model, std::span<const datasetgen::QASample> qa,
                                const datasetgen::FrameStore* frames, const SamplingConfig& cfg, bool parallel) {
  cfg.validate();
  const auto& vocab = model.vocab();
  std::vector<Prediction> out(qa.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::size_t i = 0; i < qa.size(); ++i) {
    try {
      const auto& s = qa[i];
      nn::Matrix<float> patches;
      if (frames != nullptr) {
        const auto& all = frames->at(s.clip_id);
        if (all.size() < model.config().context_frames) throw DataError(s.clip_id + ": too few frames");
        patches = model::frames_to_patches(std::span<const Image>(all).first(model.config().context_frames),
                                           model.config());
      }
      model::SamplingOptions opts;
      opts.temperature = cfg.temperature;
      opts.seed = sample_seed(cfg.seed, s.clip_id);
      opts.deterministic_hand = cfg.deterministic_hand;
      opts.max_tokens = cfg.max_tokens;
      const auto prompt = tokens::encode_prompt(vocab, s.question);
      const auto gens = model.generate(frames != nullptr ? &patches : nullptr, prompt, opts, cfg.generations);
      Prediction& p = out[i];
      p.record.clip_id = s.clip_id;
      p.record.seed = opts.seed;
      p.record.temperature = cfg.temperature;
      p.record.source = "model";
      for (const auto& g : gens) {
        const auto parsed = tokens::parse_generated(vocab, g.ids, g.steps);
        if (parsed.trajectory.horizon() != s.future.horizon()) ++p.malformed;
        if (g.overrun) ++p.overruns;
        p.record.generations.push_back(fit_horizon(parsed.trajectory, s.future.horizon()));
        p.texts.push_back(!parsed.text.empty() && parsed.text.front() == ' ' ? parsed.text.substr(1) : parsed.text);
      }
    } catch (...) {
#pragma omp critical(handtraj_predict_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<gt::GtSample> qa_as_gt(std::span<const datasetgen::QASample> qa) {
  std::vector<gt::GtSample> out;
  out.reserve(qa.size());
  for (const auto& s : qa) {
    gt::GtSample g;
    g.clip_id = s.clip_id;
    g.future = s.future;
    g.narration = s.instruction;
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace handtraj::cli
