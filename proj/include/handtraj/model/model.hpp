#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "handtraj/common/error.hpp"
#include "handtraj/common/image.hpp"
#include "handtraj/common/rng.hpp"
#include "handtraj/model/config.hpp"
#include "handtraj/nn/params.hpp"
#include "handtraj/nn/tape.hpp"
#include "handtraj/tokens/sequence.hpp"
#include "handtraj/tokens/vocab.hpp"

namespace handtraj::model {

class LengthExceeded : public Error {
 public:
  using Error::Error;
};

class GenerationOverrun : public Error {
 public:
  using Error::Error;
};

class EmptyBatch : public Error {
 public:
  using Error::Error;
};

// Frames -> (T*M) x P patch rows in [0, 1], frame-major, patches row-major
// within a frame. Throws ShapeMismatch on a wrong count or resolution.
nn::Matrix<float> frames_to_patches(std::span<const Image> frames, const ModelConfig& cfg);

struct Example {
  nn::Matrix<float> patches;  // empty for text-only records
  tokens::TokenSequence seq;
};

struct SamplingOptions {
  double temperature = 0.0;  // 0 is greedy
  std::uint64_t seed = 0;
  bool deterministic_hand = true;  // z = 0 instead of z ~ N(0, I)
  std::size_t max_tokens = 64;
};

struct Generation {
  std::vector<int> ids;  // answer ids, including <eos> when reached
  std::vector<HandStep> steps;
  bool overrun = false;
};

struct LossValues {
  double total = 0, txt = 0, hand = 0, recon = 0, kl = 0, validity = 0;
};

template <typename Real>
class HandModel {
 public:
  using Mat = nn::Matrix<Real>;
  using Tape = nn::Tape<Real>;
  using Var = nn::Var;

  HandModel(ModelConfig cfg, tokens::Vocabulary vocab, std::uint64_t seed);
  HandModel(ModelConfig cfg, tokens::Vocabulary vocab, nn::ParamStore<Real> params);

  const ModelConfig& config() const { return cfg_; }
  const tokens::Vocabulary& vocab() const { return vocab_; }
  nn::ParamStore<Real>& params() { return params_; }
  const nn::ParamStore<Real>& params() const { return params_; }

  template <typename Other>
  HandModel<Other> cast() const {
    return HandModel<Other>(cfg_, vocab_, params_.template cast<Other>());
  }

  // (T*M) x vision_dim.
  Var encode_frames(Tape& tape, const nn::Matrix<float>& patches) const;
  // Tokenwise projector into d_model.
  Var project_visual(Tape& tape, Var tokens) const;
  // Encoded, pooled, projected and position-tagged visual tokens.
  Var visual_tokens(Tape& tape, const nn::Matrix<float>& patches) const;

  struct Forward {
    Var embeddings;  // input rows after position embedding
    Var residual;    // stream after the last block
    Var hidden;      // final layer norm of the residual stream
    std::vector<Var> qkv;  // per layer
    std::vector<int> position;  // expanded row of each input id (-1 for <image>)
  };

  // The <image> id, if present, is replaced by the visual tokens. Every
  // <HAND> id needs an entry in `hands` keyed by its index in `ids`.
  Forward forward(Tape& tape, const nn::Matrix<float>* patches, std::span<const int> ids,
                  const std::map<std::size_t, HandStep>& hands) const;

  Var logits(Tape& tape, Var hidden_rows) const;

  struct Posterior {
    Var mu;
    Var logsig;
  };
  Posterior cvae_posterior(Tape& tape, Var h, Var gt_features) const;
  // n x 6: sigmoid coordinates (xl, yl, xr, yr) then two validity logits.
  Var decode_hand(Tape& tape, Var h, Var z) const;

  // Teacher-forced per-example loss; `rng` draws the posterior noise.
  Var loss(Tape& tape, const Example& ex, Rng& rng, LossValues* values = nullptr) const;

  // Decoder outputs at every <HAND> slot of a teacher-forced pass with z = 0.
  std::vector<HandStep> teacher_forced_steps(const Example& ex) const;

  // Iterative decoding after `prompt_ids`; the prompt is processed once and
  // shared by all `count` generations, generation i drawing from
  // Rng(seed).fork(i).
  std::vector<Generation> generate(const nn::Matrix<float>* patches, std::span<const int> prompt_ids,
                                   const SamplingOptions& opts, std::size_t count = 1) const;

  // Parameters tied to the trajectory head.
  bool is_cvae_param(std::size_t index) const;

 private:
  void register_params();
  void initialize(std::uint64_t seed);
  Var block(Tape& tape, Var x, std::size_t layer, Var* qkv_out) const;
  Var param(Tape& tape, const std::string& name) const { return tape.param(params_.id(name)); }

  struct Cache;
  void step(Cache& cache, std::vector<Real> x) const;
  HandStep decode_step(std::span<const Real> hidden, Rng* rng) const;

  ModelConfig cfg_;
  tokens::Vocabulary vocab_;
  nn::ParamStore<Real> params_;
};

extern template class HandModel<float>;
extern template class HandModel<double>;

}  // namespace handtraj::model
