#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "handtraj/model/model.hpp"

namespace handtraj::model {

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  std::size_t warmup = 50;
  double lr = 3e-3;
  double min_lr_ratio = 0.1;  // cosine floor as a fraction of lr
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip = 1.0;
  std::uint64_t seed = 0;
  bool parallel = true;

  void validate() const;
  Json to_json() const;
  static TrainConfig from_json(const Json& j);
};

// Linear warmup, then cosine decay to min_lr_ratio * lr at `steps`.
double learning_rate(const TrainConfig& cfg, std::size_t step);

struct AdamState {
  std::size_t t = 0;
  nn::Grads<float> m, v;
};

// Decoupled weight decay on ".w" matrices only.
void adamw_update(nn::ParamStore<float>& params, const nn::Grads<float>& grads, AdamState& state,
                  const TrainConfig& cfg, double lr);

struct BatchResult {
  LossValues mean;
  double grad_norm = 0;  // before clipping
};

// Mean loss and gradient over `batch`; sample i draws its noise from
// Rng(noise_seed).fork(i). Per-sample gradients are reduced in sample order,
// so the result does not depend on the thread count.
template <typename Real>
BatchResult batch_gradient(const HandModel<Real>& model, std::span<const Example* const> batch,
                           std::uint64_t noise_seed, nn::Grads<Real>& grads, bool parallel);

// Example indices for a step: epochs are seeded permutations of the data.
std::vector<std::size_t> batch_indices(std::size_t dataset_size, const TrainConfig& cfg, std::size_t step);

struct StepLog {
  std::size_t step = 0;  // 1-based
  LossValues loss;
  double lr = 0;
  double grad_norm = 0;

  Json to_json() const;
};

struct TrainState {
  std::size_t step = 0;  // completed steps
  AdamState adam;
};

// Runs steps state.step+1 .. cfg.steps. `on_step` may return false to stop
// early. Throws NonFiniteLoss naming the step and example.
void train(HandModel<float>& model, std::span<const Example> data, const TrainConfig& cfg, TrainState& state,
           const std::function<bool(const StepLog&)>& on_step = {});

struct Checkpoint {
  ModelConfig config;
  tokens::Vocabulary vocab;
  nn::ParamStore<float> params;
  TrainConfig train_config;
  TrainState state;
  Json extra;
};

// "HTCKPT\0\0", u32 version, u64 header length, JSON header, raw float32
// tensors (parameters, then Adam moments when present).
void save_checkpoint(const std::filesystem::path& path, const HandModel<float>& model, const TrainConfig& tcfg,
                     const TrainState& state, const Json& extra = Json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);
HandModel<float> model_from_checkpoint(const Checkpoint& ck);

}  // namespace handtraj::model
