#include "handtraj/model/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace handtraj::model {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (steps == 0) fail("steps must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(lr >= 0)) fail("lr must be nonnegative");
  if (min_lr_ratio < 0 || min_lr_ratio > 1) fail("min_lr_ratio must lie in [0, 1]");
  if (weight_decay < 0) fail("weight_decay must be nonnegative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0, 1)");
  if (!(eps > 0)) fail("eps must be positive");
  if (!(clip > 0)) fail("clip must be positive");
}

Json TrainConfig::to_json() const {
  return {{"steps", steps},       {"batch_size", batch_size}, {"warmup", warmup},
          {"lr", lr},             {"min_lr_ratio", min_lr_ratio}, {"weight_decay", weight_decay},
          {"beta1", beta1},       {"beta2", beta2},           {"eps", eps},
          {"clip", clip},         {"seed", seed},             {"parallel", parallel}};
}

TrainConfig TrainConfig::from_json(const Json& j) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (!c.to_json().contains(key)) throw ConfigError("train config: unknown key '" + key + "'");
  }
#define HT_FIELD(name) c.name = j.value(#name, c.name)
  HT_FIELD(steps);
  HT_FIELD(batch_size);
  HT_FIELD(warmup);
  HT_FIELD(lr);
  HT_FIELD(min_lr_ratio);
  HT_FIELD(weight_decay);
  HT_FIELD(beta1);
  HT_FIELD(beta2);
  HT_FIELD(eps);
  HT_FIELD(clip);
  HT_FIELD(seed);
  HT_FIELD(parallel);
#undef HT_FIELD
  c.validate();
  return c;
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
  if (cfg.warmup > 0 && step < cfg.warmup) {
    return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup);
  }
  const double span = static_cast<double>(std::max<std::size_t>(cfg.steps, cfg.warmup + 1) - cfg.warmup);
  const double progress = std::min(1.0, static_cast<double>(step - cfg.warmup) / span);
  const double floor = cfg.lr * cfg.min_lr_ratio;
  return floor + (cfg.lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_update(nn::ParamStore<float>& params, const nn::Grads<float>& grads, AdamState& state,
                  const TrainConfig& cfg, double lr) {
  if (state.m.empty()) {
    state.m = params.zeros_like();
    state.v = params.zeros_like();
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    const bool decay = name.size() > 2 && name.compare(name.size() - 2, 2, ".w") == 0;
    auto& p = params[i].data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    const auto& g = grads[i].data;
    const float step = static_cast<float>(lr / bc1);
    const float rb2 = static_cast<float>(1.0 / bc2);
    const float wd = decay ? static_cast<float>(lr * cfg.weight_decay) : 0.0f;
    const float eps = static_cast<float>(cfg.eps);
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      p[k] -= wd * p[k];
      p[k] -= step * m[k] / (std::sqrt(v[k] * rb2) + eps);
    }
  }
}

template <typename Real>
BatchResult batch_gradient(const HandModel<Real>& model, std::span<const Example* const> batch,
                           std::uint64_t noise_seed, nn::Grads<Real>& grads, bool parallel) {
  if (batch.empty()) throw EmptyBatch("batch has no examples");
  const std::size_t n = batch.size();
  std::vector<nn::Grads<Real>> per(n);
  std::vector<LossValues> values(n);
  std::vector<Rng> rngs;
  Rng root(noise_seed);
  for (std::size_t i = 0; i < n; ++i) rngs.push_back(root.fork(i));
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      per[i] = model.params().zeros_like();
      nn::Tape<Real> tape(&model.params());
      const nn::Var L = model.loss(tape, *batch[i], rngs[i], &values[i]);
      if (std::isfinite(values[i].total)) tape.backward(L, &per[i]);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) throw DataError("example " + std::to_string(i) + " of the batch: " + errors[i]);
  }
  grads = model.params().zeros_like();
  BatchResult r;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(values[i].total)) {
      throw NonFiniteLoss("non-finite loss on batch example " + std::to_string(i) + " (txt " +
                          std::to_string(values[i].txt) + ", hand " + std::to_string(values[i].hand) + ")");
    }
    for (std::size_t p = 0; p < grads.size(); ++p) {
      auto& dst = grads[p].data;
      const auto& src = per[i][p].data;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
    r.mean.total += values[i].total;
    r.mean.txt += values[i].txt;
    r.mean.hand += values[i].hand;
    r.mean.recon += values[i].recon;
    r.mean.kl += values[i].kl;
    r.mean.validity += values[i].validity;
  }
  const double inv = 1.0 / static_cast<double>(n);
  double sq = 0;
  for (auto& g : grads) {
    for (auto& x : g.data) {
      x = static_cast<Real>(x * inv);
      sq += static_cast<double>(x) * static_cast<double>(x);
    }
  }
  r.grad_norm = std::sqrt(sq);
  r.mean.total *= inv;
  r.mean.txt *= inv;
  r.mean.hand *= inv;
  r.mean.recon *= inv;
  r.mean.kl *= inv;
  r.mean.validity *= inv;
  return r;
}

template BatchResult batch_gradient(const HandModel<float>&, std::span<const Example* const>, std::uint64_t,
                                    nn::Grads<float>&, bool);
template BatchResult batch_gradient(const HandModel<double>&, std::span<const Example* const>, std::uint64_t,
                                    nn::Grads<double>&, bool);

std::vector<std::size_t> batch_indices(std::size_t dataset_size, const TrainConfig& cfg, std::size_t step) {
  std::vector<std::size_t> out;
  const std::size_t first = step * cfg.batch_size;
  std::size_t epoch = SIZE_MAX;
  std::vector<std::size_t> order;
  for (std::size_t k = first; k < first + cfg.batch_size; ++k) {
    const std::size_t e = k / dataset_size;
    if (e != epoch) {
      epoch = e;
      order.resize(dataset_size);
      for (std::size_t i = 0; i < dataset_size; ++i) order[i] = i;
      Rng rng = Rng(cfg.seed).fork(0x5eed0000ULL + e);
      rng.shuffle(order);
    }
    out.push_back(order[k % dataset_size]);
  }
  return out;
}

Json StepLog::to_json() const {
  return {{"step", step},     {"loss", loss.total}, {"l_txt", loss.txt},   {"l_hand", loss.hand},
          {"recon", loss.recon}, {"kl", loss.kl},   {"validity", loss.validity}, {"lr", lr},
          {"grad_norm", grad_norm}};
}

void train(HandModel<float>& model, std::span<const Example> data, const TrainConfig& cfg, TrainState& state,
           const std::function<bool(const StepLog&)>& on_step) {
  cfg.validate();
  if (data.empty()) throw EmptyBatch("training set is empty");
  nn::Grads<float> grads;
  while (state.step < cfg.steps) {
    const std::size_t step = state.step;
    std::vector<const Example*> batch;
    for (std::size_t i : batch_indices(data.size(), cfg, step)) batch.push_back(&data[i]);
    const std::uint64_t noise_seed = cfg.seed * 0x9E3779B97F4A7C15ULL + step + 1;
    BatchResult r;
    try {
      r = batch_gradient<float>(model, batch, noise_seed, grads, cfg.parallel);
    } catch (const NonFiniteLoss& e) {
      throw NonFiniteLoss("step " + std::to_string(step + 1) + ": " + e.what());
    }
    if (r.grad_norm > cfg.clip) {
      const float s = static_cast<float>(cfg.clip / r.grad_norm);
      for (auto& g : grads)
        for (auto& x : g.data) x *= s;
    }
    const double lr = learning_rate(cfg, step);
    adamw_update(model.params(), grads, state.adam, cfg, lr);
    ++state.step;
    StepLog log{state.step, r.mean, lr, r.grad_norm};
    if (on_step && !on_step(log)) break;
  }
}

namespace {

constexpr char kMagic[8] = {'H', 'T', 'C', 'K', 'P', 'T', 0, 0};
constexpr std::uint32_t kVersion = 1;

void write_tensors(std::ofstream& out, const std::vector<nn::Matrix<float>>& ts) {
  for (const auto& t : ts)
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const HandModel<float>& model, const TrainConfig& tcfg,
                     const TrainState& state, const Json& extra) {
  const auto& ps = model.params();
  Json tensors = Json::array();
  for (std::size_t i = 0; i < ps.size(); ++i) tensors.push_back({{"name", ps.name(i)}, {"rows", ps[i].rows}, {"cols", ps[i].cols}});
  Json header = {{"model", model.config().to_json()},
                 {"vocab", model.vocab().to_json()},
                 {"train", tcfg.to_json()},
                 {"step", state.step},
                 {"rng", {{"seed", tcfg.seed}, {"samples_drawn", state.step * tcfg.batch_size}}},
                 {"adam_t", state.adam.t},
                 {"has_moments", !state.adam.m.empty()},
                 {"tensors", tensors},
                 {"extra", extra}};
  const std::string h = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp);
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    const std::uint64_t len = h.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    std::vector<nn::Matrix<float>> values;
    for (std::size_t i = 0; i < ps.size(); ++i) values.push_back(ps[i]);
    write_tensors(out, values);
    if (!state.adam.m.empty()) {
      write_tensors(out, state.adam.m);
      write_tensors(out, state.adam.v);
    }
    if (!out) throw Error("failed writing " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw SchemaMismatch(path.string() + ": not a checkpoint");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion) throw SchemaMismatch(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ULL << 30)) throw SchemaMismatch(path.string() + ": corrupt header");
  std::string h(len, '\0');
  in.read(h.data(), static_cast<std::streamsize>(len));
  Json header;
  try {
    header = Json::parse(h);
  } catch (const Json::exception& e) {
    throw SchemaMismatch(path.string() + ": header: " + e.what());
  }
  Checkpoint ck;
  ck.config = ModelConfig::from_json(header.at("model"));
  ck.vocab = tokens::Vocabulary::from_json(header.at("vocab"));
  ck.train_config = TrainConfig::from_json(header.at("train"));
  ck.state.step = header.at("step").get<std::size_t>();
  ck.state.adam.t = header.at("adam_t").get<std::size_t>();
  ck.extra = header.value("extra", Json::object());
  std::vector<nn::Matrix<float>> shapes;
  for (const auto& t : header.at("tensors")) {
    ck.params.add(t.at("name").get<std::string>(), t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
  }
  auto read_into = [&](std::vector<nn::Matrix<float>>& ts) {
    for (auto& t : ts) {
      in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
      if (!in) throw SchemaMismatch(path.string() + ": truncated tensor data");
    }
  };
  std::vector<nn::Matrix<float>> values = ck.params.zeros_like();
  read_into(values);
  for (std::size_t i = 0; i < values.size(); ++i) ck.params[i] = std::move(values[i]);
  if (header.at("has_moments").get<bool>()) {
    ck.state.adam.m = ck.params.zeros_like();
    ck.state.adam.v = ck.params.zeros_like();
    read_into(ck.state.adam.m);
    read_into(ck.state.adam.v);
  }
  return ck;
}

HandModel<float> model_from_checkpoint(const Checkpoint& ck) { return HandModel<float>(ck.config, ck.vocab, ck.params); }

}  // namespace handtraj::model
