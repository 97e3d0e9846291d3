#include "handtraj/model/config.hpp"

#include "handtraj/common/error.hpp"
#include "handtraj/model/slowfast.hpp"

namespace handtraj::model {

std::size_t ModelConfig::visual_token_count() const {
  return pooled_token_count(context_frames, grid(), slow_frames, pool_kernel);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (d_model == 0 || heads == 0 || d_model % heads != 0) fail("d_model must be a positive multiple of heads");
  if (vision_dim == 0) fail("vision_dim must be positive");
  if (patch_size == 0 || frame_size % patch_size != 0) fail("patch_size must divide frame_size");
  if (context_frames == 0) fail("context_frames must be positive");
  if (slow_frames > context_frames) fail("slow_frames must not exceed context_frames");
  if (pool_kernel == 0 || grid() % pool_kernel != 0) fail("pool_kernel must divide the patch grid side");
  if (horizon == 0) fail("horizon must be positive");
  if (latent_dim == 0 || cvae_hidden == 0) fail("CVAE sizes must be positive");
  if (projector_layers < 1 || projector_layers > 2) fail("projector_layers must be 1 or 2");
  if (max_len < visual_token_count() + 8) fail("max_len too small for the visual tokens");
  if (lambda_txt < 0 || lambda_hand < 0 || kl_weight < 0 || validity_weight < 0) fail("loss weights must be nonnegative");
  if (!(init_std > 0)) fail("init_std must be positive");
}

Json ModelConfig::to_json() const {
  return {{"d_model", d_model},          {"layers", layers},
          {"heads", heads},              {"vision_dim", vision_dim},
          {"context_frames", context_frames}, {"frame_size", frame_size},
          {"patch_size", patch_size},    {"slow_frames", slow_frames},
          {"pool_kernel", pool_kernel},  {"horizon", horizon},
          {"latent_dim", latent_dim},    {"cvae_hidden", cvae_hidden},
          {"projector_layers", projector_layers}, {"max_len", max_len},
          {"lambda_txt", lambda_txt},    {"lambda_hand", lambda_hand},
          {"kl_weight", kl_weight},      {"validity_weight", validity_weight},
          {"init_std", init_std}};
}

ModelConfig ModelConfig::from_json(const Json& j) {
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    if (!c.to_json().contains(key)) throw ConfigError("model config: unknown key '" + key + "'");
  }
#define HT_FIELD(name) c.name = j.value(#name, c.name)
  HT_FIELD(d_model);
  HT_FIELD(layers);
  HT_FIELD(heads);
  HT_FIELD(vision_dim);
  HT_FIELD(context_frames);
  HT_FIELD(frame_size);
  HT_FIELD(patch_size);
  HT_FIELD(slow_frames);
  HT_FIELD(pool_kernel);
  HT_FIELD(horizon);
  HT_FIELD(latent_dim);
  HT_FIELD(cvae_hidden);
  HT_FIELD(projector_layers);
  HT_FIELD(max_len);
  HT_FIELD(lambda_txt);
  HT_FIELD(lambda_hand);
  HT_FIELD(kl_weight);
  HT_FIELD(validity_weight);
  HT_FIELD(init_std);
#undef HT_FIELD
  c.validate();
  return c;
}

}  // namespace handtraj::model
