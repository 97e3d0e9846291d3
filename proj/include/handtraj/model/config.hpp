#pragma once

#include <cstddef>
#include <string>

#include "handtraj/common/json_io.hpp"

namespace handtraj::model {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t vision_dim = 64;
  std::size_t context_frames = 10;  // T
  std::size_t frame_size = 16;      // square frames, pixels
  std::size_t patch_size = 4;       // pixels; grid side g = frame_size / patch_size
  std::size_t slow_frames = 4;      // s
  std::size_t pool_kernel = 2;      // k
  std::size_t horizon = 4;          // N
  std::size_t latent_dim = 8;
  std::size_t cvae_hidden = 64;
  std::size_t projector_layers = 2;
  std::size_t max_len = 160;
  double lambda_txt = 1.0;
  double lambda_hand = 1.0;
  double kl_weight = 1.0;
  double validity_weight = 0.1;
  double init_std = 0.02;

  std::size_t grid() const { return frame_size / patch_size; }
  std::size_t tokens_per_frame() const { return grid() * grid(); }  // M
  std::size_t patch_dim() const { return patch_size * patch_size * 3; }
  std::size_t visual_token_count() const;

  void validate() const;
  Json to_json() const;
  static ModelConfig from_json(const Json& j);
};

}  // namespace handtraj::model
