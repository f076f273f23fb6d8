#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairdis/data.hpp"
#include "pairdis/graph.hpp"
#include "pairdis/tensor.hpp"

namespace pairdis {

// Encoder: conv(k)-relu, pool, conv(k)-relu, pool, conv-relu whose kernel
// covers the remaining extent (output 1x1), then four dense heads producing
// mu/logvar for the common and specific latents. The decoder mirrors it with
// transposed convolutions and nearest-neighbour upsampling, ending in a sigmoid.
struct ModelConfig {
  std::size_t image_hw = 28;
  std::size_t in_channels = 1;
  std::array<std::size_t, 3> conv_channels = {20, 50, 500};
  std::size_t kernel = 5;
  std::size_t latent_common = 20;
  std::size_t latent_specific = 10;
  double sigma_floor = 1e-6;

  // Spatial sizes after conv1, pool1, conv2, pool2 (the last is also the
  // kernel size of conv3).
  struct Ledger {
    std::size_t conv1, pool1, conv2, pool2;
  };
  Ledger ledger() const;  // raises invalid-argument if inconsistent
  void validate() const;
  std::size_t latent_dim() const noexcept { return latent_common + latent_specific; }
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path = "model");

// One parameter set shared by both branches of the pair.
struct ModelParams {
  NamedTensors encoder;
  NamedTensors decoder;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct PosteriorPair {
  std::vector<double> mu_c, sigma_c, mu_s, sigma_s;
};

// Fan-in scaled uniform weights, zero biases, zero log-variance heads;
// deterministic per seed.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
std::size_t parameter_count(const ModelParams& params);

// Prefixes "encoder/" and "decoder/" for checkpoints.
NamedTensors flatten(const ModelParams& params);
ModelParams unflatten(const NamedTensors& tensors);

// --- graph-level forward ---------------------------------------------------

using BoundParams = std::map<std::string, Var>;
BoundParams bind_params(Graph& g, const NamedTensors& params, bool trainable);
NamedTensors collect_grads(const Graph& g, const BoundParams& bound);

struct EncoderOut {
  Var mu_c, logvar_c, sigma_c;
  Var mu_s, logvar_s, sigma_s;
};

// x [B, in_channels, hw, hw] -> posteriors, each [B, M].
EncoderOut encoder_forward(Var x, const BoundParams& enc, const ModelConfig& cfg);
// z_c [B, M_c], z_s [B, M_s] -> reconstruction [B, in_channels, hw, hw].
Var decoder_forward(Var z_c, Var z_s, const BoundParams& dec, const ModelConfig& cfg);
// mu + sigma * eps; eps is expected to be a constant leaf.
Var reparameterize(Var mu, Var sigma, Var eps);

// Stacks single-channel images into [n, 1, h, w].
Tensor images_to_tensor(std::span<const Image* const> images);
// Stacks image pairs as two channels [n, 2, h, w].
Tensor pairs_to_tensor(std::span<const ImagePair* const> pairs);

// --- per-image convenience --------------------------------------------------

PosteriorPair encode(const Image& x, const ModelParams& params, const ModelConfig& cfg);
std::vector<PosteriorPair> encode_batch(std::span<const Image* const> images, const ModelParams& params,
                                        const ModelConfig& cfg);

struct Latents {
  std::vector<double> z_c, z_s;
};
Latents reparameterize(const PosteriorPair& post, std::span<const double> eps_c, std::span<const double> eps_s);

Image decode(std::span<const double> z_c, std::span<const double> z_s, const ModelParams& params,
             const ModelConfig& cfg);

}  // namespace pairdis
