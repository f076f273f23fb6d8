#include "pairdis/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pairdis/config.hpp"
#include "pairdis/error.hpp"
#include "pairdis/random.hpp"

namespace pairdis {

ModelConfig::Ledger ModelConfig::ledger() const {
  const auto bad = [&](const std::string& why) {
    fail(ErrorKind::invalid_argument, "model spatial ledger for " + std::to_string(image_hw) + "x" +
                                          std::to_string(image_hw) + " with kernel " + std::to_string(kernel) +
                                          ": " + why);
  };
  if (kernel == 0 || kernel > image_hw) bad("kernel larger than image");
  Ledger l{};
  l.conv1 = image_hw - kernel + 1;
  if (l.conv1 % 2) bad("conv1 output " + std::to_string(l.conv1) + " is odd");
  l.pool1 = l.conv1 / 2;
  if (kernel > l.pool1) bad("kernel larger than pool1 output");
  l.conv2 = l.pool1 - kernel + 1;
  if (l.conv2 % 2) bad("conv2 output " + std::to_string(l.conv2) + " is odd");
  l.pool2 = l.conv2 / 2;
  if (l.pool2 == 0) bad("pool2 output is empty");
  return l;
}

void ModelConfig::validate() const {
  require(in_channels >= 1, ErrorKind::invalid_argument, "in_channels must be >= 1");
  require(latent_common >= 1 && latent_specific >= 1, ErrorKind::invalid_argument,
          "latent_common and latent_specific must be >= 1");
  for (std::size_t c : conv_channels) require(c >= 1, ErrorKind::invalid_argument, "conv channels must be >= 1");
  require(sigma_floor > 0.0, ErrorKind::invalid_argument, "sigma_floor must be positive");
  (void)ledger();
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"image_hw", cfg.image_hw},           {"in_channels", cfg.in_channels},
          {"conv_channels", cfg.conv_channels}, {"kernel", cfg.kernel},
          {"latent_common", cfg.latent_common}, {"latent_specific", cfg.latent_specific},
          {"sigma_floor", cfg.sigma_floor}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& path) {
  ConfigReader r(j, path);
  r.allow_only({"image_hw", "in_channels", "conv_channels", "kernel", "latent_common", "latent_specific", "sigma_floor"});
  ModelConfig cfg;
  cfg.image_hw = r.get<std::size_t>("image_hw", cfg.image_hw);
  cfg.in_channels = r.get<std::size_t>("in_channels", cfg.in_channels);
  if (r.has("conv_channels")) {
    const auto& cc = j.at("conv_channels");
    require(cc.is_array() && cc.size() == 3, ErrorKind::config_error,
            r.key_path("conv_channels") + ": expected array of 3 integers");
    for (std::size_t i = 0; i < 3; ++i) {
      cfg.conv_channels[i] =
          ConfigReader::convert<std::size_t>(cc[i], r.key_path("conv_channels") + "[" + std::to_string(i) + "]");
    }
  }
  cfg.kernel = r.get<std::size_t>("kernel", cfg.kernel);
  cfg.latent_common = r.get<std::size_t>("latent_common", cfg.latent_common);
  cfg.latent_specific = r.get<std::size_t>("latent_specific", cfg.latent_specific);
  cfg.sigma_floor = r.get<double>("sigma_floor", cfg.sigma_floor);
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config_error, path + ": " + e.what());
  }
  return cfg;
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto l = cfg.ledger();
  const std::size_t C = cfg.in_channels, C1 = cfg.conv_channels[0], C2 = cfg.conv_channels[1],
                    C3 = cfg.conv_channels[2], k = cfg.kernel, k3 = l.pool2;
  const std::size_t Mc = cfg.latent_common, Ms = cfg.latent_specific;
  Rng rng(derive_seed(seed, 0x1417));
  const auto he = [](std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); };
  const auto lecun = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };

  ModelParams p;
  auto& e = p.encoder;
  e["conv1.w"] = uniform_tensor({C1, C, k, k}, he(C * k * k), rng);
  e["conv1.b"] = Tensor({C1});
  e["conv2.w"] = uniform_tensor({C2, C1, k, k}, he(C1 * k * k), rng);
  e["conv2.b"] = Tensor({C2});
  e["conv3.w"] = uniform_tensor({C3, C2, k3, k3}, he(C2 * k3 * k3), rng);
  e["conv3.b"] = Tensor({C3});
  e["mu_c.w"] = uniform_tensor({Mc, C3}, lecun(C3), rng);
  e["mu_c.b"] = Tensor({Mc});
  e["logvar_c.w"] = Tensor({Mc, C3});  // sigma = 1 for every input at init
  e["logvar_c.b"] = Tensor({Mc});
  e["mu_s.w"] = uniform_tensor({Ms, C3}, lecun(C3), rng);
  e["mu_s.b"] = Tensor({Ms});
  e["logvar_s.w"] = Tensor({Ms, C3});
  e["logvar_s.b"] = Tensor({Ms});

  auto& d = p.decoder;
  d["fc.w"] = uniform_tensor({C3, Mc + Ms}, he(Mc + Ms), rng);
  d["fc.b"] = Tensor({C3});
  d["deconv3.w"] = uniform_tensor({C3, C2, k3, k3}, he(C3), rng);
  d["deconv3.b"] = Tensor({C2});
  d["deconv2.w"] = uniform_tensor({C2, C1, k, k}, he(C2 * k * k), rng);
  d["deconv2.b"] = Tensor({C1});
  d["deconv1.w"] = uniform_tensor({C1, C, k, k}, lecun(C1 * k * k), rng);
  d["deconv1.b"] = Tensor({C});
  return p;
}

std::size_t parameter_count(const ModelParams& params) {
  return count_parameters(params.encoder) + count_parameters(params.decoder);
}

NamedTensors flatten(const ModelParams& params) {
  NamedTensors out;
  for (const auto& [k, v] : params.encoder) out.emplace("encoder/" + k, v);
  for (const auto& [k, v] : params.decoder) out.emplace("decoder/" + k, v);
  return out;
}

ModelParams unflatten(const NamedTensors& tensors) {
  ModelParams p;
  for (const auto& [k, v] : tensors) {
    if (k.starts_with("encoder/")) {
      p.encoder.emplace(k.substr(8), v);
    } else if (k.starts_with("decoder/")) {
      p.decoder.emplace(k.substr(8), v);
    }
  }
  require(!p.encoder.empty(), ErrorKind::contract_violation, "checkpoint holds no encoder tensors");
  return p;
}

BoundParams bind_params(Graph& g, const NamedTensors& params, bool trainable) {
  BoundParams b;
  for (const auto& [k, v] : params) b.emplace(k, trainable ? g.variable(v) : g.constant(v));
  return b;
}

NamedTensors collect_grads(const Graph& g, const BoundParams& bound) {
  NamedTensors out;
  for (const auto& [k, v] : bound) out.emplace(k, g.grad(v));
  return out;
}

EncoderOut encoder_forward(Var x, const BoundParams& enc, const ModelConfig& cfg) {
  const auto& xs = x.shape();
  require(xs.size() == 4 && xs[1] == cfg.in_channels && xs[2] == cfg.image_hw && xs[3] == cfg.image_hw,
          ErrorKind::shape_error,
          "encoder input " + shape_str(xs) + " does not match model image " + std::to_string(cfg.in_channels) + "x" +
              std::to_string(cfg.image_hw) + "x" + std::to_string(cfg.image_hw));
  const std::size_t B = xs[0];
  Var h = maxpool2x2(relu(conv2d(x, enc.at("conv1.w"), enc.at("conv1.b"))));
  h = maxpool2x2(relu(conv2d(h, enc.at("conv2.w"), enc.at("conv2.b"))));
  h = relu(conv2d(h, enc.at("conv3.w"), enc.at("conv3.b")));
  h = reshape(h, {B, cfg.conv_channels[2]});

  const auto sigma_of = [&](Var logvar) { return clamp(exp(logvar * 0.5), cfg.sigma_floor, std::numeric_limits<double>::infinity()); };
  EncoderOut out;
  out.mu_c = dense(h, enc.at("mu_c.w"), enc.at("mu_c.b"));
  out.logvar_c = dense(h, enc.at("logvar_c.w"), enc.at("logvar_c.b"));
  out.sigma_c = sigma_of(out.logvar_c);
  out.mu_s = dense(h, enc.at("mu_s.w"), enc.at("mu_s.b"));
  out.logvar_s = dense(h, enc.at("logvar_s.w"), enc.at("logvar_s.b"));
  out.sigma_s = sigma_of(out.logvar_s);
  return out;
}

Var decoder_forward(Var z_c, Var z_s, const BoundParams& dec, const ModelConfig& cfg) {
  require(z_c.shape().size() == 2 && z_s.shape().size() == 2 && z_c.shape()[1] == cfg.latent_common &&
              z_s.shape()[1] == cfg.latent_specific && z_c.shape()[0] == z_s.shape()[0],
          ErrorKind::shape_error,
          "decoder latents " + shape_str(z_c.shape()) + " / " + shape_str(z_s.shape()) + " do not match (" +
              std::to_string(cfg.latent_common) + ", " + std::to_string(cfg.latent_specific) + ")");
  const std::size_t B = z_c.shape()[0];
  Var h = relu(dense(concat({z_c, z_s}, 1), dec.at("fc.w"), dec.at("fc.b")));
  h = reshape(h, {B, cfg.conv_channels[2], 1, 1});
  h = upsample2x(relu(conv2d_transpose(h, dec.at("deconv3.w"), dec.at("deconv3.b"))));
  h = upsample2x(relu(conv2d_transpose(h, dec.at("deconv2.w"), dec.at("deconv2.b"))));
  return sigmoid(conv2d_transpose(h, dec.at("deconv1.w"), dec.at("deconv1.b")));
}

Var reparameterize(Var mu, Var sigma, Var eps) {
  require(mu.shape() == eps.shape() && sigma.shape() == eps.shape(), ErrorKind::shape_error,
          "reparameterize: eps " + shape_str(eps.shape()) + " vs mu " + shape_str(mu.shape()));
  return mu + sigma * eps;
}

Tensor images_to_tensor(std::span<const Image* const> images) {
  require(!images.empty(), ErrorKind::invalid_argument, "empty image batch");
  const std::size_t h = images[0]->rows, w = images[0]->cols;
  Tensor t({images.size(), 1, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    require(images[n]->rows == h && images[n]->cols == w, ErrorKind::shape_error, "images differ in size");
    std::copy(images[n]->pixels.begin(), images[n]->pixels.end(), t.ptr() + n * h * w);
  }
  return t;
}

Tensor pairs_to_tensor(std::span<const ImagePair* const> pairs) {
  require(!pairs.empty(), ErrorKind::invalid_argument, "empty pair batch");
  const std::size_t h = pairs[0]->a.rows, w = pairs[0]->a.cols;
  Tensor t({pairs.size(), 2, h, w});
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    require(pairs[n]->a.rows == h && pairs[n]->b.rows == h && pairs[n]->a.cols == w && pairs[n]->b.cols == w,
            ErrorKind::shape_error, "pair images differ in size");
    std::copy(pairs[n]->a.pixels.begin(), pairs[n]->a.pixels.end(), t.ptr() + (2 * n) * h * w);
    std::copy(pairs[n]->b.pixels.begin(), pairs[n]->b.pixels.end(), t.ptr() + (2 * n + 1) * h * w);
  }
  return t;
}

std::vector<PosteriorPair> encode_batch(std::span<const Image* const> images, const ModelParams& params,
                                        const ModelConfig& cfg) {
  std::vector<PosteriorPair> out;
  if (images.empty()) return out;
  Graph g;
  const BoundParams enc = bind_params(g, params.encoder, false);
  const EncoderOut e = encoder_forward(g.constant(images_to_tensor(images)), enc, cfg);
  const auto row = [](Var v, std::size_t n) {
    const std::size_t m = v.shape()[1];
    const double* p = v.value().ptr() + n * m;
    return std::vector<double>(p, p + m);
  };
  out.reserve(images.size());
  for (std::size_t n = 0; n < images.size(); ++n) {
    out.push_back({row(e.mu_c, n), row(e.sigma_c, n), row(e.mu_s, n), row(e.sigma_s, n)});
  }
  return out;
}

PosteriorPair encode(const Image& x, const ModelParams& params, const ModelConfig& cfg) {
  const Image* p = &x;
  return encode_batch(std::span<const Image* const>(&p, 1), params, cfg).front();
}

Latents reparameterize(const PosteriorPair& post, std::span<const double> eps_c, std::span<const double> eps_s) {
  require(eps_c.size() == post.mu_c.size() && eps_s.size() == post.mu_s.size(), ErrorKind::shape_error,
          "reparameterize: eps dims (" + std::to_string(eps_c.size()) + ", " + std::to_string(eps_s.size()) +
              ") vs latent dims (" + std::to_string(post.mu_c.size()) + ", " + std::to_string(post.mu_s.size()) + ")");
  Latents z;
  for (std::size_t i = 0; i < eps_c.size(); ++i) z.z_c.push_back(post.mu_c[i] + post.sigma_c[i] * eps_c[i]);
  for (std::size_t i = 0; i < eps_s.size(); ++i) z.z_s.push_back(post.mu_s[i] + post.sigma_s[i] * eps_s[i]);
  return z;
}

Image decode(std::span<const double> z_c, std::span<const double> z_s, const ModelParams& params,
             const ModelConfig& cfg) {
  Graph g;
  const BoundParams dec = bind_params(g, params.decoder, false);
  Var zc = g.constant(Tensor({1, z_c.size()}, std::vector<double>(z_c.begin(), z_c.end())));
  Var zs = g.constant(Tensor({1, z_s.size()}, std::vector<double>(z_s.begin(), z_s.end())));
  const Tensor& out = decoder_forward(zc, zs, dec, cfg).value();
  require(cfg.in_channels == 1, ErrorKind::contract_violation, "decode() returns single-channel images only");
  Image img(cfg.image_hw, cfg.image_hw);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(out[i]);
  return img;
}

}  // namespace pairdis
