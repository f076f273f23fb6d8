#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "pairdis/data.hpp"
#include "pairdis/error.hpp"
#include "pairdis/gradcheck.hpp"
#include "pairdis/losses.hpp"
#include "pairdis/model.hpp"
#include "pairdis/train.hpp"

using namespace pairdis;

namespace {

// 8 -> 8 -> 4 -> 4 -> 2 -> 1 with 1x1 kernels.
ModelConfig small_config() {
  ModelConfig c;
  c.image_hw = 8;
  c.kernel = 1;
  c.conv_channels = {2, 3, 4};
  c.latent_common = 4;
  c.latent_specific = 2;
  return c;
}

Image random_image(std::size_t hw, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image im(hw, hw);
  for (float& p : im.pixels) p = u(rng);
  return im;
}

std::size_t packed_size(const ModelParams& p) { return count_parameters(p.encoder) + count_parameters(p.decoder); }

Tensor pack(const ModelParams& p) {
  std::vector<double> v;
  for (const auto* group : {&p.encoder, &p.decoder})
    for (const auto& [k, t] : *group) v.insert(v.end(), t.data().begin(), t.data().end());
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

// Rebuilds named parameter Vars as slices of the single leaf.
BoundParams unpack(Var leaf, const NamedTensors& like, std::size_t& offset) {
  BoundParams b;
  for (const auto& [k, t] : like) {
    b.emplace(k, reshape(slice(leaf, 0, offset, offset + t.size()), t.shape()));
    offset += t.size();
  }
  return b;
}

}  // namespace

TEST(ModelConfig, LedgerForPaperConfig) {
  const ModelConfig c;
  const auto l = c.ledger();
  EXPECT_EQ(l.conv1, 24u);
  EXPECT_EQ(l.pool1, 12u);
  EXPECT_EQ(l.conv2, 8u);
  EXPECT_EQ(l.pool2, 4u);
  EXPECT_EQ(c.latent_common, 20u);
  EXPECT_EQ(c.latent_specific, 10u);
}

TEST(ModelConfig, InconsistentLedgerRejected) {
  ModelConfig c;
  c.image_hw = 27;
  EXPECT_THROW(c.validate(), Error);
  ModelConfig z;
  z.latent_specific = 0;
  EXPECT_THROW(z.validate(), Error);
  EXPECT_EQ(to_json(model_config_from_json(to_json(small_config()))), to_json(small_config()));
}

TEST(InitParams, DeterministicWithZeroBiases) {
  const ModelConfig c;
  const ModelParams a = init_params(c, 5), b = init_params(c, 5);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, init_params(c, 6));
  for (const auto* group : {&a.encoder, &a.decoder})
    for (const auto& [k, t] : *group)
      if (k.ends_with(".b")) {
        for (double v : t.data()) EXPECT_EQ(v, 0.0) << k;
      }
}

TEST(InitParams, OneSharedCopyWithFixedCount) {
  const ModelConfig c;
  const ModelParams p = init_params(c, 1);
  const std::size_t n = parameter_count(p);
  EXPECT_EQ(n, packed_size(p));
  EXPECT_EQ(n, parameter_count(init_params(c, 2)));
  EXPECT_GT(n, 0u);
  EXPECT_EQ(unflatten(flatten(p)), p);
}

TEST(Encode, PaperShapesAndPositiveSigma) {
  const ModelConfig c;
  const ModelParams p = init_params(c, 3);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const PosteriorPair q = encode(random_image(28, s), p, c);
    ASSERT_EQ(q.mu_c.size(), 20u);
    ASSERT_EQ(q.mu_s.size(), 10u);
    ASSERT_EQ(q.sigma_c.size(), 20u);
    ASSERT_EQ(q.sigma_s.size(), 10u);
    for (double v : q.sigma_c) {
      EXPECT_GE(v, c.sigma_floor);
      EXPECT_LT(std::abs(2.0 * std::log(v)), 0.5);  // |logvar| at init
    }
    for (double v : q.sigma_s) {
      EXPECT_GE(v, c.sigma_floor);
      EXPECT_LT(std::abs(2.0 * std::log(v)), 0.5);
    }
  }
}

TEST(Encode, DeterministicAndShapeChecked) {
  const ModelConfig c = small_config();
  const ModelParams p = init_params(c, 3);
  const Image x = random_image(8, 1);
  const PosteriorPair a = encode(x, p, c), b = encode(x, p, c);
  EXPECT_EQ(a.mu_c, b.mu_c);
  EXPECT_EQ(a.sigma_s, b.sigma_s);
  try {
    encode(random_image(9, 1), p, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape_error);
  }
}

TEST(Encode, BranchSymmetry) {
  const ModelConfig c = small_config();
  const ModelParams p = init_params(c, 4);
  const Image xa = random_image(8, 10), xb = random_image(8, 11);
  const Image* ab[] = {&xa, &xb};
  const Image* ba[] = {&xb, &xa};
  const auto fwd = encode_batch(ab, p, c);
  const auto rev = encode_batch(ba, p, c);
  EXPECT_EQ(fwd[0].mu_c, rev[1].mu_c);
  EXPECT_EQ(fwd[1].mu_c, rev[0].mu_c);
  EXPECT_EQ(fwd[0].sigma_s, rev[1].sigma_s);
  EXPECT_EQ(fwd[1].mu_s, rev[0].mu_s);
}

TEST(Reparameterize, Examples) {
  const PosteriorPair q{{1.0, 2.0}, {0.5, 2.0}, {0.0}, {1.0}};
  const Latents z = reparameterize(q, std::vector<double>{2.0, -1.0}, std::vector<double>{std::exp(1.0)});
  EXPECT_EQ(z.z_c, (std::vector<double>{2.0, 0.0}));
  EXPECT_EQ(z.z_s, (std::vector<double>{std::exp(1.0)}));
  const Latents z0 = reparameterize(q, std::vector<double>{0.0, 0.0}, std::vector<double>{0.0});
  EXPECT_EQ(z0.z_c, q.mu_c);
  EXPECT_EQ(z0.z_s, q.mu_s);
  EXPECT_THROW(reparameterize(q, std::vector<double>{0.0}, std::vector<double>{0.0}), Error);
}

TEST(Reparameterize, GradientReachesMuAndSigmaNotEps) {
  Graph g;
  Var mu = g.variable(Tensor({1, 2}, {1.0, 2.0}));
  Var sigma = g.variable(Tensor({1, 2}, {0.5, 2.0}));
  Var eps = g.constant(Tensor({1, 2}, {2.0, -1.0}));
  g.backward(sum(reparameterize(mu, sigma, eps)));
  EXPECT_EQ(g.grad(mu), Tensor({1, 2}, {1.0, 1.0}));
  EXPECT_EQ(g.grad(sigma), Tensor({1, 2}, {2.0, -1.0}));
  EXPECT_EQ(g.grad(eps), Tensor({1, 2}, {0.0, 0.0}));
}

TEST(Decode, ShapeAndRange) {
  for (const ModelConfig& c : {ModelConfig{}, small_config()}) {
    const ModelParams p = init_params(c, 7);
    const PosteriorPair q = encode(random_image(c.image_hw, 2), p, c);
    const Image out = decode(q.mu_c, q.mu_s, p, c);
    EXPECT_EQ(out.rows, c.image_hw);
    EXPECT_EQ(out.cols, c.image_hw);
    for (float v : out.pixels) {
      EXPECT_GT(v, 0.0f);
      EXPECT_LT(v, 1.0f);
    }
  }
}

TEST(ModelGradients, EncoderDecoderMatchFiniteDifferences) {
  const ModelConfig c = small_config();
  const ModelParams p0 = init_params(c, 9);
  Tensor x({2, 1, 8, 8});
  {
    const Image a = random_image(8, 20), b = random_image(8, 21);
    for (std::size_t i = 0; i < 64; ++i) {
      x[i] = a.pixels[i];
      x[64 + i] = b.pixels[i];
    }
  }
  Rng rng(5);
  std::normal_distribution<double> n01;
  Tensor ec({2, 4}), es({2, 2});
  for (std::size_t i = 0; i < ec.size(); ++i) ec[i] = n01(rng);
  for (std::size_t i = 0; i < es.size(); ++i) es[i] = n01(rng);

  auto f = [&](Graph& g, Var leaf) {
    std::size_t off = 0;
    const BoundParams enc = unpack(leaf, p0.encoder, off);
    const BoundParams dec = unpack(leaf, p0.decoder, off);
    Var xv = g.constant(x);
    const EncoderOut e = encoder_forward(xv, enc, c);
    Var zc = reparameterize(e.mu_c, e.sigma_c, g.constant(ec));
    Var zs = reparameterize(e.mu_s, e.sigma_s, g.constant(es));
    return vae_loss(xv, decoder_forward(zc, zs, dec, c), e, 1.0).total;
  };
  const GradCheckReport r = finite_diff_check(f, pack(p0));
  EXPECT_LT(r.max_rel_err, 1e-3) << "worst " << r.worst_index;
}

TEST(ModelGradients, BatchedForwardMatchesPerImage) {
  const ModelConfig c = small_config();
  const ModelParams p = init_params(c, 2);
  const Image a = random_image(8, 1), b = random_image(8, 2);
  const Image* both[] = {&a, &b};
  const auto batch = encode_batch(both, p, c);
  const PosteriorPair single = encode(b, p, c);
  for (std::size_t k = 0; k < single.mu_c.size(); ++k) EXPECT_NEAR(batch[1].mu_c[k], single.mu_c[k], 1e-12);
}
