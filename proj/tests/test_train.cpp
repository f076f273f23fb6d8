#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "pairdis/data.hpp"
#include "pairdis/error.hpp"
#include "pairdis/losses.hpp"
#include "pairdis/model.hpp"
#include "pairdis/train.hpp"

using namespace pairdis;

namespace {

ModelConfig small_model() {
  ModelConfig c;
  c.image_hw = 8;
  c.kernel = 1;
  c.conv_channels = {4, 6, 8};
  c.latent_common = 4;
  c.latent_specific = 2;
  return c;
}

TrainConfig small_train(std::size_t epochs = 2) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 8;
  t.seed = 3;
  t.finetune_epochs = 3;
  t.finetune_batch_size = 4;
  t.classifier_hidden = {6, 6};
  return t;
}

PairDataset small_pairs(std::size_t n_neg, std::size_t n_pos, std::uint64_t seed = 1) {
  AugmentSpec spec;
  spec.variant = Variant::R;
  return make_pairs(synth_glyphs(120, 4, 8), spec, n_neg, n_pos, seed);
}

double recon_mse(const PairDataset& ds, const ModelParams& p, const ModelConfig& c) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& pair : ds.pairs) {
    const PosteriorPair q = encode(pair.a, p, c);
    const Image out = decode(q.mu_c, q.mu_s, p, c);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
      const double d = out.pixels[i] - pair.a.pixels[i];
      s += d * d;
      ++n;
    }
  }
  return s / static_cast<double>(n);
}

}  // namespace

TEST(KlAnneal, Schedule) {
  TrainConfig t;
  t.epochs = 4;
  EXPECT_EQ(kl_anneal_weight(0, t), 0.0);
  EXPECT_EQ(kl_anneal_weight(2, t), 0.5);
  EXPECT_EQ(kl_anneal_weight(4, t), 1.0);
  t.anneal_epochs = 2;
  EXPECT_EQ(kl_anneal_weight(1, t), 0.5);
  EXPECT_EQ(kl_anneal_weight(3, t), 1.0);
  t.kl_anneal = false;
  EXPECT_EQ(kl_anneal_weight(0, t), 1.0);
}

TEST(TrainConfig, JsonRoundTripAndKeyPaths) {
  TrainConfig t = small_train();
  t.loss.distance = DistanceKind::jeffreys;
  EXPECT_EQ(to_json(train_config_from_json(to_json(t))), to_json(t));
  try {
    train_config_from_json({{"encoder_lr_scale_finetune", 2.0}});
    FAIL() << "expected config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config_error);
    EXPECT_NE(std::string(e.what()).find("encoder_lr_scale_finetune"), std::string::npos);
  }
  try {
    train_config_from_json({{"loss", {{"lambda1", "one"}}}});
    FAIL() << "expected config error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("train.loss.lambda1"), std::string::npos);
  }
  EXPECT_THROW(train_config_from_json({{"batch_size", 1}}), Error);
}

TEST(Pretrain, ZeroEpochsReturnsInit) {
  const ModelConfig c = small_model();
  const TrainConfig t = small_train(0);
  const PretrainResult r = pretrain(small_pairs(16, 0), c, t);
  EXPECT_EQ(r.params, init_params(c, derive_seed(t.seed, 1)));
  EXPECT_EQ(r.report.steps, 0u);
  EXPECT_FALSE(r.report.halted());
}

TEST(Pretrain, RejectsPositivePairs) {
  try {
    pretrain(small_pairs(10, 1), small_model(), small_train());
    FAIL() << "expected contract violation";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::contract_violation);
  }
}

TEST(Pretrain, StepsDropTinyLastBatch) {
  const ModelConfig c = small_model();
  TrainConfig t = small_train(1);
  EXPECT_EQ(pretrain(small_pairs(17, 0), c, t).report.steps, 2u);  // 8, 8, 1 dropped
  EXPECT_EQ(pretrain(small_pairs(18, 0), c, t).report.steps, 3u);  // 8, 8, 2
}

TEST(Pretrain, DeterministicAndLogged) {
  const ModelConfig c = small_model();
  const TrainConfig t = small_train(2);
  const PairDataset ds = small_pairs(24, 0);
  std::ostringstream log;
  TrainHooks h;
  h.log = &log;
  std::size_t epochs_seen = 0;
  h.on_epoch = [&](const EpochRecord&) { ++epochs_seen; };
  const PretrainResult a = pretrain(ds, c, t, std::nullopt, h);
  const PretrainResult b = pretrain(ds, c, t);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(deterministic_view(a.report), deterministic_view(b.report));
  EXPECT_EQ(epochs_seen, 2u);

  std::istringstream in(log.str());
  std::string line;
  std::size_t lines = 0;
  LossConfig lc = t.loss;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto& l = j.at("loss");
    lc.kl_weight = j.at("kl_weight").get<double>();
    const double rebuilt = l.at("vae_A").get<double>() + l.at("vae_B").get<double>() +
                           lc.lambda1 * l.at("sim").get<double>() +
                           lc.lambda2 * (l.at("act_sparsity").get<double>() + l.at("act_invmax").get<double>());
    EXPECT_NEAR(rebuilt, l.at("total").get<double>(), 1e-9 * std::max(1.0, std::abs(rebuilt)));
    ++lines;
  }
  EXPECT_EQ(lines, a.report.steps);

  TrainConfig other = t;
  other.seed = 4;
  EXPECT_NE(pretrain(ds, c, other).params, a.params);
}

TEST(Pretrain, NonFiniteInputHaltsWithReason) {
  PairDataset ds = small_pairs(16, 0);
  for (auto& p : ds.pairs) p.a.pixels[3] = std::numeric_limits<float>::quiet_NaN();
  const PretrainResult r = pretrain(ds, small_model(), small_train());
  EXPECT_TRUE(r.report.halted());
  EXPECT_EQ(r.report.steps, 0u);
  for (const auto& [k, v] : r.params.encoder) EXPECT_TRUE(v.all_finite()) << k;
}

TEST(Pretrain, ReducesReconstructionError) {
  ModelConfig c;
  c.conv_channels = {8, 16, 32};
  c.latent_common = 4;
  c.latent_specific = 2;
  TrainConfig t = small_train(5);
  t.batch_size = 20;
  AugmentSpec spec;
  spec.variant = Variant::R;
  const LabeledImageSet src = synth_glyphs(200, 4);
  const PairDataset train = make_pairs(src, spec, 200, 0, 1);
  const PairDataset held = make_pairs(src, spec, 30, 0, 99);
  const PretrainResult r = pretrain(train, c, t);
  ASSERT_FALSE(r.report.halted()) << r.report.halt_reason;
  const double before = recon_mse(held, init_params(c, derive_seed(t.seed, 1)), c);
  const double after = recon_mse(held, r.params, c);
  EXPECT_LT(after, 0.5 * before) << before << " -> " << after;
}

TEST(Classifier, ShapesAndProbabilities) {
  const ClassifierParams p = init_classifier(8, {5, 4}, 2);
  ASSERT_EQ(p.layers.size(), 6u);
  EXPECT_EQ(p.layers.at("fc1.w").shape(), (Shape{5, 8}));
  EXPECT_EQ(p.layers.at("fc3.w").shape(), (Shape{2, 4}));
  for (const char* b : {"fc1.b", "fc2.b", "fc3.b"})
    for (double v : p.layers.at(b).data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(init_classifier(8, {5, 4}, 2), p);

  Graph g;
  const BoundParams bound = bind_params(g, p.layers, false);
  Tensor x({3, 8});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(static_cast<double>(i));
  Var logits = classifier_forward(g.constant(x), bound);
  const Tensor& prob = change_probability(logits).value();
  const Tensor& l = logits.value();
  for (std::size_t r = 0; r < 3; ++r) {
    const double p1 = prob[r];
    const double z = std::exp(l[2 * r]) + std::exp(l[2 * r + 1]);
    EXPECT_NEAR(p1, std::exp(l[2 * r + 1]) / z, 1e-12);
    EXPECT_NEAR(p1 + std::exp(l[2 * r]) / z, 1.0, 1e-9);
    EXPECT_GE(p1, 0.0);
    EXPECT_LE(p1, 1.0);
  }
}

TEST(Finetune, BalancesAndKeepsDecoder) {
  const ModelConfig c = small_model();
  const TrainConfig t = small_train();
  const ModelParams p = init_params(c, 1);
  const PairDataset labeled = small_pairs(40, 6);
  const FinetuneResult r = finetune(p, labeled, c, t);
  EXPECT_EQ(r.report.metrics.at("n_pos").get<std::size_t>(), 6u);
  EXPECT_EQ(r.report.metrics.at("n_neg").get<std::size_t>(), 6u);
  EXPECT_EQ(r.params.decoder, p.decoder);
  EXPECT_NE(r.params.encoder, p.encoder);
  EXPECT_EQ(r.report.steps, 3u * 3u);  // 12 pairs in batches of 4
}

TEST(Finetune, ZeroScaleFreezesEncoder) {
  const ModelConfig c = small_model();
  TrainConfig t = small_train();
  t.encoder_lr_scale_finetune = 0.0;
  const ModelParams p = init_params(c, 1);
  const FinetuneResult r = finetune(p, small_pairs(20, 4), c, t);
  EXPECT_EQ(r.params, p);
  EXPECT_NE(r.classifier, init_classifier(2 * c.latent_common, t.classifier_hidden, derive_seed(t.seed, 4)));
}

TEST(Finetune, NeedsBothClasses) {
  const ModelConfig c = small_model();
  EXPECT_THROW(finetune(init_params(c, 1), small_pairs(10, 0), c, small_train()), Error);
}

TEST(Finetune, Deterministic) {
  const ModelConfig c = small_model();
  const TrainConfig t = small_train();
  const ModelParams p = init_params(c, 1);
  const PairDataset labeled = small_pairs(30, 5);
  const FinetuneResult a = finetune(p, labeled, c, t), b = finetune(p, labeled, c, t);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.classifier, b.classifier);
  EXPECT_EQ(deterministic_view(a.report), deterministic_view(b.report));
}

TEST(ConcatVae, TrainsTwoChannelModel) {
  ModelConfig c = small_model();
  c.in_channels = 2;
  const PretrainResult r = train_concat_vae(small_pairs(16, 0), c, small_train(1));
  EXPECT_FALSE(r.report.halted());
  EXPECT_EQ(r.report.steps, 2u);
  EXPECT_THROW(train_concat_vae(small_pairs(16, 0), small_model(), small_train(1)), Error);
}
