#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "pairdis/data.hpp"
#include "pairdis/error.hpp"
#include "pairdis/eval.hpp"
#include "pairdis/model.hpp"
#include "pairdis/train.hpp"
#include "pairdis/viz.hpp"

using namespace pairdis;
namespace fs = std::filesystem;

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

TrainConfig small_train() {
  TrainConfig t;
  t.epochs = 1;
  t.batch_size = 8;
  t.seed = 3;
  t.finetune_epochs = 2;
  t.finetune_batch_size = 4;
  t.classifier_hidden = {6, 6};
  return t;
}

PipelineData small_data() {
  AugmentSpec spec;
  spec.variant = Variant::R;
  const LabeledImageSet pool = synth_glyphs(100, 4, 8);
  PipelineData d;
  d.pretrain = make_pairs(pool, spec, 24, 0, 1);
  d.finetune = d.pretrain;
  const PairDataset pos = make_pairs(pool, spec, 0, 4, 2);
  d.finetune.pairs.insert(d.finetune.pairs.end(), pos.pairs.begin(), pos.pairs.end());
  d.finetune.labels.insert(d.finetune.labels.end(), pos.labels.begin(), pos.labels.end());
  d.finetune.meta.insert(d.finetune.meta.end(), pos.meta.begin(), pos.meta.end());
  d.test = make_pairs(pool, spec, 10, 10, 3);
  return d;
}

// Exhaustive oracle: every 2-partition of the values.
double brute_force_cost(const std::vector<double>& v) {
  const std::size_t n = v.size();
  double best = INFINITY;
  for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << n); ++mask) {
    double s[2] = {0, 0}, ss[2] = {0, 0};
    std::size_t c[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      const int k = (mask >> i) & 1;
      s[k] += v[i];
      ss[k] += v[i] * v[i];
      ++c[k];
    }
    double cost = 0;
    for (int k = 0; k < 2; ++k) cost += ss[k] - s[k] * s[k] / static_cast<double>(c[k]);
    best = std::min(best, cost);
  }
  return best;
}

double partition_cost(const std::vector<double>& v, const std::vector<int>& labels) {
  double s[2] = {0, 0}, ss[2] = {0, 0};
  std::size_t c[2] = {0, 0};
  for (std::size_t i = 0; i < v.size(); ++i) {
    s[labels[i]] += v[i];
    ss[labels[i]] += v[i] * v[i];
    ++c[labels[i]];
  }
  double cost = 0;
  for (int k = 0; k < 2; ++k)
    if (c[k]) cost += ss[k] - s[k] * s[k] / static_cast<double>(c[k]);
  return cost;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pairdis_test_eval_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(ScorePredictions, ConfusionCounts) {
  const EvalResult r = score_predictions({1, 1, 0, 0, 1}, {1, 0, 0, 1, 1});
  EXPECT_EQ(r.tp, 2u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.tn, 1u);
  EXPECT_EQ(r.fn, 1u);
  EXPECT_EQ(r.n_pos, 3u);
  EXPECT_EQ(r.n_neg, 2u);
  EXPECT_DOUBLE_EQ(r.accuracy, 3.0 / 5.0);
  EXPECT_EQ(r.total(), 5u);
  EXPECT_THROW(score_predictions({1}, {1, 0}), Error);
  EXPECT_THROW(score_predictions({}, {}), Error);
}

TEST(MeanStd, SampleStd) {
  const MeanStd m = mean_std({2, 4, 4, 4, 5, 5, 7, 9});
  EXPECT_DOUBLE_EQ(m.mean, 5.0);
  EXPECT_NEAR(m.std, std::sqrt(32.0 / 7.0), 1e-12);
  EXPECT_EQ(m.n, 8u);
  EXPECT_EQ(mean_std({3.0}).std, 0.0);
  EXPECT_EQ(mean_std({}).n, 0u);
}

TEST(TwoMeans, SmallExample) {
  const TwoMeans t = two_means_1d({5.0, 0.1, 5.1, 0.1});
  EXPECT_EQ(t.labels, (std::vector<int>{1, 0, 1, 0}));
  EXPECT_DOUBLE_EQ(t.threshold, 0.5 * (0.1 + 5.0));
  EXPECT_NEAR(t.centroid_low, 0.1, 1e-12);
  EXPECT_NEAR(t.centroid_high, 5.05, 1e-12);
  EXPECT_NEAR(t.cost, 0.005, 1e-12);
}

TEST(TwoMeans, DegenerateInputs) {
  for (const std::vector<double>& v : {std::vector<double>{2.0, 2.0, 2.0}, std::vector<double>{1.0},
                                       std::vector<double>{}}) {
    try {
      two_means_1d(v);
      FAIL() << "expected degenerate clustering";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::degenerate_clustering);
    }
  }
}

TEST(TwoMeans, MatchesBruteForce) {
  Rng rng(17);
  std::uniform_int_distribution<std::size_t> size(2, 12);
  std::uniform_int_distribution<int> coarse(0, 5);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(size(rng));
    // every third trial uses ties
    for (double& x : v) x = trial % 3 == 0 ? coarse(rng) : n01(rng);
    if (*std::min_element(v.begin(), v.end()) == *std::max_element(v.begin(), v.end())) v[0] += 1.0;
    const TwoMeans t = two_means_1d(v);
    const double oracle = brute_force_cost(v);
    EXPECT_NEAR(t.cost, oracle, 1e-9 * std::max(1.0, oracle)) << "trial " << trial;
    EXPECT_NEAR(partition_cost(v, t.labels), oracle, 1e-9 * std::max(1.0, oracle)) << "trial " << trial;
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(t.labels[i], v[i] > t.threshold ? 1 : 0);
  }
}

TEST(Evaluate, DoesNotMutateParamsAndIsRepeatable) {
  const ModelConfig c = small_model();
  const ModelParams p = init_params(c, 1);
  const ClassifierParams clf = init_classifier(2 * c.latent_common, {6, 6}, 2);
  const ModelParams p_copy = p;
  const ClassifierParams clf_copy = clf;
  const PipelineData d = small_data();
  const EvalResult a = evaluate(d.test, p, clf, c);
  const EvalResult b = evaluate(d.test, p, clf, c);
  EXPECT_EQ(p, p_copy);
  EXPECT_EQ(clf, clf_copy);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(a.total(), d.test.size());

  const auto probs = classify_pairs(d.test, p, clf, c, 3);
  ASSERT_EQ(probs.size(), d.test.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    EXPECT_GE(probs[i], 0.0);
    EXPECT_LE(probs[i], 1.0);
    EXPECT_NEAR(probs[i], classify_pair(d.test.pairs[i].a, d.test.pairs[i].b, p, clf, c), 1e-12);
  }
  EXPECT_THROW(evaluate(PairDataset{}, p, clf, c), Error);
}

TEST(Evaluate, UntrainedClassifierIsNearChance) {
  const ModelConfig c = small_model();
  AugmentSpec spec;
  spec.variant = Variant::R;
  const PairDataset test = make_pairs(synth_glyphs(200, 9, 8), spec, 500, 500, 4);
  const EvalResult r = evaluate(test, init_params(c, 5), init_classifier(2 * c.latent_common, {6, 6}, 6), c);
  EXPECT_NEAR(r.accuracy, 0.5, 0.05);
}

TEST(KmeansDetect, EqualDistancesAreDegenerate) {
  const ModelConfig c = small_model();
  const LabeledImageSet pool = synth_glyphs(10, 1, 8);
  PairDataset same;
  for (std::size_t i = 0; i < 3; ++i) {
    same.pairs.push_back({pool.images[i], pool.images[i]});
    same.labels.push_back(0);
  }
  try {
    kmeans_detect(same, init_params(c, 1), c);
    FAIL() << "expected degenerate clustering";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_clustering);
  }
}

TEST(KmeansDetect, ScoresAreCommonDistances) {
  const ModelConfig c = small_model();
  const ModelParams p = init_params(c, 2);
  const PipelineData d = small_data();
  const DetectResult r = kmeans_detect(d.test, p, c);
  const auto dist = common_distances(d.test, p, c, 7);
  ASSERT_EQ(r.scores.size(), dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) EXPECT_NEAR(r.scores[i], dist[i], 1e-12);
  EXPECT_EQ(r.eval.total(), d.test.size());
}

TEST(VaeRec, FiniteAndDeterministic) {
  ModelConfig c = small_model();
  c.in_channels = 2;
  const ModelParams p = init_params(c, 3);
  const PipelineData d = small_data();
  const auto a = vae_rec_score(d.test, p, c);
  EXPECT_EQ(a, vae_rec_score(d.test, p, c));
  const auto chunked = vae_rec_score(d.test, p, c, 5);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], chunked[i], 1e-9);
  for (double v : a) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(v, 0.0);
  }
  EXPECT_THROW(vae_rec_score(d.test, init_params(small_model(), 3), small_model()), Error);
}

TEST(Ablation, GridCardinality) {
  const TrainConfig base = small_train();
  const auto dist = make_grid(AblationAxis::distance_kind,
                              {"modified_l2", "l2", "l1", "cosine", "mmd", "jeffreys"}, base);
  ASSERT_EQ(dist.size(), 6u);
  EXPECT_EQ(dist[5].cfg.loss.distance, DistanceKind::jeffreys);
  const auto sp = make_grid(AblationAxis::sparsity_s,
                            {"0.1", "0.3", "0.5", "0.7", "0.9", "0.1/off", "0.3/off", "0.5/off", "0.7/off", "0.9/off"},
                            base);
  ASSERT_EQ(sp.size(), 10u);
  EXPECT_DOUBLE_EQ(sp[1].cfg.loss.sparsity_s, 0.3);
  EXPECT_TRUE(sp[1].cfg.loss.use_invmax);
  EXPECT_FALSE(sp[7].cfg.loss.use_invmax);
  EXPECT_DOUBLE_EQ(sp[7].cfg.loss.sparsity_s, 0.5);
  const auto l1 = make_grid(AblationAxis::lambda1, {"0", "1"}, base);
  EXPECT_EQ(l1[0].cfg.loss.lambda1, 0.0);
  EXPECT_EQ(make_grid(AblationAxis::invmax_on, {"off"}, base)[0].cfg.loss.use_invmax, false);

  EXPECT_THROW(make_grid(AblationAxis::lambda1, {"one"}, base), Error);
  EXPECT_THROW(make_grid(AblationAxis::invmax_on, {"yes"}, base), Error);
  EXPECT_THROW(make_grid(AblationAxis::distance_kind, {"manhattan"}, base), Error);
  EXPECT_THROW(make_grid(AblationAxis::distance_kind, {}, base), Error);
  EXPECT_THROW(parse_axis("dropout"), Error);
  EXPECT_EQ(parse_axis("sparsity_s"), AblationAxis::sparsity_s);
}

TEST(Ablation, SinglePointMatchesDirectRun) {
  const ModelConfig c = small_model();
  const TrainConfig base = small_train();
  const PipelineData d = small_data();
  const auto grid = make_grid(AblationAxis::lambda1, {"1"}, base);
  std::size_t calls = 0;
  const AblationTable t = run_ablation("lambda1", grid, d, c, 1, [&](const std::string&, std::size_t, double) { ++calls; });
  TrainConfig direct = base;
  direct.seed = derive_seed(base.seed, 0);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].accuracies, std::vector<double>{run_pipeline(d, c, direct).supervised.accuracy});
  EXPECT_EQ(calls, 1u);
  EXPECT_EQ(t.rows[0].summary.n, 1u);

  const fs::path dir = scratch_dir("ablation");
  write_ablation_csv(t, dir / "a.csv");
  std::ifstream in(dir / "a.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "setting,repeat,accuracy");
  EXPECT_EQ(row.rfind("1,0,", 0), 0u);
  EXPECT_EQ(to_json(t).at("rows").size(), 1u);
  EXPECT_THROW(run_ablation("lambda1", grid, d, c, 0), Error);
}

TEST(Interpolate, EndpointsAreMeanReconstructions) {
  const ModelConfig c = small_model();
  const ModelParams p = init_params(c, 4);
  const LabeledImageSet pool = synth_glyphs(10, 2, 8);
  const Image& a = pool.images[0];
  const Image& b = pool.images[1];
  const PosteriorPair qa = encode(a, p, c), qb = encode(b, p, c);

  const auto common = interpolate(a, b, LatentPart::common, 2, p, c);
  ASSERT_EQ(common.size(), 2u);
  EXPECT_EQ(common[0].pixels, decode(qa.mu_c, qa.mu_s, p, c).pixels);
  EXPECT_EQ(common[1].pixels, decode(qb.mu_c, qa.mu_s, p, c).pixels);

  const auto specific = interpolate(a, b, LatentPart::specific, 3, p, c);
  ASSERT_EQ(specific.size(), 3u);
  std::vector<double> mid(qa.mu_s.size());
  for (std::size_t k = 0; k < mid.size(); ++k) mid[k] = 0.5 * qa.mu_s[k] + 0.5 * qb.mu_s[k];
  const Image expect = decode(qa.mu_c, mid, p, c);
  for (std::size_t i = 0; i < expect.pixels.size(); ++i) EXPECT_NEAR(specific[1].pixels[i], expect.pixels[i], 1e-6);
  EXPECT_EQ(specific[2].pixels, decode(qa.mu_c, qb.mu_s, p, c).pixels);

  EXPECT_THROW(interpolate(a, b, LatentPart::common, 1, p, c), Error);
  const Image grid = interpolate_grid(a, b, LatentPart::common, 4, p, c);
  EXPECT_EQ(grid.rows, 8u);
  EXPECT_EQ(grid.cols, 32u);
  EXPECT_EQ(parse_latent_part("specific"), LatentPart::specific);
  EXPECT_THROW(parse_latent_part("both"), Error);
}

TEST(TileRow, RejectsMixedSizes) {
  EXPECT_THROW(tile_row({Image(8, 8), Image(9, 9)}), Error);
}

TEST(ImageFiles, PngAndPgm) {
  Image img(2, 3);
  img.pixels = {0.0f, 0.5f, 1.0f, 0.25f, -1.0f, 2.0f};
  const fs::path dir = scratch_dir("images");
  write_pgm(dir / "x.pgm", img);
  std::ifstream in(dir / "x.pgm", std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  const std::string body = bytes.substr(header.size());
  const unsigned char expect[] = {0, 128, 255, 64, 0, 255};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(static_cast<unsigned char>(body[i]), expect[i]) << i;

  write_png(dir / "x.png", img);
  std::ifstream png(dir / "x.png", std::ios::binary);
  char sig[8] = {};
  png.read(sig, 8);
  EXPECT_EQ(std::string(sig, 8), std::string("\x89PNG\r\n\x1a\n", 8));
}

TEST(Pca, AxisAlignedData) {
  // spread 3 along x, 1 along y
  const std::vector<std::vector<double>> rows = {{3, 0}, {-3, 0}, {0, 1}, {0, -1}};
  const Pca2 p = pca_2d(rows);
  EXPECT_NEAR(p.variance[0], 18.0 / 3.0, 1e-12);
  EXPECT_NEAR(p.variance[1], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(std::abs(p.axes[0][0]), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(p.axes[1][1]), 1.0, 1e-12);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_NEAR(std::abs(p.coords[i][0]), std::abs(rows[i][0]), 1e-12);
    EXPECT_NEAR(std::abs(p.coords[i][1]), std::abs(rows[i][1]), 1e-12);
  }
}

TEST(Pca, VarianceOrderAndValidation) {
  Rng rng(3);
  std::normal_distribution<double> n01;
  std::vector<std::vector<double>> rows(50, std::vector<double>(5));
  for (auto& r : rows)
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = n01(rng) * static_cast<double>(k + 1);
  const Pca2 p = pca_2d(rows);
  EXPECT_GE(p.variance[0], p.variance[1]);
  EXPECT_GT(p.variance[1], 0.0);
  double dot = 0;
  for (std::size_t k = 0; k < 5; ++k) dot += p.axes[0][k] * p.axes[1][k];
  EXPECT_NEAR(dot, 0.0, 1e-10);
  EXPECT_THROW(pca_2d({{1, 2}, {3, 4}}), Error);
  EXPECT_THROW(pca_2d({{1}, {2}, {3}}), Error);
}

TEST(CentroidProbe, SeparableClusters) {
  std::vector<std::array<double, 2>> coords;
  std::vector<int> labels;
  for (int i = 0; i < 20; ++i) {
    const int k = i % 4 < 2 ? 0 : 1;
    coords.push_back({k * 10.0 + 0.1 * i, 0.0});
    labels.push_back(k);
  }
  EXPECT_DOUBLE_EQ(centroid_probe_accuracy(coords, labels), 1.0);
}

TEST(ProjectFeatures, WritesCsvFiles) {
  const ModelConfig c = small_model();
  const LabeledImageSet pool = synth_glyphs(20, 5, 8);
  const fs::path dir = scratch_dir("project");
  const Projection pr = project_features(pool, init_params(c, 1), c, dir);
  EXPECT_EQ(pr.posts.size(), 20u);
  EXPECT_EQ(pr.common.coords.size(), 20u);
  for (const char* f : {"features.csv", "pca_common.csv", "pca_specific.csv"}) {
    std::ifstream in(dir / f);
    ASSERT_TRUE(in) << f;
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    EXPECT_EQ(lines, 21u) << f;
  }
  std::ifstream feat(dir / "features.csv");
  std::string header;
  std::getline(feat, header);
  EXPECT_EQ(header.rfind("id,class,", 0), 0u);
}
