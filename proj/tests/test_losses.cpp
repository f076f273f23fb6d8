#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "pairdis/error.hpp"
#include "pairdis/gradcheck.hpp"
#include "pairdis/losses.hpp"
#include "pairdis/random.hpp"

using namespace pairdis;

namespace {

Tensor uniform(Shape shape, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

PosteriorPair post(std::vector<double> mu_c, std::vector<double> sigma_c) {
  return PosteriorPair{std::move(mu_c), std::move(sigma_c), {0.0}, {1.0}};
}

bool rel_close(double a, double b, double tol = 1e-9) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-300}) || a == b;
}

}  // namespace

TEST(KlStdNormal, ClosedForms) {
  const std::vector<double> zero{0.0, 0.0}, one{1.0, 1.0};
  EXPECT_EQ(kl_std_normal(zero, one), 0.0);
  EXPECT_TRUE(rel_close(kl_std_normal(std::vector<double>{1.0}, std::vector<double>{1.0}), 0.5));
  const double e = std::numbers::e;
  EXPECT_TRUE(rel_close(kl_std_normal(std::vector<double>{0.0}, std::vector<double>{e}), 0.5 * (e * e - 3.0)));
  EXPECT_NEAR(0.5 * (e * e - 3.0), 2.19453, 1e-5);
}

TEST(KlStdNormal, NonPositiveSigmaRejected) {
  EXPECT_THROW(kl_std_normal(std::vector<double>{0.0}, std::vector<double>{0.0}), Error);
}

TEST(VaeLoss, Examples) {
  Image x(2, 2, 1.0f), xh(2, 2, 0.5f);
  PosteriorPair prior{{0.0, 0.0}, {1.0, 1.0}, {0.0}, {1.0}};
  EXPECT_EQ(vae_loss(x, x, prior, 1.0), 0.0);
  EXPECT_TRUE(rel_close(vae_loss(x, xh, prior, 1.0), 0.5));
  PosteriorPair off{{1.0, 0.0}, {1.0, 1.0}, {0.0}, {2.0}};
  EXPECT_TRUE(rel_close(vae_loss(x, xh, off, 0.0), 0.5));
  EXPECT_GT(vae_loss(x, xh, off, 1.0), 0.5);
}

TEST(ModifiedL2, Examples) {
  EXPECT_EQ(sim_modified_l2(post({0.3, -1}, {0.5, 2}), post({0.3, -1}, {0.5, 2})), 0.0);
  EXPECT_TRUE(rel_close(sim_modified_l2(post({1, 0}, {1, 1}), post({0, 0}, {1, 1})), 0.5));
  EXPECT_TRUE(rel_close(sim_modified_l2(post({1, 0}, {2, 1}), post({0, 0}, {2, 1})), 0.125));
}

TEST(ModifiedL2, DimMismatch) {
  try {
    sim_modified_l2(post({1, 0}, {1, 1}), post({0}, {1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape_error);
  }
}

TEST(SimDistance, ClosedForms) {
  EXPECT_TRUE(rel_close(sim_distance(post({0}, {1}), post({1}, {1}), DistanceKind::jeffreys), 1.0));
  EXPECT_TRUE(rel_close(sim_distance(post({1, 0}, {1, 1}), post({0, 1}, {1, 1}), DistanceKind::cosine), 1.0));
  EXPECT_TRUE(rel_close(sim_distance(post({1, -3}, {1, 1}), post({0, 1}, {1, 1}), DistanceKind::l2), 8.5));
  EXPECT_TRUE(rel_close(sim_distance(post({1, -3}, {1, 1}), post({0, 1}, {1, 1}), DistanceKind::l1), 2.5));
}

TEST(SimDistance, JeffreysMatchesTwoKls) {
  // KL(N(a, sa^2) || N(b, sb^2)) = ln(sb/sa) + (sa^2 + (a-b)^2) / (2 sb^2) - 1/2
  auto kl = [](double a, double sa, double b, double sb) {
    return std::log(sb / sa) + (sa * sa + (a - b) * (a - b)) / (2 * sb * sb) - 0.5;
  };
  const double want = kl(0.3, 0.7, -1.1, 1.9) + kl(-1.1, 1.9, 0.3, 0.7) + kl(2, 0.2, 2.5, 0.4) + kl(2.5, 0.4, 2, 0.2);
  EXPECT_TRUE(rel_close(sim_distance(post({0.3, 2}, {0.7, 0.2}), post({-1.1, 2.5}, {1.9, 0.4}), DistanceKind::jeffreys),
                        want));
}

TEST(SimDistance, MmdMatchesDirectFormula) {
  std::vector<PosteriorPair> a = {post({0, 1}, {1, 1}), post({1, 1}, {1, 1}), post({2, 0}, {1, 1})};
  std::vector<PosteriorPair> b = {post({0, 0}, {1, 1}), post({3, 1}, {1, 1}), post({1, 2}, {1, 1})};
  // pooled pairwise distances of the six points, median -> bandwidth
  std::vector<std::vector<double>> pts;
  for (auto& p : a) pts.push_back(p.mu_c);
  for (auto& p : b) pts.push_back(p.mu_c);
  auto d2 = [](const std::vector<double>& u, const std::vector<double>& v) {
    return (u[0] - v[0]) * (u[0] - v[0]) + (u[1] - v[1]) * (u[1] - v[1]);
  };
  std::vector<double> ds;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i + 1; j < 6; ++j) ds.push_back(std::sqrt(d2(pts[i], pts[j])));
  std::sort(ds.begin(), ds.end());
  const double h = 0.5 * (ds[6] + ds[7]);
  auto k = [&](const std::vector<double>& u, const std::vector<double>& v) { return std::exp(-d2(u, v) / (2 * h * h)); };
  double xx = 0, yy = 0, xy = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      xx += k(a[i].mu_c, a[j].mu_c);
      yy += k(b[i].mu_c, b[j].mu_c);
      xy += k(a[i].mu_c, b[j].mu_c);
    }
  const double want = (xx + yy - 2 * xy) / 6.0;
  EXPECT_TRUE(rel_close(sim_distance(a, b, DistanceKind::mmd), std::max(want, 0.0), 1e-12));
}

TEST(SimDistance, MmdNeedsTwoSamples) {
  try {
    sim_distance(post({0}, {1}), post({1}, {1}), DistanceKind::mmd);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_argument);
  }
}

TEST(SimDistance, IdentitySymmetryNonNegativity) {
  Rng rng(5);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> s(0.2, 2.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<PosteriorPair> a(4), b(4);
    for (std::size_t i = 0; i < 4; ++i) {
      for (int d = 0; d < 3; ++d) {
        a[i].mu_c.push_back(n(rng));
        a[i].sigma_c.push_back(s(rng));
        b[i].mu_c.push_back(n(rng));
        b[i].sigma_c.push_back(s(rng));
      }
    }
    for (DistanceKind kind : kAllDistances) {
      const double ab = sim_distance(a, b, kind);
      const double ba = sim_distance(b, a, kind);
      EXPECT_GE(ab, 0.0) << to_string(kind);
      EXPECT_NEAR(ab, ba, 1e-12 * std::max(1.0, ab)) << to_string(kind);
      EXPECT_NEAR(sim_distance(a, a, kind), 0.0, 1e-9) << to_string(kind);
    }
  }
}

TEST(ActivationLoss, Examples) {
  LossConfig cfg;
  // m_i = 0.5 for every unit; each sample's max |mu| is 1
  const std::vector<std::vector<double>> half = {{1.0, 0.0, -1.0}, {0.0, 1.0, 0.0}};
  auto [sp, inv] = activation_loss(half, cfg);
  EXPECT_TRUE(rel_close(sp, 3.0 * std::log(2.0)));
  EXPECT_TRUE(rel_close(inv, 1.0));
  auto [sp2, inv2] = activation_loss({{2.0, 0.1}, {-0.5, 2.0}}, cfg);
  (void)sp2;
  EXPECT_TRUE(rel_close(inv2, 0.5));
}

TEST(ActivationLoss, AllZeroStaysFinite) {
  auto [sp, inv] = activation_loss({{0.0, 0.0}, {0.0, 0.0}}, LossConfig{});
  EXPECT_TRUE(std::isfinite(sp));
  EXPECT_TRUE(rel_close(inv, 1e6));
}

TEST(ActivationLoss, SparsityUniquelyMinimizedAtTarget) {
  for (double s : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    LossConfig cfg;
    cfg.sparsity_s = s;
    double best = INFINITY;
    int best_k = -1;
    std::vector<double> vals;
    for (int k = 1; k < 100; ++k) {
      const double m = k / 100.0;
      const double v = activation_loss({{m}}, cfg).first;
      vals.push_back(v);
      if (v < best) best = v, best_k = k;
    }
    EXPECT_EQ(best_k, static_cast<int>(std::lround(s * 100))) << s;
    // strictly decreasing then strictly increasing
    // vals[j] holds m = (j + 1) / 100
    for (int j = 0; j + 1 < best_k; ++j) EXPECT_GT(vals[j], vals[j + 1]);
    for (int j = best_k - 1; j + 1 < 99; ++j) EXPECT_LT(vals[j], vals[j + 1]);
  }
}

TEST(CrossEntropy, Examples) {
  EXPECT_TRUE(rel_close(cross_entropy(0.5, 1.0), std::log(2.0)));
  EXPECT_TRUE(rel_close(cross_entropy(0.5, 0.0), std::log(2.0)));
  EXPECT_TRUE(rel_close(cross_entropy(0.9, 0.0), -std::log(0.1)));
  EXPECT_LE(cross_entropy(1.0, 1.0), 1e-6);
  EXPECT_LE(cross_entropy(0.0, 0.0), 1e-6);
}

TEST(LossConfig, JsonRoundTripAndErrors) {
  LossConfig cfg;
  cfg.distance = DistanceKind::jeffreys;
  cfg.sparsity_s = 0.3;
  LossConfig back = loss_config_from_json(to_json(cfg));
  EXPECT_EQ(back.distance, DistanceKind::jeffreys);
  EXPECT_EQ(back.sparsity_s, 0.3);
  try {
    loss_config_from_json({{"lambda1", "x"}}, "train.loss");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config_error);
    EXPECT_NE(std::string(e.what()).find("train.loss.lambda1"), std::string::npos);
  }
  EXPECT_THROW(loss_config_from_json({{"sparsity_s", 1.5}}), Error);
  EXPECT_THROW(loss_config_from_json({{"distance", "hamming"}}), Error);
  EXPECT_THROW(loss_config_from_json({{"lamda1", 1.0}}), Error);
}

// --- gradients and the composed objective ---------------------------------------------

namespace {

constexpr std::size_t kB = 4, kMc = 4, kMs = 2, kHw = 8;

// Packs every input of the composed objective into one leaf so the finite
// difference check covers all of them.
struct Layout {
  std::size_t off = 0;
  std::size_t take(std::size_t n) {
    const std::size_t o = off;
    off += n;
    return o;
  }
};

Var part(Var v, std::size_t off, Shape shape) {
  const std::size_t n = shape_numel(shape);
  return reshape(slice(v, 0, off, off + n), std::move(shape));
}

TotalLoss composed(Var leaf, const LossConfig& cfg) {
  Graph& g = *leaf.graph;
  Layout l;
  const std::size_t img = kB * kHw * kHw;
  auto branch = [&](std::uint64_t seed) {
    Branch br;
    br.x = g.constant(uniform({kB, 1, kHw, kHw}, seed, 0.0, 1.0));
    // x_hat in (0,1) through a sigmoid, as the decoder would produce it
    br.x_hat = sigmoid(part(leaf, l.take(img), {kB, 1, kHw, kHw}));
    br.post.mu_c = part(leaf, l.take(kB * kMc), {kB, kMc});
    br.post.logvar_c = part(leaf, l.take(kB * kMc), {kB, kMc});
    br.post.sigma_c = exp(br.post.logvar_c * 0.5);
    br.post.mu_s = part(leaf, l.take(kB * kMs), {kB, kMs});
    br.post.logvar_s = part(leaf, l.take(kB * kMs), {kB, kMs});
    br.post.sigma_s = exp(br.post.logvar_s * 0.5);
    return br;
  };
  Branch a = branch(1), b = branch(2);
  return total_loss(a, b, cfg);
}

constexpr std::size_t kLeaf = 2 * (kB * kHw * kHw + 2 * kB * kMc + 2 * kB * kMs);

Tensor leaf_values(std::uint64_t seed) {
  Tensor t = uniform({kLeaf}, seed, -0.9, 0.9);
  return t;
}

}  // namespace

TEST(TotalLoss, WeightsZeroGiveVaeSum) {
  LossConfig cfg;
  cfg.lambda1 = cfg.lambda2 = 0.0;
  Graph g;
  TotalLoss t = composed(g.variable(leaf_values(3)), cfg);
  EXPECT_TRUE(rel_close(t.breakdown.total, t.breakdown.vae_A + t.breakdown.vae_B));
}

TEST(TotalLoss, BreakdownRecomposes) {
  for (DistanceKind kind : kAllDistances) {
    for (bool invmax : {true, false}) {
      LossConfig cfg;
      cfg.distance = kind;
      cfg.use_invmax = invmax;
      cfg.lambda1 = 0.7;
      cfg.lambda2 = 1.3;
      cfg.kl_weight = 0.4;
      Graph g;
      TotalLoss t = composed(g.variable(leaf_values(4 + static_cast<int>(kind))), cfg);
      EXPECT_LT(t.breakdown.recomposition_error(cfg), 1e-9) << to_string(kind);
      EXPECT_TRUE(rel_close(t.breakdown.vae_A,
                            t.breakdown.recon_A + cfg.kl_weight * (t.breakdown.kl_c_A + t.breakdown.kl_s_A)));
    }
  }
}

Tensor away_from_zero(Tensor t, double margin) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (std::abs(t[i]) < margin) t[i] = t[i] < 0 ? -margin : margin;
  return t;
}

TEST(LossGradients, PartsMatchFiniteDifferences) {
  const double tol = 1e-3;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const Tensor mu = away_from_zero(uniform({kB, kMc}, 10 + trial, -1.5, 1.5), 1e-3);
    const Tensor sg = uniform({kB, kMc}, 20 + trial, 0.3, 1.8);
    const Tensor other = uniform({kB, kMc}, 30 + trial, -1.5, 1.5);
    const Tensor other_sg = uniform({kB, kMc}, 40 + trial, 0.3, 1.8);

    EXPECT_LT(finite_diff_check([&](Graph& g, Var m) { return sum(kl_std_normal(m, g.constant(sg))); }, mu)
                  .max_rel_err,
              tol);
    EXPECT_LT(finite_diff_check([&](Graph& g, Var s) { return sum(kl_std_normal(g.constant(mu), s)); }, sg)
                  .max_rel_err,
              tol);
    for (DistanceKind kind : kAllDistances) {
      auto fmu = [&](Graph& g, Var m) {
        return sim_distance(m, g.constant(sg), g.constant(other), g.constant(other_sg), kind, LossConfig{});
      };
      auto fsg = [&](Graph& g, Var s) {
        return sim_distance(g.constant(mu), s, g.constant(other), g.constant(other_sg), kind, LossConfig{});
      };
      EXPECT_LT(finite_diff_check(fmu, mu).max_rel_err, tol) << to_string(kind) << " trial " << trial;
      EXPECT_LT(finite_diff_check(fsg, sg).max_rel_err, tol) << to_string(kind) << " trial " << trial;
    }
    LossConfig cfg;
    auto fact = [&](Graph&, Var m) {
      ActTerms t = activation_loss(m, cfg);
      return t.sparsity + t.invmax;
    };
    Tensor half = mu;
    for (std::size_t i = 0; i < half.size(); ++i) half[i] *= 0.5;
    EXPECT_LT(finite_diff_check(fact, half).max_rel_err, tol) << "trial " << trial;

    const Tensor y = uniform({kB}, 50 + trial, 0.05, 0.95);
    Tensor t({kB});
    for (std::size_t i = 0; i < kB; ++i) t[i] = (trial + i) % 2;
    EXPECT_LT(finite_diff_check([&](Graph& g, Var v) { return cross_entropy(v, g.constant(t)); }, y).max_rel_err,
              tol);
  }
}

TEST(LossGradients, ComposedObjectiveMatchesFiniteDifferences) {
  for (DistanceKind kind : kAllDistances) {
    LossConfig cfg;
    cfg.distance = kind;
    cfg.kl_weight = 0.5;
    GradCheckReport r = finite_diff_check([&](Graph&, Var leaf) { return composed(leaf, cfg).total; },
                                          leaf_values(60 + static_cast<int>(kind)));
    EXPECT_LT(r.max_rel_err, 1e-3) << to_string(kind) << " worst " << r.worst_index;
  }
}
