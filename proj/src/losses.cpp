#include "pairdis/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pairdis/config.hpp"
#include "pairdis/error.hpp"

namespace pairdis {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct DistanceName {
  DistanceKind kind;
  std::string_view name;
};

constexpr DistanceName kDistanceNames[] = {
    {DistanceKind::modified_l2, "modified_l2"}, {DistanceKind::l2, "l2"},   {DistanceKind::l1, "l1"},
    {DistanceKind::cosine, "cosine"},           {DistanceKind::mmd, "mmd"}, {DistanceKind::jeffreys, "jeffreys"},
};

void require_same(Var a, Var b, const char* what) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::shape_error,
         std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  }
}

void require_rank2(Var a, const char* what) {
  if (a.shape().size() != 2) {
    fail(ErrorKind::shape_error, std::string(what) + ": expected [batch, dim], got " + shape_str(a.shape()));
  }
}

// Unbiased MMD^2 between the rows of x and y with an RBF kernel. The
// bandwidth is the median pairwise distance of the pooled rows; it is built
// from the selected pair(s) inside the graph, so gradients include it.
Var mmd_unbiased(Var x, Var y) {
  const std::size_t b = x.shape()[0];
  require(b >= 2, ErrorKind::invalid_argument, "mmd needs a batch of at least 2, got " + std::to_string(b));
  Graph& g = *x.graph;

  Var z = concat({x, y}, 0);
  const Tensor& zv = z.value();
  const std::size_t n = 2 * b, d = x.shape()[1];
  struct PairDist {
    double dist;
    std::size_t i, j;
  };
  std::vector<PairDist> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = zv[i * d + k] - zv[j * d + k];
        s += diff * diff;
      }
      dists.push_back({std::sqrt(s), i, j});
    }
  }
  std::sort(dists.begin(), dists.end(), [](const PairDist& p, const PairDist& q) { return p.dist < q.dist; });
  const std::size_t m = dists.size();
  std::vector<PairDist> mid{dists[m / 2]};
  if (m % 2 == 0) mid.push_back(dists[m / 2 - 1]);

  Var h = g.constant(Tensor::scalar(0.0));
  double hv = 0.0;
  for (const PairDist& p : mid) {
    hv += p.dist / static_cast<double>(mid.size());
    if (p.dist > 0.0) {
      Var dz = slice(z, 0, p.i, p.i + 1) - slice(z, 0, p.j, p.j + 1);
      h = h + reshape(sqrt(sum(square(dz))), {}) * (1.0 / static_cast<double>(mid.size()));
    }
  }
  if (!(hv > 0.0)) h = g.constant(Tensor::scalar(1.0));
  Var gamma = rdiv_scalar(-0.5, square(h));

  Var kxx = exp(scale(sq_dist_matrix(x, x), gamma));
  Var kyy = exp(scale(sq_dist_matrix(y, y), gamma));
  Var kxy = exp(scale(sq_dist_matrix(x, y), gamma));
  Var tr_xy = sum(exp(scale(sum_axis(square(x - y), 1), gamma)));
  const double bb = static_cast<double>(b);
  Var num = sum(kxx) + sum(kyy) - 2.0 * sum(kxy) + 2.0 * tr_xy;
  Var v = (num - 2.0 * bb) * (1.0 / (bb * (bb - 1.0)));
  return clamp(v, 0.0, kInf);
}

Tensor row(std::span<const double> v) { return Tensor({1, v.size()}, std::vector<double>(v.begin(), v.end())); }

Tensor rows(std::span<const PosteriorPair> posts, std::vector<double> PosteriorPair::*field) {
  require(!posts.empty(), ErrorKind::invalid_argument, "empty posterior batch");
  const std::size_t m = (posts[0].*field).size();
  std::vector<double> out;
  out.reserve(posts.size() * m);
  for (const auto& p : posts) {
    require((p.*field).size() == m, ErrorKind::shape_error, "posterior batch has ragged latent dims");
    out.insert(out.end(), (p.*field).begin(), (p.*field).end());
  }
  return Tensor({posts.size(), m}, std::move(out));
}

void require_positive(std::span<const double> sigma, const char* what) {
  for (double s : sigma) {
    require(s > 0.0, ErrorKind::invalid_argument, std::string(what) + ": sigma must be positive");
  }
}

Tensor image_tensor(const Image& img) {
  Tensor t({1, 1, img.rows, img.cols});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = img.pixels[i];
  return t;
}

}  // namespace

std::string_view to_string(DistanceKind kind) noexcept {
  for (const auto& d : kDistanceNames)
    if (d.kind == kind) return d.name;
  return "unknown";
}

DistanceKind parse_distance(std::string_view name) {
  for (const auto& d : kDistanceNames)
    if (d.name == name) return d.kind;
  fail(ErrorKind::invalid_argument, "unknown distance kind '" + std::string(name) + "'");
}

void LossConfig::validate() const {
  require(lambda1 >= 0.0 && lambda2 >= 0.0, ErrorKind::invalid_argument, "lambda1 and lambda2 must be >= 0");
  require(sparsity_s > 0.0 && sparsity_s < 1.0, ErrorKind::invalid_argument, "sparsity_s must lie in (0,1)");
  require(kl_weight >= 0.0 && kl_weight <= 1.0, ErrorKind::invalid_argument, "kl_weight must lie in [0,1]");
  require(m_clamp_eps > 0.0 && m_clamp_eps < 0.5, ErrorKind::invalid_argument, "m_clamp_eps must lie in (0,0.5)");
  require(sigma_floor > 0.0 && invmax_floor > 0.0, ErrorKind::invalid_argument, "floors must be positive");
}

nlohmann::json to_json(const LossConfig& cfg) {
  return {{"lambda1", cfg.lambda1},         {"lambda2", cfg.lambda2},
          {"sparsity_s", cfg.sparsity_s},   {"distance", std::string(to_string(cfg.distance))},
          {"kl_weight", cfg.kl_weight},     {"use_invmax", cfg.use_invmax},
          {"m_clamp_eps", cfg.m_clamp_eps}, {"sigma_floor", cfg.sigma_floor},
          {"invmax_floor", cfg.invmax_floor}};
}

LossConfig loss_config_from_json(const nlohmann::json& j, const std::string& path) {
  ConfigReader r(j, path);
  r.allow_only({"lambda1", "lambda2", "sparsity_s", "distance", "kl_weight", "use_invmax", "m_clamp_eps",
                "sigma_floor", "invmax_floor"});
  LossConfig cfg;
  cfg.lambda1 = r.get<double>("lambda1", cfg.lambda1);
  cfg.lambda2 = r.get<double>("lambda2", cfg.lambda2);
  cfg.sparsity_s = r.get<double>("sparsity_s", cfg.sparsity_s);
  if (r.has("distance")) {
    const auto name = r.get<std::string>("distance", "");
    try {
      cfg.distance = parse_distance(name);
    } catch (const Error& e) {
      fail(ErrorKind::config_error, r.key_path("distance") + ": " + e.what());
    }
  }
  cfg.kl_weight = r.get<double>("kl_weight", cfg.kl_weight);
  cfg.use_invmax = r.get<bool>("use_invmax", cfg.use_invmax);
  cfg.m_clamp_eps = r.get<double>("m_clamp_eps", cfg.m_clamp_eps);
  cfg.sigma_floor = r.get<double>("sigma_floor", cfg.sigma_floor);
  cfg.invmax_floor = r.get<double>("invmax_floor", cfg.invmax_floor);
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config_error, path + ": " + e.what());
  }
  return cfg;
}

double LossBreakdown::recomposition_error(const LossConfig& cfg) const {
  const double re = vae_A + vae_B + cfg.lambda1 * sim + cfg.lambda2 * (act_sparsity + act_invmax);
  const double denom = std::max({std::abs(total), std::abs(re), 1e-12});
  return std::abs(total - re) / denom;
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  vae_A += o.vae_A;
  vae_B += o.vae_B;
  recon_A += o.recon_A;
  recon_B += o.recon_B;
  kl_c_A += o.kl_c_A;
  kl_c_B += o.kl_c_B;
  kl_s_A += o.kl_s_A;
  kl_s_B += o.kl_s_B;
  sim += o.sim;
  act_sparsity += o.act_sparsity;
  act_invmax += o.act_invmax;
  total += o.total;
  return *this;
}

LossBreakdown LossBreakdown::scaled(double f) const {
  LossBreakdown b = *this;
  for (double* p : {&b.vae_A, &b.vae_B, &b.recon_A, &b.recon_B, &b.kl_c_A, &b.kl_c_B, &b.kl_s_A, &b.kl_s_B, &b.sim,
                    &b.act_sparsity, &b.act_invmax, &b.total})
    *p *= f;
  return b;
}

nlohmann::json to_json(const LossBreakdown& b) {
  return {{"vae_A", b.vae_A},   {"vae_B", b.vae_B},         {"recon_A", b.recon_A},
          {"recon_B", b.recon_B}, {"kl_c_A", b.kl_c_A},     {"kl_c_B", b.kl_c_B},
          {"kl_s_A", b.kl_s_A}, {"kl_s_B", b.kl_s_B},       {"sim", b.sim},
          {"act_sparsity", b.act_sparsity}, {"act_invmax", b.act_invmax}, {"total", b.total}};
}

// --- graph level -----------------------------------------------------------

Var kl_std_normal(Var mu, Var sigma) {
  require_rank2(mu, "kl_std_normal");
  require_same(mu, sigma, "kl_std_normal");
  Var per = (square(mu) + square(sigma) - 1.0) - 2.0 * log(sigma);
  return sum_axis(per, 1) * 0.5;
}

VaeTerms vae_loss(Var x, Var x_hat, const EncoderOut& post, double kl_weight) {
  require_same(x, x_hat, "vae_loss");
  const std::size_t b = x.shape().at(0);
  const std::size_t per = x.value().size() / b;
  Var sq = reshape(square(x - x_hat), {b, per});
  VaeTerms t;
  t.recon = mean(sum_axis(sq, 1)) * 0.5;
  t.kl_c = mean(kl_std_normal(post.mu_c, post.sigma_c));
  t.kl_s = mean(kl_std_normal(post.mu_s, post.sigma_s));
  t.total = t.recon + kl_weight * (t.kl_c + t.kl_s);
  return t;
}

Var sim_distance(Var mu_a, Var sigma_a, Var mu_b, Var sigma_b, DistanceKind kind, const LossConfig& cfg) {
  require_rank2(mu_a, "sim_distance");
  require_same(mu_a, mu_b, "sim_distance");
  require_same(mu_a, sigma_a, "sim_distance");
  require_same(mu_b, sigma_b, "sim_distance");
  switch (kind) {
    case DistanceKind::modified_l2:
      return mean(square(mu_a - mu_b) / (sigma_a * sigma_b));
    case DistanceKind::l2:
      return mean(square(mu_a - mu_b));
    case DistanceKind::l1:
      return mean(abs(mu_a - mu_b));
    case DistanceKind::cosine: {
      Var dot = sum_axis(mu_a * mu_b, 1);
      Var nn = sum_axis(square(mu_a), 1) * sum_axis(square(mu_b), 1);
      Var denom = sqrt(clamp(nn, cfg.sigma_floor * cfg.sigma_floor, kInf));
      return mean(rdiv_scalar(1.0, denom) * dot * -1.0 + 1.0);
    }
    case DistanceKind::jeffreys: {
      Var d2 = square(mu_a - mu_b);
      Var va = square(sigma_a);
      Var vb = square(sigma_b);
      Var per = (va + d2) / (vb * 2.0) + (vb + d2) / (va * 2.0) - 1.0;
      return mean(sum_axis(per, 1));
    }
    case DistanceKind::mmd:
      return mmd_unbiased(mu_a, mu_b);
  }
  fail(ErrorKind::invalid_argument, "unknown distance kind");
}

ActTerms activation_loss(Var mu_c, const LossConfig& cfg) {
  require_rank2(mu_c, "activation_loss");
  require(mu_c.shape()[0] >= 1, ErrorKind::invalid_argument, "activation_loss: empty batch");
  Var a = abs(mu_c);
  Var m = clamp(mean_axis(a, 0), cfg.m_clamp_eps, 1.0 - cfg.m_clamp_eps);
  Var one_minus = m * -1.0 + 1.0;
  const double s = cfg.sparsity_s;
  ActTerms t;
  t.sparsity = sum(s * log(m) + (1.0 - s) * log(one_minus)) * -1.0;
  Var peak = clamp(max_axis(a, 1), cfg.invmax_floor, kInf);
  t.invmax = mean(rdiv_scalar(1.0, peak));
  return t;
}

TotalLoss total_loss(const Branch& a, const Branch& b, const LossConfig& cfg) {
  Graph& g = *a.x.graph;
  VaeTerms va = vae_loss(a.x, a.x_hat, a.post, cfg.kl_weight);
  VaeTerms vb = vae_loss(b.x, b.x_hat, b.post, cfg.kl_weight);
  Var sim = sim_distance(a.post.mu_c, a.post.sigma_c, b.post.mu_c, b.post.sigma_c, cfg.distance, cfg);
  ActTerms act = activation_loss(concat({a.post.mu_c, b.post.mu_c}, 0), cfg);
  Var act_sum = cfg.use_invmax ? act.sparsity + act.invmax : act.sparsity;

  TotalLoss out;
  out.total = va.total + vb.total + cfg.lambda1 * sim + cfg.lambda2 * act_sum;
  auto& br = out.breakdown;
  br.vae_A = g.value(va.total).item();
  br.vae_B = g.value(vb.total).item();
  br.recon_A = g.value(va.recon).item();
  br.recon_B = g.value(vb.recon).item();
  br.kl_c_A = g.value(va.kl_c).item();
  br.kl_c_B = g.value(vb.kl_c).item();
  br.kl_s_A = g.value(va.kl_s).item();
  br.kl_s_B = g.value(vb.kl_s).item();
  br.sim = g.value(sim).item();
  br.act_sparsity = g.value(act.sparsity).item();
  br.act_invmax = cfg.use_invmax ? g.value(act.invmax).item() : 0.0;
  br.total = g.value(out.total).item();
  return out;
}

Var cross_entropy(Var y, Var t) {
  require_same(y, t, "cross_entropy");
  Var yc = clamp(y, 1e-7, 1.0 - 1e-7);
  Var per = t * log(yc) + (t * -1.0 + 1.0) * log(yc * -1.0 + 1.0);
  return mean(per) * -1.0;
}

// --- plain values ------------------------------------------------------------

double kl_std_normal(std::span<const double> mu, std::span<const double> sigma) {
  require(mu.size() == sigma.size(), ErrorKind::shape_error,
          "kl_std_normal: mu has " + std::to_string(mu.size()) + " entries, sigma " + std::to_string(sigma.size()));
  require_positive(sigma, "kl_std_normal");
  Graph g;
  return g.value(kl_std_normal(g.constant(row(mu)), g.constant(row(sigma)))).item();
}

double vae_loss(const Image& x, const Image& x_hat, const PosteriorPair& post, double kl_weight) {
  require(x.rows == x_hat.rows && x.cols == x_hat.cols, ErrorKind::shape_error, "vae_loss: image sizes differ");
  require_positive(post.sigma_c, "vae_loss");
  require_positive(post.sigma_s, "vae_loss");
  Graph g;
  EncoderOut e;
  e.mu_c = g.constant(row(post.mu_c));
  e.sigma_c = g.constant(row(post.sigma_c));
  e.mu_s = g.constant(row(post.mu_s));
  e.sigma_s = g.constant(row(post.sigma_s));
  e.logvar_c = 2.0 * log(e.sigma_c);
  e.logvar_s = 2.0 * log(e.sigma_s);
  VaeTerms t = vae_loss(g.constant(image_tensor(x)), g.constant(image_tensor(x_hat)), e, kl_weight);
  return g.value(t.total).item();
}

double sim_modified_l2(const PosteriorPair& a, const PosteriorPair& b) {
  return sim_distance(a, b, DistanceKind::modified_l2);
}

double sim_distance(const PosteriorPair& a, const PosteriorPair& b, DistanceKind kind, const LossConfig& cfg) {
  return sim_distance(std::span<const PosteriorPair>(&a, 1), std::span<const PosteriorPair>(&b, 1), kind, cfg);
}

double sim_distance(std::span<const PosteriorPair> a, std::span<const PosteriorPair> b, DistanceKind kind,
                    const LossConfig& cfg) {
  require(a.size() == b.size(), ErrorKind::shape_error, "sim_distance: batch sizes differ");
  for (const auto& p : a) require_positive(p.sigma_c, "sim_distance");
  for (const auto& p : b) require_positive(p.sigma_c, "sim_distance");
  Graph g;
  Tensor ma = rows(a, &PosteriorPair::mu_c), mb = rows(b, &PosteriorPair::mu_c);
  require(ma.shape() == mb.shape(), ErrorKind::shape_error,
          "sim_distance: common dims " + shape_str(ma.shape()) + " and " + shape_str(mb.shape()) + " differ");
  Var v = sim_distance(g.constant(std::move(ma)), g.constant(rows(a, &PosteriorPair::sigma_c)),
                       g.constant(std::move(mb)), g.constant(rows(b, &PosteriorPair::sigma_c)), kind, cfg);
  return g.value(v).item();
}

std::pair<double, double> activation_loss(const std::vector<std::vector<double>>& mu_c, const LossConfig& cfg) {
  require(!mu_c.empty(), ErrorKind::invalid_argument, "activation_loss: empty batch");
  const std::size_t m = mu_c[0].size();
  std::vector<double> flat;
  for (const auto& r : mu_c) {
    require(r.size() == m, ErrorKind::shape_error, "activation_loss: ragged batch");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  Graph g;
  ActTerms t = activation_loss(g.constant(Tensor({mu_c.size(), m}, std::move(flat))), cfg);
  return {g.value(t.sparsity).item(), g.value(t.invmax).item()};
}

double cross_entropy(double y, double t) {
  Graph g;
  return g.value(cross_entropy(g.constant(Tensor({1}, {y})), g.constant(Tensor({1}, {t})))).item();
}

}  // namespace pairdis
