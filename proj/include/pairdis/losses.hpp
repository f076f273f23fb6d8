#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pairdis/graph.hpp"
#include "pairdis/model.hpp"

namespace pairdis {

enum class DistanceKind { modified_l2, l2, l1, cosine, mmd, jeffreys };

std::string_view to_string(DistanceKind kind) noexcept;
DistanceKind parse_distance(std::string_view name);
inline constexpr DistanceKind kAllDistances[] = {DistanceKind::l2,     DistanceKind::l1,       DistanceKind::cosine,
                                                 DistanceKind::mmd,    DistanceKind::jeffreys, DistanceKind::modified_l2};

struct LossConfig {
  double lambda1 = 1.0;  // similarity weight
  double lambda2 = 1.0;  // activation weight
  double sparsity_s = 0.5;
  DistanceKind distance = DistanceKind::modified_l2;
  double kl_weight = 1.0;
  bool use_invmax = true;
  double m_clamp_eps = 1e-6;
  double sigma_floor = 1e-6;
  double invmax_floor = 1e-6;

  void validate() const;
};

nlohmann::json to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const nlohmann::json& j, const std::string& path = "loss");

struct LossBreakdown {
  double vae_A = 0, vae_B = 0;
  double recon_A = 0, recon_B = 0;
  double kl_c_A = 0, kl_c_B = 0, kl_s_A = 0, kl_s_B = 0;
  double sim = 0;
  double act_sparsity = 0, act_invmax = 0;
  double total = 0;

  // total - (vae_A + vae_B + lambda1 sim + lambda2 (sparsity + invmax)), relative.
  double recomposition_error(const LossConfig& cfg) const;
  LossBreakdown& operator+=(const LossBreakdown& o);
  LossBreakdown scaled(double f) const;
};

nlohmann::json to_json(const LossBreakdown& b);

// --- graph-level losses (rows are batch samples) ---------------------------

// Per-row KL(N(mu, sigma^2) || N(0, 1)) for [B, M] inputs -> [B].
Var kl_std_normal(Var mu, Var sigma);

struct VaeTerms {
  Var total, recon, kl_c, kl_s;
};
// 1/2 ||x - x_hat||^2 summed over pixels plus kl_weight (KL_c + KL_s), each averaged over the batch.
VaeTerms vae_loss(Var x, Var x_hat, const EncoderOut& post, double kl_weight);

// Batch-averaged distance between common posteriors of A and B ([B, M] each).
// mmd is a batch statistic and needs B >= 2.
Var sim_distance(Var mu_a, Var sigma_a, Var mu_b, Var sigma_b, DistanceKind kind, const LossConfig& cfg);

struct ActTerms {
  Var sparsity, invmax;
};
ActTerms activation_loss(Var mu_c, const LossConfig& cfg);

struct Branch {
  Var x, x_hat;
  EncoderOut post;
};

struct TotalLoss {
  Var total;
  LossBreakdown breakdown;
};
// vae_A + vae_B + lambda1 sim + lambda2 act, with act evaluated on the pooled
// common means of both branches.
TotalLoss total_loss(const Branch& a, const Branch& b, const LossConfig& cfg);

// Mean of -[t ln y + (1-t) ln(1-y)] with y clamped to [1e-7, 1 - 1e-7].
Var cross_entropy(Var y, Var t);

// --- plain-value wrappers ----------------------------------------------------

double kl_std_normal(std::span<const double> mu, std::span<const double> sigma);
double vae_loss(const Image& x, const Image& x_hat, const PosteriorPair& post, double kl_weight);
double sim_modified_l2(const PosteriorPair& a, const PosteriorPair& b);
double sim_distance(const PosteriorPair& a, const PosteriorPair& b, DistanceKind kind,
                    const LossConfig& cfg = LossConfig{});
double sim_distance(std::span<const PosteriorPair> a, std::span<const PosteriorPair> b, DistanceKind kind,
                    const LossConfig& cfg = LossConfig{});
std::pair<double, double> activation_loss(const std::vector<std::vector<double>>& mu_c, const LossConfig& cfg);
double cross_entropy(double y, double t);

}  // namespace pairdis
