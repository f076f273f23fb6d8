#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairdis/adam.hpp"
#include "pairdis/data.hpp"
#include "pairdis/losses.hpp"
#include "pairdis/model.hpp"

namespace pairdis {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 100;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  LossConfig loss;
  std::uint64_t seed = 0;
  bool kl_anneal = true;
  std::size_t anneal_epochs = 0;  // 0: same as epochs

  // fine-tuning
  double encoder_lr_scale_finetune = 0.1;
  std::size_t finetune_epochs = 100;
  std::size_t finetune_batch_size = 20;
  std::vector<std::size_t> classifier_hidden = {100, 100};

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& path = "train");

// min(epoch / anneal_epochs, 1); 1 when annealing is off.
double kl_anneal_weight(std::size_t epoch, const TrainConfig& cfg);

// Dense layers 2*M_c -> hidden... -> 2, named fc1, fc2, ...
struct ClassifierParams {
  NamedTensors layers;

  friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

ClassifierParams init_classifier(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::uint64_t seed);
// features [B, 2*M_c] -> logits [B, 2]
Var classifier_forward(Var features, const BoundParams& clf);
// softmax probability of the "changed" class, computed as sigmoid(l1 - l0)
Var change_probability(Var logits);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double kl_weight = 0;
  LossBreakdown loss;     // pretraining: per-step mean
  double cross_entropy = 0;  // fine-tuning: per-step mean
};

struct RunReport {
  std::string phase;
  std::vector<EpochRecord> epochs;
  std::size_t configured_epochs = 0;
  std::size_t steps = 0;
  double wall_seconds = 0;
  std::vector<std::uint64_t> seeds;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metrics = nlohmann::json::object();
  std::string checkpoint;
  std::string halt_reason;  // empty unless training stopped early

  bool halted() const noexcept { return !halt_reason.empty(); }
};

nlohmann::json to_json(const RunReport& r);
// Everything but wall time; equal for identical runs.
nlohmann::json deterministic_view(const RunReport& r);

// One JSON object per optimizer step is written to `log` when given.
struct TrainHooks {
  std::ostream* log = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct PretrainResult {
  ModelParams params;
  RunReport report;
};

// Negatives-only training of the twin VAE; any positive pair raises
// contract-violation. `init` defaults to init_params(model, seed).
PretrainResult pretrain(const PairDataset& neg_pairs, const ModelConfig& model, const TrainConfig& cfg,
                        std::optional<ModelParams> init = std::nullopt, const TrainHooks& hooks = {});

struct FinetuneResult {
  ModelParams params;
  ClassifierParams classifier;
  RunReport report;
};

// Undersamples negatives, then trains classifier (lr) and encoder
// (lr * encoder_lr_scale_finetune) on cross-entropy; the decoder is untouched.
FinetuneResult finetune(const ModelParams& params, const PairDataset& labeled, const ModelConfig& model,
                        const TrainConfig& cfg, const TrainHooks& hooks = {});

// Plain VAE over two-channel concatenated pairs (model.in_channels must be 2).
PretrainResult train_concat_vae(const PairDataset& neg_pairs, const ModelConfig& model, const TrainConfig& cfg,
                                const TrainHooks& hooks = {});

}  // namespace pairdis
