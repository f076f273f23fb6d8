#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairdis/data.hpp"
#include "pairdis/model.hpp"
#include "pairdis/train.hpp"

namespace pairdis {

struct EvalResult {
  double accuracy = 0;
  std::size_t n_pos = 0, n_neg = 0;
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const noexcept { return tp + tn + fp + fn; }
};

nlohmann::json to_json(const EvalResult& r);
// Confusion counts from predictions (1 = changed) against labels.
EvalResult score_predictions(const std::vector<int>& predicted, const std::vector<int>& labels);

struct MeanStd {
  double mean = 0, std = 0;  // std uses n - 1
  std::size_t n = 0;
};
MeanStd mean_std(const std::vector<double>& values);

// Probabilities of the "changed" class for every pair, in dataset order.
std::vector<double> classify_pairs(const PairDataset& ds, const ModelParams& params, const ClassifierParams& clf,
                                   const ModelConfig& model, std::size_t batch = 256);
double classify_pair(const Image& a, const Image& b, const ModelParams& params, const ClassifierParams& clf,
                     const ModelConfig& model);

EvalResult evaluate(const PairDataset& test, const ModelParams& params, const ClassifierParams& clf,
                    const ModelConfig& model, double threshold = 0.5);

// Exact 2-means on scalars: sort, then scan every split of the sorted order
// for the smallest within-cluster sum of squares. labels[i] is 1 for the
// cluster with the larger centroid. Raises degenerate-clustering when all
// values are equal.
struct TwoMeans {
  std::vector<int> labels;
  double threshold = 0;  // midpoint between the two clusters' neighbouring values
  double centroid_low = 0, centroid_high = 0;
  double cost = 0;
};
TwoMeans two_means_1d(const std::vector<double>& values);

// Modified-L2 distance between the common posteriors of each pair.
std::vector<double> common_distances(const PairDataset& ds, const ModelParams& params, const ModelConfig& model,
                                     std::size_t batch = 256);

struct DetectResult {
  EvalResult eval;
  std::vector<double> scores;
  TwoMeans split;
};

DetectResult kmeans_detect(const PairDataset& test, const ModelParams& params, const ModelConfig& model);

// Reconstruction error (1/2 squared error, eps = 0) of each concatenated pair
// under a two-channel VAE.
std::vector<double> vae_rec_score(const PairDataset& test, const ModelParams& params, const ModelConfig& model,
                                  std::size_t batch = 256);
DetectResult vae_rec_detect(const PairDataset& test, const ModelParams& params, const ModelConfig& model);

// --- pipeline and ablation ---------------------------------------------------

struct PipelineData {
  PairDataset pretrain;  // negatives only
  PairDataset finetune;  // labeled, imbalanced
  PairDataset test;      // balanced
};

// Pretraining negatives from the train pool; the fine-tuning set is those
// negatives plus n_finetune_pos positives; the test set comes from the test
// pool.
PipelineData build_pipeline_data(const DataConfig& cfg);

struct PipelineResult {
  ModelParams pretrained;
  ModelParams finetuned;
  ClassifierParams classifier;
  RunReport pretrain_report;
  RunReport finetune_report;
  EvalResult supervised;
};

PipelineResult run_pipeline(const PipelineData& data, const ModelConfig& model, const TrainConfig& cfg);

enum class AblationAxis { distance_kind, sparsity_s, invmax_on, lambda1 };
std::string_view to_string(AblationAxis a) noexcept;
AblationAxis parse_axis(std::string_view name);

struct AblationRow {
  std::string setting;
  std::vector<double> accuracies;  // one per repeat
  MeanStd summary;
};

struct AblationTable {
  std::string axis;
  std::vector<AblationRow> rows;
};

// One grid point: its label and the train config to use.
struct GridPoint {
  std::string setting;
  TrainConfig cfg;
};

// Builds the grid for a named axis from string settings, e.g. distance kinds
// or "0.3" for sparsity. Each setting of invmax_on is "on"/"off"; sparsity
// settings may carry a "/off" suffix to disable invmax.
std::vector<GridPoint> make_grid(AblationAxis axis, const std::vector<std::string>& settings, const TrainConfig& base);

// Repeat r of every grid point uses seed derive_seed(base seed, r).
AblationTable run_ablation(const std::string& axis, const std::vector<GridPoint>& grid, const PipelineData& data,
                           const ModelConfig& model, std::size_t repeats,
                           const std::function<void(const std::string&, std::size_t, double)>& on_run = {});

// CSV columns: setting,repeat,accuracy
void write_ablation_csv(const AblationTable& t, const std::filesystem::path& path);
nlohmann::json to_json(const AblationTable& t);

}  // namespace pairdis
