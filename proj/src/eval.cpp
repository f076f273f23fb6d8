#include "pairdis/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "pairdis/error.hpp"
#include "pairdis/losses.hpp"
#include "pairdis/random.hpp"

namespace pairdis {

namespace {

template <typename F>
void for_chunks(std::size_t n, std::size_t batch, F&& f) {
  require(batch >= 1, ErrorKind::invalid_argument, "batch must be >= 1");
  for (std::size_t i = 0; i < n; i += batch) f(i, std::min(n, i + batch));
}

Tensor stacked(const PairDataset& ds, std::size_t begin, std::size_t end) {
  std::vector<const Image*> imgs;
  for (std::size_t i = begin; i < end; ++i) imgs.push_back(&ds.pairs[i].a);
  for (std::size_t i = begin; i < end; ++i) imgs.push_back(&ds.pairs[i].b);
  return images_to_tensor(imgs);
}

DetectResult detect(const PairDataset& test, std::vector<double> scores) {
  DetectResult d;
  d.split = two_means_1d(scores);
  d.eval = score_predictions(d.split.labels, test.labels);
  d.scores = std::move(scores);
  return d;
}

}  // namespace

nlohmann::json to_json(const EvalResult& r) {
  return {{"accuracy", r.accuracy}, {"n_pos", r.n_pos}, {"n_neg", r.n_neg}, {"tp", r.tp},
          {"tn", r.tn},             {"fp", r.fp},       {"fn", r.fn}};
}

EvalResult score_predictions(const std::vector<int>& predicted, const std::vector<int>& labels) {
  require(predicted.size() == labels.size(), ErrorKind::shape_error,
          "predictions (" + std::to_string(predicted.size()) + ") and labels (" + std::to_string(labels.size()) +
              ") differ in length");
  require(!labels.empty(), ErrorKind::invalid_argument, "cannot evaluate an empty dataset");
  EvalResult r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted[i] != 0, t = labels[i] != 0;
    (t ? r.n_pos : r.n_neg)++;
    if (p && t) ++r.tp;
    else if (!p && !t) ++r.tn;
    else if (p) ++r.fp;
    else ++r.fn;
  }
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.total());
  return r;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd m;
  m.n = values.size();
  if (values.empty()) return m;
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(m.n - 1));
  }
  return m;
}

std::vector<double> classify_pairs(const PairDataset& ds, const ModelParams& params, const ClassifierParams& clf,
                                   const ModelConfig& model, std::size_t batch) {
  std::vector<double> out;
  out.reserve(ds.size());
  for_chunks(ds.size(), batch, [&](std::size_t begin, std::size_t end) {
    const std::size_t b = end - begin;
    Graph g;
    const BoundParams enc = bind_params(g, params.encoder, false);
    const BoundParams cl = bind_params(g, clf.layers, false);
    EncoderOut e = encoder_forward(g.constant(stacked(ds, begin, end)), enc, model);
    Var feat = concat({slice(e.mu_c, 0, 0, b), slice(e.mu_c, 0, b, 2 * b)}, 1);
    const Tensor& p = change_probability(classifier_forward(feat, cl)).value();
    out.insert(out.end(), p.data().begin(), p.data().end());
  });
  return out;
}

double classify_pair(const Image& a, const Image& b, const ModelParams& params, const ClassifierParams& clf,
                     const ModelConfig& model) {
  PairDataset one;
  one.pairs.push_back({a, b});
  one.labels.push_back(0);
  return classify_pairs(one, params, clf, model).front();
}

EvalResult evaluate(const PairDataset& test, const ModelParams& params, const ClassifierParams& clf,
                    const ModelConfig& model, double threshold) {
  require(test.size() > 0, ErrorKind::invalid_argument, "cannot evaluate an empty dataset");
  const auto probs = classify_pairs(test, params, clf, model);
  std::vector<int> pred(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) pred[i] = probs[i] > threshold ? 1 : 0;
  return score_predictions(pred, test.labels);
}

TwoMeans two_means_1d(const std::vector<double>& values) {
  const std::size_t n = values.size();
  require(n >= 2, ErrorKind::degenerate_clustering, "2-means needs at least two values");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = values[order[i]];
  require(s.front() < s.back(), ErrorKind::degenerate_clustering, "all values are identical; no split exists");

  // prefix sums of centred values
  const double centre = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(n);
  std::vector<double> p1(n + 1, 0.0), p2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = s[i] - centre;
    p1[i + 1] = p1[i] + v;
    p2[i + 1] = p2[i] + v * v;
  }
  const auto sse = [&](std::size_t a, std::size_t b) {
    const double c = static_cast<double>(b - a);
    const double sum = p1[b] - p1[a];
    return std::max(0.0, (p2[b] - p2[a]) - sum * sum / c);
  };
  std::size_t best = 0;
  double best_cost = INFINITY;
  for (std::size_t k = 1; k < n; ++k) {
    if (s[k - 1] == s[k]) continue;  // equal values stay together
    const double cost = sse(0, k) + sse(k, n);
    if (cost < best_cost) {
      best_cost = cost;
      best = k;
    }
  }
  TwoMeans t;
  t.labels.assign(n, 0);
  for (std::size_t i = best; i < n; ++i) t.labels[order[i]] = 1;
  t.threshold = 0.5 * (s[best - 1] + s[best]);
  t.centroid_low = (p1[best] / static_cast<double>(best)) + centre;
  t.centroid_high = ((p1[n] - p1[best]) / static_cast<double>(n - best)) + centre;
  t.cost = best_cost;
  return t;
}

std::vector<double> common_distances(const PairDataset& ds, const ModelParams& params, const ModelConfig& model,
                                     std::size_t batch) {
  std::vector<double> out;
  out.reserve(ds.size());
  for_chunks(ds.size(), batch, [&](std::size_t begin, std::size_t end) {
    std::vector<const Image*> a, b;
    for (std::size_t i = begin; i < end; ++i) {
      a.push_back(&ds.pairs[i].a);
      b.push_back(&ds.pairs[i].b);
    }
    const auto pa = encode_batch(a, params, model);
    const auto pb = encode_batch(b, params, model);
    for (std::size_t i = 0; i < pa.size(); ++i) out.push_back(sim_modified_l2(pa[i], pb[i]));
  });
  return out;
}

DetectResult kmeans_detect(const PairDataset& test, const ModelParams& params, const ModelConfig& model) {
  return detect(test, common_distances(test, params, model));
}

std::vector<double> vae_rec_score(const PairDataset& test, const ModelParams& params, const ModelConfig& model,
                                  std::size_t batch) {
  require(model.in_channels == 2, ErrorKind::invalid_argument, "vae_rec_score needs a two-channel model");
  std::vector<double> out;
  out.reserve(test.size());
  for_chunks(test.size(), batch, [&](std::size_t begin, std::size_t end) {
    std::vector<const ImagePair*> ps;
    for (std::size_t i = begin; i < end; ++i) ps.push_back(&test.pairs[i]);
    Graph g;
    const BoundParams enc = bind_params(g, params.encoder, false);
    const BoundParams dec = bind_params(g, params.decoder, false);
    Var x = g.constant(pairs_to_tensor(ps));
    EncoderOut e = encoder_forward(x, enc, model);
    const Tensor& xh = decoder_forward(e.mu_c, e.mu_s, dec, model).value();
    const Tensor& xv = x.value();
    const std::size_t per = xv.size() / ps.size();
    for (std::size_t n = 0; n < ps.size(); ++n) {
      double s = 0;
      for (std::size_t i = n * per; i < (n + 1) * per; ++i) s += (xv[i] - xh[i]) * (xv[i] - xh[i]);
      out.push_back(0.5 * s);
    }
  });
  return out;
}

DetectResult vae_rec_detect(const PairDataset& test, const ModelParams& params, const ModelConfig& model) {
  return detect(test, vae_rec_score(test, params, model));
}

PipelineResult run_pipeline(const PipelineData& data, const ModelConfig& model, const TrainConfig& cfg) {
  PipelineResult r;
  PretrainResult pre = pretrain(data.pretrain, model, cfg);
  r.pretrained = pre.params;
  r.pretrain_report = std::move(pre.report);
  FinetuneResult ft = finetune(pre.params, data.finetune, model, cfg);
  r.finetuned = std::move(ft.params);
  r.classifier = std::move(ft.classifier);
  r.finetune_report = std::move(ft.report);
  r.supervised = evaluate(data.test, r.finetuned, r.classifier, model);
  return r;
}

std::string_view to_string(AblationAxis a) noexcept {
  switch (a) {
    case AblationAxis::distance_kind: return "distance_kind";
    case AblationAxis::sparsity_s: return "sparsity_s";
    case AblationAxis::invmax_on: return "invmax_on";
    case AblationAxis::lambda1: return "lambda1";
  }
  return "unknown";
}

AblationAxis parse_axis(std::string_view name) {
  for (AblationAxis a : {AblationAxis::distance_kind, AblationAxis::sparsity_s, AblationAxis::invmax_on,
                         AblationAxis::lambda1}) {
    if (to_string(a) == name) return a;
  }
  fail(ErrorKind::invalid_argument, "unknown ablation axis '" + std::string(name) + "'");
}

std::vector<GridPoint> make_grid(AblationAxis axis, const std::vector<std::string>& settings, const TrainConfig& base) {
  require(!settings.empty(), ErrorKind::invalid_argument, "ablation grid is empty");
  const auto number = [](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::invalid_argument, "grid setting '" + s + "' is not a number");
  };
  std::vector<GridPoint> grid;
  for (const auto& s : settings) {
    GridPoint p{s, base};
    switch (axis) {
      case AblationAxis::distance_kind:
        p.cfg.loss.distance = parse_distance(s);
        break;
      case AblationAxis::sparsity_s: {
        std::string v = s;
        if (v.ends_with("/off")) {
          p.cfg.loss.use_invmax = false;
          v.resize(v.size() - 4);
        } else if (v.ends_with("/on")) {
          p.cfg.loss.use_invmax = true;
          v.resize(v.size() - 3);
        }
        p.cfg.loss.sparsity_s = number(v);
        break;
      }
      case AblationAxis::invmax_on:
        require(s == "on" || s == "off", ErrorKind::invalid_argument, "invmax setting must be on or off");
        p.cfg.loss.use_invmax = s == "on";
        break;
      case AblationAxis::lambda1:
        p.cfg.loss.lambda1 = number(s);
        break;
    }
    p.cfg.validate();
    grid.push_back(std::move(p));
  }
  return grid;
}

AblationTable run_ablation(const std::string& axis, const std::vector<GridPoint>& grid, const PipelineData& data,
                           const ModelConfig& model, std::size_t repeats,
                           const std::function<void(const std::string&, std::size_t, double)>& on_run) {
  require(repeats >= 1, ErrorKind::invalid_argument, "ablation needs at least one repeat");
  AblationTable t;
  t.axis = axis;
  for (const auto& p : grid) {
    AblationRow row;
    row.setting = p.setting;
    for (std::size_t r = 0; r < repeats; ++r) {
      TrainConfig cfg = p.cfg;
      cfg.seed = derive_seed(p.cfg.seed, r);
      const double acc = run_pipeline(data, model, cfg).supervised.accuracy;
      row.accuracies.push_back(acc);
      if (on_run) on_run(p.setting, r, acc);
    }
    row.summary = mean_std(row.accuracies);
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_ablation_csv(const AblationTable& t, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write " + path.string());
  out << "setting,repeat,accuracy\n";
  out.precision(17);
  for (const auto& row : t.rows)
    for (std::size_t r = 0; r < row.accuracies.size(); ++r) out << row.setting << ',' << r << ',' << row.accuracies[r] << '\n';
}

nlohmann::json to_json(const AblationTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"setting", r.setting},
                    {"accuracies", r.accuracies},
                    {"mean", r.summary.mean},
                    {"std", r.summary.std},
                    {"repeats", r.summary.n}});
  }
  return {{"axis", t.axis}, {"rows", rows}};
}

PipelineData build_pipeline_data(const DataConfig& cfg) {
  cfg.validate();
  const LabeledImageSet train = source_images(cfg, true);
  const LabeledImageSet test = source_images(cfg, false);
  PipelineData d;
  d.pretrain = make_pairs(train, augment_spec(cfg, derive_seed(cfg.seed, 3)), cfg.n_pretrain_neg, 0,
                          derive_seed(cfg.seed, 4));
  const PairDataset pos = make_pairs(train, augment_spec(cfg, derive_seed(cfg.seed, 5)), 0, cfg.n_finetune_pos,
                                     derive_seed(cfg.seed, 6));
  d.finetune = d.pretrain;
  d.finetune.pairs.insert(d.finetune.pairs.end(), pos.pairs.begin(), pos.pairs.end());
  d.finetune.labels.insert(d.finetune.labels.end(), pos.labels.begin(), pos.labels.end());
  d.finetune.meta.insert(d.finetune.meta.end(), pos.meta.begin(), pos.meta.end());
  d.test = make_pairs(test, augment_spec(cfg, derive_seed(cfg.seed, 7)), cfg.n_test_neg, cfg.n_test_pos,
                      derive_seed(cfg.seed, 8));
  d.pretrain.split = "pretrain";
  d.finetune.split = "finetune";
  d.test.split = "test";
  return d;
}

}  // namespace pairdis
