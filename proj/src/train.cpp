#include "pairdis/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "pairdis/config.hpp"
#include "pairdis/error.hpp"
#include "pairdis/random.hpp"

namespace pairdis {

namespace {

// Seed streams derived from TrainConfig::seed.
enum Stream : std::uint64_t {
  init_stream = 1,
  undersample_stream = 3,
  classifier_stream = 4,
  shuffle_stream = 1000,
  noise_stream = 2000,
  finetune_shuffle_stream = 5000,
};

using Clock = std::chrono::steady_clock;

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  return idx;
}

// Batches of `size`; a trailing batch smaller than `min_last` is dropped.
std::vector<std::vector<std::size_t>> batches(const std::vector<std::size_t>& order, std::size_t size,
                                              std::size_t min_last) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += size) {
    const std::size_t end = std::min(order.size(), i + size);
    if (end - i < min_last) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Tensor gaussian(Shape shape, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

// x_A rows followed by x_B rows: [2b, 1, h, w]
Tensor stacked_pair_batch(const PairDataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<const Image*> imgs;
  imgs.reserve(2 * idx.size());
  for (std::size_t i : idx) imgs.push_back(&ds.pairs[i].a);
  for (std::size_t i : idx) imgs.push_back(&ds.pairs[i].b);
  return images_to_tensor(imgs);
}

EncoderOut rows_of(const EncoderOut& e, std::size_t begin, std::size_t end) {
  return {slice(e.mu_c, 0, begin, end), slice(e.logvar_c, 0, begin, end), slice(e.sigma_c, 0, begin, end),
          slice(e.mu_s, 0, begin, end), slice(e.logvar_s, 0, begin, end), slice(e.sigma_s, 0, begin, end)};
}

bool is_numeric_failure(const Error& e) {
  return e.kind() == ErrorKind::non_finite || e.kind() == ErrorKind::poisoned_gradient;
}

void log_step(const TrainHooks& hooks, std::size_t epoch, std::size_t step, const nlohmann::json& body) {
  if (!hooks.log) return;
  nlohmann::json j = body;
  j["epoch"] = epoch;
  j["step"] = step;
  *hooks.log << j.dump() << '\n';
}

AdamState adam_state(double lr, double wd) {
  AdamState s;
  s.hyper.lr = lr;
  s.hyper.weight_decay = wd;
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  loss.validate();
  require(batch_size >= 2, ErrorKind::invalid_argument, "batch_size must be >= 2");
  require(lr > 0.0, ErrorKind::invalid_argument, "lr must be positive");
  require(weight_decay >= 0.0, ErrorKind::invalid_argument, "weight_decay must be >= 0");
  require(encoder_lr_scale_finetune >= 0.0 && encoder_lr_scale_finetune <= 1.0, ErrorKind::invalid_argument,
          "encoder_lr_scale_finetune must lie in [0,1]");
  require(finetune_batch_size >= 1, ErrorKind::invalid_argument, "finetune_batch_size must be >= 1");
  for (std::size_t h : classifier_hidden) require(h >= 1, ErrorKind::invalid_argument, "classifier widths must be >= 1");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr", cfg.lr},
          {"weight_decay", cfg.weight_decay},
          {"loss", to_json(cfg.loss)},
          {"seed", cfg.seed},
          {"kl_anneal", cfg.kl_anneal},
          {"anneal_epochs", cfg.anneal_epochs},
          {"encoder_lr_scale_finetune", cfg.encoder_lr_scale_finetune},
          {"finetune_epochs", cfg.finetune_epochs},
          {"finetune_batch_size", cfg.finetune_batch_size},
          {"classifier_hidden", cfg.classifier_hidden}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& path) {
  ConfigReader r(j, path);
  r.allow_only({"epochs", "batch_size", "lr", "weight_decay", "loss", "seed", "kl_anneal", "anneal_epochs",
                "encoder_lr_scale_finetune", "finetune_epochs", "finetune_batch_size", "classifier_hidden"});
  TrainConfig cfg;
  cfg.epochs = r.get<std::size_t>("epochs", cfg.epochs);
  cfg.batch_size = r.get<std::size_t>("batch_size", cfg.batch_size);
  cfg.lr = r.get<double>("lr", cfg.lr);
  cfg.weight_decay = r.get<double>("weight_decay", cfg.weight_decay);
  if (r.has("loss")) cfg.loss = loss_config_from_json(j.at("loss"), r.key_path("loss"));
  cfg.seed = r.get<std::uint64_t>("seed", cfg.seed);
  cfg.kl_anneal = r.get<bool>("kl_anneal", cfg.kl_anneal);
  cfg.anneal_epochs = r.get<std::size_t>("anneal_epochs", cfg.anneal_epochs);
  cfg.encoder_lr_scale_finetune = r.get<double>("encoder_lr_scale_finetune", cfg.encoder_lr_scale_finetune);
  cfg.finetune_epochs = r.get<std::size_t>("finetune_epochs", cfg.finetune_epochs);
  cfg.finetune_batch_size = r.get<std::size_t>("finetune_batch_size", cfg.finetune_batch_size);
  if (r.has("classifier_hidden")) {
    const auto& h = j.at("classifier_hidden");
    require(h.is_array(), ErrorKind::config_error, r.key_path("classifier_hidden") + ": expected array");
    cfg.classifier_hidden.clear();
    for (std::size_t i = 0; i < h.size(); ++i) {
      cfg.classifier_hidden.push_back(ConfigReader::convert<std::size_t>(
          h[i], r.key_path("classifier_hidden") + "[" + std::to_string(i) + "]"));
    }
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config_error, path + ": " + e.what());
  }
  return cfg;
}

double kl_anneal_weight(std::size_t epoch, const TrainConfig& cfg) {
  if (!cfg.kl_anneal) return 1.0;
  const std::size_t span = cfg.anneal_epochs ? cfg.anneal_epochs : cfg.epochs;
  if (span == 0) return 1.0;
  return std::min(static_cast<double>(epoch) / static_cast<double>(span), 1.0);
}

ClassifierParams init_classifier(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::uint64_t seed) {
  ClassifierParams c;
  Rng rng(derive_seed(seed, 0xc1a5));
  std::size_t in = input_dim;
  std::vector<std::size_t> widths = hidden;
  widths.push_back(2);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const bool last = i + 1 == widths.size();
    const double bound = last ? 1.0 / std::sqrt(double(in)) : std::sqrt(6.0 / double(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor w({widths[i], in});
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = u(rng);
    const std::string name = "fc" + std::to_string(i + 1);
    c.layers[name + ".w"] = std::move(w);
    c.layers[name + ".b"] = Tensor({widths[i]});
    in = widths[i];
  }
  return c;
}

Var classifier_forward(Var features, const BoundParams& clf) {
  Var h = features;
  for (std::size_t i = 1;; ++i) {
    const std::string name = "fc" + std::to_string(i);
    const auto w = clf.find(name + ".w");
    if (w == clf.end()) break;
    if (i > 1) h = relu(h);
    h = dense(h, w->second, clf.at(name + ".b"));
  }
  require(h.shape().size() == 2 && h.shape()[1] == 2, ErrorKind::shape_error,
          "classifier must end in 2 logits, got " + shape_str(h.shape()));
  return h;
}

Var change_probability(Var logits) {
  const std::size_t b = logits.shape()[0];
  Var diff = slice(logits, 1, 1, 2) - slice(logits, 1, 0, 1);
  return reshape(sigmoid(diff), {b});
}

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j = deterministic_view(r);
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

nlohmann::json deterministic_view(const RunReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    nlohmann::json row = {{"epoch", e.epoch}, {"steps", e.steps}, {"kl_weight", e.kl_weight}};
    if (r.phase == "finetune") {
      row["cross_entropy"] = e.cross_entropy;
    } else {
      row["loss"] = to_json(e.loss);
    }
    epochs.push_back(std::move(row));
  }
  return {{"phase", r.phase},
          {"epochs", std::move(epochs)},
          {"configured_epochs", r.configured_epochs},
          {"steps", r.steps},
          {"seeds", r.seeds},
          {"config", r.config},
          {"metrics", r.metrics},
          {"checkpoint", r.checkpoint},
          {"halt_reason", r.halt_reason}};
}

PretrainResult pretrain(const PairDataset& neg_pairs, const ModelConfig& model, const TrainConfig& cfg,
                        std::optional<ModelParams> init, const TrainHooks& hooks) {
  cfg.validate();
  model.validate();
  require(model.in_channels == 1, ErrorKind::invalid_argument, "pretrain needs a single-channel model");
  for (std::size_t i = 0; i < neg_pairs.size(); ++i) {
    if (neg_pairs.labels[i] != 0) {
      fail(ErrorKind::contract_violation,
           "pretraining takes negative pairs only; pair " + std::to_string(i) + " is labeled positive");
    }
  }
  const auto t0 = Clock::now();
  const std::uint64_t init_seed = derive_seed(cfg.seed, init_stream);
  PretrainResult res{init ? std::move(*init) : init_params(model, init_seed), {}};
  RunReport& rep = res.report;
  rep.phase = "pretrain";
  rep.configured_epochs = cfg.epochs;
  rep.seeds = {cfg.seed, init_seed};
  rep.config = {{"model", to_json(model)}, {"train", to_json(cfg)}};

  AdamState enc_state = adam_state(cfg.lr, cfg.weight_decay);
  AdamState dec_state = adam_state(cfg.lr, cfg.weight_decay);
  const std::size_t min_last = 2;

  for (std::size_t epoch = 0; epoch < cfg.epochs && !rep.halted(); ++epoch) {
    LossConfig lc = cfg.loss;
    lc.kl_weight = kl_anneal_weight(epoch, cfg);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.kl_weight = lc.kl_weight;
    const auto order = shuffled(neg_pairs.size(), derive_seed(cfg.seed, shuffle_stream + epoch));
    const auto plan = batches(order, cfg.batch_size, min_last);
    const std::uint64_t noise_seed = derive_seed(cfg.seed, noise_stream + epoch);

    for (std::size_t s = 0; s < plan.size(); ++s) {
      const auto& idx = plan[s];
      const std::size_t b = idx.size();
      try {
        Graph g;
        const BoundParams enc = bind_params(g, res.params.encoder, true);
        const BoundParams dec = bind_params(g, res.params.decoder, true);
        Var x = g.constant(stacked_pair_batch(neg_pairs, idx));
        EncoderOut e = encoder_forward(x, enc, model);
        Rng rng(derive_seed(noise_seed, s));
        Var eps_c = g.constant(gaussian({2 * b, model.latent_common}, rng));
        Var eps_s = g.constant(gaussian({2 * b, model.latent_specific}, rng));
        Var x_hat = decoder_forward(reparameterize(e.mu_c, e.sigma_c, eps_c), reparameterize(e.mu_s, e.sigma_s, eps_s),
                                    dec, model);
        Branch ba{slice(x, 0, 0, b), slice(x_hat, 0, 0, b), rows_of(e, 0, b)};
        Branch bb{slice(x, 0, b, 2 * b), slice(x_hat, 0, b, 2 * b), rows_of(e, b, 2 * b)};
        TotalLoss tl = total_loss(ba, bb, lc);
        require(tl.breakdown.recomposition_error(lc) < 1e-9, ErrorKind::contract_violation,
                "loss breakdown does not recompose to the total");
        g.backward(tl.total);
        NamedTensors ge = collect_grads(g, enc), gd = collect_grads(g, dec);
        adam_step(res.params.encoder, ge, enc_state);
        adam_step(res.params.decoder, gd, dec_state);
        rec.loss += tl.breakdown;
        ++rec.steps;
        ++rep.steps;
        log_step(hooks, epoch, rep.steps, {{"phase", "pretrain"}, {"kl_weight", lc.kl_weight}, {"loss", to_json(tl.breakdown)}});
      } catch (const Error& err) {
        if (!is_numeric_failure(err)) throw;
        rep.halt_reason = "epoch " + std::to_string(epoch) + " step " + std::to_string(s) + ": " + err.what();
        break;
      }
    }
    if (rec.steps) rec.loss = rec.loss.scaled(1.0 / static_cast<double>(rec.steps));
    rep.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  if (!rep.epochs.empty()) rep.metrics["final_loss"] = to_json(rep.epochs.back().loss);
  rep.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return res;
}

FinetuneResult finetune(const ModelParams& params, const PairDataset& labeled, const ModelConfig& model,
                        const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  model.validate();
  require(labeled.n_pos() >= 1, ErrorKind::invalid_argument, "fine-tuning needs at least one positive pair");
  require(labeled.n_neg() >= 1, ErrorKind::invalid_argument, "fine-tuning needs at least one negative pair");
  const auto t0 = Clock::now();
  const std::uint64_t us_seed = derive_seed(cfg.seed, undersample_stream);
  const std::uint64_t clf_seed = derive_seed(cfg.seed, classifier_stream);
  const PairDataset bal = undersample_negatives(labeled, us_seed);

  FinetuneResult res{params, init_classifier(2 * model.latent_common, cfg.classifier_hidden, clf_seed), {}};
  RunReport& rep = res.report;
  rep.phase = "finetune";
  rep.configured_epochs = cfg.finetune_epochs;
  rep.seeds = {cfg.seed, us_seed, clf_seed};
  rep.config = {{"model", to_json(model)}, {"train", to_json(cfg)}};
  rep.metrics["n_pos"] = bal.n_pos();
  rep.metrics["n_neg"] = bal.n_neg();

  const double enc_lr = cfg.lr * cfg.encoder_lr_scale_finetune;
  const bool train_encoder = enc_lr > 0.0;
  AdamState enc_state = adam_state(train_encoder ? enc_lr : 1.0, cfg.weight_decay);
  AdamState clf_state = adam_state(cfg.lr, cfg.weight_decay);

  for (std::size_t epoch = 0; epoch < cfg.finetune_epochs && !rep.halted(); ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const auto order = shuffled(bal.size(), derive_seed(cfg.seed, finetune_shuffle_stream + epoch));
    const auto plan = batches(order, cfg.finetune_batch_size, 1);
    for (std::size_t s = 0; s < plan.size(); ++s) {
      const auto& idx = plan[s];
      const std::size_t b = idx.size();
      try {
        Graph g;
        const BoundParams enc = bind_params(g, res.params.encoder, train_encoder);
        const BoundParams clf = bind_params(g, res.classifier.layers, true);
        EncoderOut e = encoder_forward(g.constant(stacked_pair_batch(bal, idx)), enc, model);
        Var feat = concat({slice(e.mu_c, 0, 0, b), slice(e.mu_c, 0, b, 2 * b)}, 1);
        Tensor t({b});
        for (std::size_t i = 0; i < b; ++i) t[i] = bal.labels[idx[i]];
        Var ce = cross_entropy(change_probability(classifier_forward(feat, clf)), g.constant(std::move(t)));
        g.backward(ce);
        NamedTensors gc = collect_grads(g, clf);
        if (train_encoder) {
          NamedTensors ge = collect_grads(g, enc);
          adam_step(res.params.encoder, ge, enc_state);
        }
        adam_step(res.classifier.layers, gc, clf_state);
        const double v = ce.value().item();
        rec.cross_entropy += v;
        ++rec.steps;
        ++rep.steps;
        log_step(hooks, epoch, rep.steps, {{"phase", "finetune"}, {"cross_entropy", v}});
      } catch (const Error& err) {
        if (!is_numeric_failure(err)) throw;
        rep.halt_reason = "epoch " + std::to_string(epoch) + " step " + std::to_string(s) + ": " + err.what();
        break;
      }
    }
    if (rec.steps) rec.cross_entropy /= static_cast<double>(rec.steps);
    rep.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  if (!rep.epochs.empty()) rep.metrics["final_cross_entropy"] = rep.epochs.back().cross_entropy;
  rep.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return res;
}

PretrainResult train_concat_vae(const PairDataset& neg_pairs, const ModelConfig& model, const TrainConfig& cfg,
                                const TrainHooks& hooks) {
  cfg.validate();
  model.validate();
  require(model.in_channels == 2, ErrorKind::invalid_argument, "concatenated-pair VAE needs in_channels == 2");
  for (int label : neg_pairs.labels) {
    require(label == 0, ErrorKind::contract_violation, "concatenated-pair VAE trains on negative pairs only");
  }
  const auto t0 = Clock::now();
  const std::uint64_t init_seed = derive_seed(cfg.seed, init_stream);
  PretrainResult res{init_params(model, init_seed), {}};
  RunReport& rep = res.report;
  rep.phase = "concat-vae";
  rep.configured_epochs = cfg.epochs;
  rep.seeds = {cfg.seed, init_seed};
  rep.config = {{"model", to_json(model)}, {"train", to_json(cfg)}};
  AdamState enc_state = adam_state(cfg.lr, cfg.weight_decay);
  AdamState dec_state = adam_state(cfg.lr, cfg.weight_decay);

  for (std::size_t epoch = 0; epoch < cfg.epochs && !rep.halted(); ++epoch) {
    const double kw = kl_anneal_weight(epoch, cfg);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.kl_weight = kw;
    const auto plan = batches(shuffled(neg_pairs.size(), derive_seed(cfg.seed, shuffle_stream + epoch)),
                              cfg.batch_size, 1);
    const std::uint64_t noise_seed = derive_seed(cfg.seed, noise_stream + epoch);
    for (std::size_t s = 0; s < plan.size(); ++s) {
      const auto& idx = plan[s];
      try {
        Graph g;
        const BoundParams enc = bind_params(g, res.params.encoder, true);
        const BoundParams dec = bind_params(g, res.params.decoder, true);
        std::vector<const ImagePair*> ps;
        for (std::size_t i : idx) ps.push_back(&neg_pairs.pairs[i]);
        Var x = g.constant(pairs_to_tensor(ps));
        EncoderOut e = encoder_forward(x, enc, model);
        Rng rng(derive_seed(noise_seed, s));
        Var eps_c = g.constant(gaussian({idx.size(), model.latent_common}, rng));
        Var eps_s = g.constant(gaussian({idx.size(), model.latent_specific}, rng));
        Var x_hat = decoder_forward(reparameterize(e.mu_c, e.sigma_c, eps_c), reparameterize(e.mu_s, e.sigma_s, eps_s),
                                    dec, model);
        VaeTerms v = vae_loss(x, x_hat, e, kw);
        g.backward(v.total);
        NamedTensors ge = collect_grads(g, enc), gd = collect_grads(g, dec);
        adam_step(res.params.encoder, ge, enc_state);
        adam_step(res.params.decoder, gd, dec_state);
        LossBreakdown br;
        br.vae_A = br.total = v.total.value().item();
        br.recon_A = v.recon.value().item();
        br.kl_c_A = v.kl_c.value().item();
        br.kl_s_A = v.kl_s.value().item();
        rec.loss += br;
        ++rec.steps;
        ++rep.steps;
        log_step(hooks, epoch, rep.steps, {{"phase", "concat-vae"}, {"kl_weight", kw}, {"loss", to_json(br)}});
      } catch (const Error& err) {
        if (!is_numeric_failure(err)) throw;
        rep.halt_reason = "epoch " + std::to_string(epoch) + " step " + std::to_string(s) + ": " + err.what();
        break;
      }
    }
    if (rec.steps) rec.loss = rec.loss.scaled(1.0 / static_cast<double>(rec.steps));
    rep.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  if (!rep.epochs.empty()) rep.metrics["final_loss"] = to_json(rep.epochs.back().loss);
  rep.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return res;
}

}  // namespace pairdis
