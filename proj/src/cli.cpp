#include "pairdis/cli.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pairdis/checkpoint.hpp"
#include "pairdis/config.hpp"
#include "pairdis/data.hpp"
#include "pairdis/error.hpp"
#include "pairdis/eval.hpp"
#include "pairdis/hash.hpp"
#include "pairdis/io.hpp"
#include "pairdis/model.hpp"
#include "pairdis/train.hpp"
#include "pairdis/viz.hpp"

namespace pairdis {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::pair<std::string, std::string>> kCommandHelp = {
    {"gen-data", "render pair datasets into <out>/data"},
    {"pretrain", "train the twin VAE on negative pairs"},
    {"finetune", "train the change classifier on labeled pairs"},
    {"eval", "supervised accuracy on the test pairs"},
    {"detect-unsup", "2-means change detection without labels"},
    {"ablate", "pretrain, finetune and evaluate over a settings grid"},
    {"interpolate", "latent interpolation grids as PNG"},
    {"project", "feature CSV and 2-D PCA projections"},
    {"report", "summarise every manifest in a run directory"},
};

bool known_command(const std::string& name) {
  return std::any_of(kCommandHelp.begin(), kCommandHelp.end(), [&](const auto& c) { return c.first == name; });
}

struct Options {
  std::string config_path;
  fs::path out = "run";
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string run_dir;
};

struct AblateSettings {
  std::string axis = "distance_kind";
  std::vector<std::string> settings;
  std::size_t repeats = 3;
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  double threshold = 0.5;
  std::string detect_method = "kmeans";
  AblateSettings ablate;
  std::string interp_which = "both";
  std::size_t interp_steps = 8;
  std::vector<std::size_t> interp_pairs = {0};
  std::size_t project_images = 1000;
  json resolved;
};

json section(const json& j, const char* key) { return j.contains(key) ? j.at(key) : json::object(); }

RunConfig load_config(const Options& opt) {
  const json j = opt.config_path.empty() ? json::object() : read_json_file(opt.config_path);
  const ConfigReader root(j, "");
  root.allow_only({"data", "model", "train", "eval", "detect", "ablate", "interpolate", "project"});
  RunConfig c;
  c.data = data_config_from_json(section(j, "data"));
  c.model = model_config_from_json(section(j, "model"));
  c.train = train_config_from_json(section(j, "train"));
  if (opt.seed) c.train.seed = *opt.seed;

  const ConfigReader ev = root.child("eval");
  ev.allow_only({"threshold"});
  c.threshold = ev.get("threshold", c.threshold);
  require(c.threshold >= 0 && c.threshold <= 1, ErrorKind::config_error, "eval.threshold: expected value in [0,1]");

  const ConfigReader de = root.child("detect");
  de.allow_only({"method"});
  c.detect_method = de.get("method", c.detect_method);
  require(c.detect_method == "kmeans" || c.detect_method == "vae_rec", ErrorKind::config_error,
          "detect.method: expected kmeans or vae_rec");

  const ConfigReader ab = root.child("ablate");
  ab.allow_only({"axis", "settings", "repeats"});
  c.ablate.axis = ab.get("axis", c.ablate.axis);
  try {
    parse_axis(c.ablate.axis);
  } catch (const Error& e) {
    fail(ErrorKind::config_error, std::string("ablate.axis: ") + e.what());
  }
  c.ablate.settings = ab.get("settings", std::vector<std::string>{});
  if (c.ablate.settings.empty() && parse_axis(c.ablate.axis) == AblationAxis::distance_kind)
    for (DistanceKind k : kAllDistances) c.ablate.settings.emplace_back(to_string(k));
  c.ablate.repeats = ab.get("repeats", c.ablate.repeats);
  require(c.ablate.repeats >= 1, ErrorKind::config_error, "ablate.repeats: expected >= 1");

  const ConfigReader in = root.child("interpolate");
  in.allow_only({"which", "steps", "pairs"});
  c.interp_which = in.get("which", c.interp_which);
  require(c.interp_which == "common" || c.interp_which == "specific" || c.interp_which == "both",
          ErrorKind::config_error, "interpolate.which: expected common, specific or both");
  c.interp_steps = in.get("steps", c.interp_steps);
  require(c.interp_steps >= 2, ErrorKind::config_error, "interpolate.steps: expected >= 2");
  c.interp_pairs = in.get("pairs", c.interp_pairs);

  const ConfigReader pr = root.child("project");
  pr.allow_only({"n_images"});
  c.project_images = pr.get("n_images", c.project_images);

  c.resolved = {{"data", to_json(c.data)},
                {"model", to_json(c.model)},
                {"train", to_json(c.train)},
                {"eval", {{"threshold", c.threshold}}},
                {"detect", {{"method", c.detect_method}}},
                {"ablate", {{"axis", c.ablate.axis}, {"settings", c.ablate.settings}, {"repeats", c.ablate.repeats}}},
                {"interpolate", {{"which", c.interp_which}, {"steps", c.interp_steps}, {"pairs", c.interp_pairs}}},
                {"project", {{"n_images", c.project_images}}}};
  return c;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// One subcommand invocation: collects artifacts and writes the manifest.
class Run {
 public:
  Run(std::string command, Options opt, RunConfig cfg)
      : command_(std::move(command)), opt_(std::move(opt)), cfg_(std::move(cfg)), started_(utc_now()) {
    config_hash_ = sha256_hex(cfg_.resolved.dump());
    fs::create_directories(opt_.out);
    const fs::path resolved = opt_.out / (command_ + ".config.json");
    write_json_file(resolved, cfg_.resolved);
    add(resolved);
  }

  const Options& opt() const { return opt_; }
  const RunConfig& cfg() const { return cfg_; }
  const std::string& config_hash() const { return config_hash_; }
  fs::path path(const fs::path& rel) const { return opt_.out / rel; }

  void add(const fs::path& p) { artifacts_.push_back(p); }
  void seeds(const std::vector<std::uint64_t>& s) { seeds_.insert(seeds_.end(), s.begin(), s.end()); }
  json& metrics() { return metrics_; }

  PairDataset load_split(const std::string& name) {
    const fs::path p = path(fs::path("data") / (name + ".bin"));
    require(fs::exists(p), ErrorKind::io_error, "missing " + p.string() + " (run gen-data first)");
    datasets_[name] = sha256_file(p);
    return load_pairs(p);
  }
  void record_dataset(const std::string& name, const fs::path& p) { datasets_[name] = sha256_file(p); }

  fs::path checkpoint_or(const std::string& fallback) const {
    return opt_.checkpoint.empty() ? path(fs::path("checkpoints") / fallback) : fs::path(opt_.checkpoint);
  }

  Checkpoint load_model_checkpoint(const fs::path& p, const ModelConfig& model) {
    Checkpoint ck = load_checkpoint(p);
    const json want = to_json(model);
    require(!ck.meta.extra.contains("model") || ck.meta.extra.at("model") == want, ErrorKind::config_error,
            "model: config differs from the one " + p.string() + " was trained with");
    checkpoints_.push_back(p.string());
    return ck;
  }

  void save_model_checkpoint(const fs::path& rel, const NamedTensors& tensors, const RunReport& report,
                             const ModelConfig& model, const std::string& kind) {
    CheckpointMeta meta;
    meta.config_hash = config_hash_;
    meta.seeds = report.seeds;
    meta.step = static_cast<std::int64_t>(report.steps);
    meta.extra = {{"model", to_json(model)}, {"kind", kind}};
    const fs::path p = path(rel);
    save_checkpoint(p, tensors, meta);
    add(p);
    add(manifest_path(p));
  }

  json finish() {
    json arts = json::array();
    for (const auto& a : artifacts_) {
      require(fs::exists(a), ErrorKind::io_error, "artifact missing at completion: " + a.string());
      arts.push_back({{"path", fs::relative(a, opt_.out).generic_string()}, {"sha256", sha256_file(a)}});
    }
    std::string joined;
    for (const auto& [k, v] : datasets_) joined += k + "=" + v + ";";
    json m = {{"command", command_},
              {"config_path", opt_.config_path.empty() ? json(nullptr) : json(opt_.config_path)},
              {"config_hash", config_hash_},
              {"dataset_hash", datasets_.empty() ? json(nullptr) : json(sha256_hex(joined))},
              {"datasets", datasets_},
              {"checkpoints", checkpoints_},
              {"seeds", seeds_},
              {"out_dir", opt_.out.generic_string()},
              {"artifacts", arts},
              {"metrics", metrics_},
              {"started", started_},
              {"finished", utc_now()}};
    std::ofstream log(opt_.out / "manifests.jsonl", std::ios::app);
    require(static_cast<bool>(log), ErrorKind::io_error, "cannot append to manifests.jsonl");
    log << m.dump() << '\n';
    return m;
  }

 private:
  std::string command_;
  Options opt_;
  RunConfig cfg_;
  std::string started_;
  std::string config_hash_;
  std::vector<fs::path> artifacts_;
  std::vector<std::uint64_t> seeds_;
  std::map<std::string, std::string> datasets_;
  std::vector<std::string> checkpoints_;
  json metrics_ = json::object();
};

NamedTensors with_prefix(const NamedTensors& t, const std::string& prefix) {
  NamedTensors out;
  for (const auto& [k, v] : t) out.emplace(prefix + k, v);
  return out;
}

ClassifierParams classifier_from(const NamedTensors& t) {
  ClassifierParams c;
  for (const auto& [k, v] : t)
    if (k.starts_with("classifier/")) c.layers.emplace(k.substr(11), v);
  require(!c.layers.empty(), ErrorKind::contract_violation, "checkpoint holds no classifier tensors");
  return c;
}

void write_curve(const fs::path& p, const RunReport& r, bool pretraining) {
  std::ofstream out(p);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write " + p.string());
  out.precision(17);
  if (pretraining) {
    out << "epoch,steps,kl_weight,total,vae_A,vae_B,recon_A,recon_B,kl_c_A,kl_c_B,kl_s_A,kl_s_B,sim,act_sparsity,"
           "act_invmax\n";
    for (const auto& e : r.epochs) {
      const LossBreakdown& l = e.loss;
      out << e.epoch << ',' << e.steps << ',' << e.kl_weight << ',' << l.total << ',' << l.vae_A << ',' << l.vae_B
          << ',' << l.recon_A << ',' << l.recon_B << ',' << l.kl_c_A << ',' << l.kl_c_B << ',' << l.kl_s_A << ','
          << l.kl_s_B << ',' << l.sim << ',' << l.act_sparsity << ',' << l.act_invmax << '\n';
    }
  } else {
    out << "epoch,steps,cross_entropy\n";
    for (const auto& e : r.epochs) out << e.epoch << ',' << e.steps << ',' << e.cross_entropy << '\n';
  }
}

void halt_check(const RunReport& r) {
  if (r.halted()) fail(ErrorKind::non_finite, r.phase + " halted: " + r.halt_reason);
}

json cmd_gen_data(Run& run) {
  const PipelineData d = build_pipeline_data(run.cfg().data);
  json counts = json::object();
  std::size_t violations = 0;
  for (const auto& [name, ds] : {std::pair{"pretrain", &d.pretrain}, {"finetune", &d.finetune}, {"test", &d.test}}) {
    const fs::path p = run.path(fs::path("data") / (std::string(name) + ".bin"));
    save_pairs(*ds, p);
    run.add(p);
    run.add(p.string() + ".json");
    run.record_dataset(name, p);
    violations += count_label_violations(*ds);
    counts[name] = {{"pairs", ds->size()}, {"positives", ds->n_pos()}, {"negatives", ds->n_neg()}};
  }
  run.seeds({run.cfg().data.seed});
  run.metrics() = {{"counts", counts}, {"label_violations", violations}};
  require(violations == 0, ErrorKind::contract_violation, "generated pairs violate the label rule");
  return run.finish();
}

json cmd_pretrain(Run& run) {
  const PairDataset ds = run.load_split("pretrain");
  std::optional<ModelParams> init;
  if (!run.opt().checkpoint.empty())
    init = unflatten(run.load_model_checkpoint(run.opt().checkpoint, run.cfg().model).tensors);
  const fs::path log_path = run.path("pretrain_log.jsonl");
  std::ofstream log(log_path);
  TrainHooks hooks;
  hooks.log = &log;
  PretrainResult r = pretrain(ds, run.cfg().model, run.cfg().train, init, hooks);
  log.close();
  run.add(log_path);
  r.report.checkpoint = run.path("checkpoints/pretrained.bin").generic_string();
  run.save_model_checkpoint("checkpoints/pretrained.bin", flatten(r.params), r.report, run.cfg().model, "twin_vae");
  write_json_file(run.path("pretrain_report.json"), to_json(r.report));
  run.add(run.path("pretrain_report.json"));
  write_curve(run.path("pretrain_curve.csv"), r.report, true);
  run.add(run.path("pretrain_curve.csv"));
  run.seeds(r.report.seeds);
  run.metrics() = r.report.metrics;
  json m = run.finish();
  halt_check(r.report);
  return m;
}

json cmd_finetune(Run& run) {
  const PairDataset ds = run.load_split("finetune");
  const Checkpoint ck = run.load_model_checkpoint(run.checkpoint_or("pretrained.bin"), run.cfg().model);
  const fs::path log_path = run.path("finetune_log.jsonl");
  std::ofstream log(log_path);
  TrainHooks hooks;
  hooks.log = &log;
  FinetuneResult r = finetune(unflatten(ck.tensors), ds, run.cfg().model, run.cfg().train, hooks);
  log.close();
  run.add(log_path);
  NamedTensors all = flatten(r.params);
  all.merge(with_prefix(r.classifier.layers, "classifier/"));
  r.report.checkpoint = run.path("checkpoints/finetuned.bin").generic_string();
  run.save_model_checkpoint("checkpoints/finetuned.bin", all, r.report, run.cfg().model, "finetuned");
  write_json_file(run.path("finetune_report.json"), to_json(r.report));
  run.add(run.path("finetune_report.json"));
  write_curve(run.path("finetune_curve.csv"), r.report, false);
  run.add(run.path("finetune_curve.csv"));
  run.seeds(r.report.seeds);
  run.metrics() = r.report.metrics;
  json m = run.finish();
  halt_check(r.report);
  return m;
}

json cmd_eval(Run& run) {
  const PairDataset test = run.load_split("test");
  const Checkpoint ck = run.load_model_checkpoint(run.checkpoint_or("finetuned.bin"), run.cfg().model);
  const ModelParams params = unflatten(ck.tensors);
  const ClassifierParams clf = classifier_from(ck.tensors);
  const std::vector<double> prob = classify_pairs(test, params, clf, run.cfg().model);
  std::vector<int> pred(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i) pred[i] = prob[i] >= run.cfg().threshold ? 1 : 0;
  const EvalResult r = score_predictions(pred, test.labels);

  const fs::path csv = run.path("predictions.csv");
  std::ofstream out(csv);
  out.precision(17);
  out << "index,label,probability,predicted\n";
  for (std::size_t i = 0; i < prob.size(); ++i) out << i << ',' << test.labels[i] << ',' << prob[i] << ',' << pred[i] << '\n';
  out.close();
  run.add(csv);
  write_json_file(run.path("eval.json"), to_json(r));
  run.add(run.path("eval.json"));
  run.seeds(ck.meta.seeds);
  run.metrics() = to_json(r);
  return run.finish();
}

json cmd_detect(Run& run) {
  const PairDataset test = run.load_split("test");
  DetectResult r;
  if (run.cfg().detect_method == "kmeans") {
    const Checkpoint ck = run.load_model_checkpoint(run.checkpoint_or("pretrained.bin"), run.cfg().model);
    run.seeds(ck.meta.seeds);
    r = kmeans_detect(test, unflatten(ck.tensors), run.cfg().model);
  } else {
    ModelConfig concat = run.cfg().model;
    concat.in_channels = 2;
    ModelParams params;
    if (!run.opt().checkpoint.empty()) {
      params = unflatten(run.load_model_checkpoint(run.opt().checkpoint, concat).tensors);
    } else {
      const PairDataset neg = run.load_split("pretrain");
      PretrainResult t = train_concat_vae(neg, concat, run.cfg().train);
      halt_check(t.report);
      run.save_model_checkpoint("checkpoints/concat_vae.bin", flatten(t.params), t.report, concat, "concat_vae");
      run.seeds(t.report.seeds);
      params = std::move(t.params);
    }
    r = vae_rec_detect(test, params, concat);
  }
  const fs::path csv = run.path("detect_scores.csv");
  std::ofstream out(csv);
  out.precision(17);
  out << "index,label,score,predicted\n";
  for (std::size_t i = 0; i < r.scores.size(); ++i)
    out << i << ',' << test.labels[i] << ',' << r.scores[i] << ',' << r.split.labels[i] << '\n';
  out.close();
  run.add(csv);
  json j = to_json(r.eval);
  j["method"] = run.cfg().detect_method;
  j["threshold"] = r.split.threshold;
  j["centroid_low"] = r.split.centroid_low;
  j["centroid_high"] = r.split.centroid_high;
  write_json_file(run.path("detect.json"), j);
  run.add(run.path("detect.json"));
  run.metrics() = j;
  return run.finish();
}

json cmd_ablate(Run& run) {
  PipelineData d{run.load_split("pretrain"), run.load_split("finetune"), run.load_split("test")};
  const AblateSettings& a = run.cfg().ablate;
  const auto grid = make_grid(parse_axis(a.axis), a.settings, run.cfg().train);
  const AblationTable t = run_ablation(a.axis, grid, d, run.cfg().model, a.repeats);
  write_ablation_csv(t, run.path("ablation.csv"));
  run.add(run.path("ablation.csv"));
  write_json_file(run.path("ablation.json"), to_json(t));
  run.add(run.path("ablation.json"));
  run.seeds({run.cfg().train.seed});
  run.metrics() = to_json(t);
  return run.finish();
}

json cmd_interpolate(Run& run) {
  const PairDataset test = run.load_split("test");
  const Checkpoint ck = run.load_model_checkpoint(run.checkpoint_or("pretrained.bin"), run.cfg().model);
  const ModelParams params = unflatten(ck.tensors);
  std::vector<LatentPart> parts;
  if (run.cfg().interp_which != "specific") parts.push_back(LatentPart::common);
  if (run.cfg().interp_which != "common") parts.push_back(LatentPart::specific);
  json grids = json::array();
  for (std::size_t idx : run.cfg().interp_pairs) {
    require(idx < test.size(), ErrorKind::config_error,
            "interpolate.pairs: index " + std::to_string(idx) + " beyond test set of " + std::to_string(test.size()));
    for (LatentPart part : parts) {
      const Image grid = interpolate_grid(test.pairs[idx].a, test.pairs[idx].b, part, run.cfg().interp_steps, params,
                                          run.cfg().model);
      const fs::path p = run.path(fs::path("interpolate") /
                                  ("pair" + std::to_string(idx) + "_" + std::string(to_string(part)) + ".png"));
      write_png(p, grid);
      run.add(p);
      grids.push_back({{"pair", idx}, {"which", to_string(part)}, {"label", test.labels[idx]}, {"file", p.filename()}});
    }
  }
  run.seeds(ck.meta.seeds);
  run.metrics() = {{"grids", grids}, {"steps", run.cfg().interp_steps}};
  return run.finish();
}

json cmd_project(Run& run) {
  const PairDataset test = run.load_split("test");
  const Checkpoint ck = run.load_model_checkpoint(run.checkpoint_or("pretrained.bin"), run.cfg().model);
  LabeledImageSet set;
  for (std::size_t i = 0; i < test.size() && set.size() < run.cfg().project_images; ++i) {
    set.images.push_back(test.pairs[i].a);
    set.labels.push_back(test.meta[i].class_a);
  }
  const fs::path dir = run.path("projection");
  const Projection p = project_features(set, unflatten(ck.tensors), run.cfg().model, dir);
  for (const char* f : {"features.csv", "pca_common.csv", "pca_specific.csv"}) run.add(dir / f);
  const json j = {{"n_images", set.size()},
                  {"variance_common", p.common.variance},
                  {"variance_specific", p.specific.variance},
                  {"probe_accuracy_common", p.probe_common},
                  {"probe_accuracy_specific", p.probe_specific}};
  write_json_file(dir / "projection.json", j);
  run.add(dir / "projection.json");
  run.seeds(ck.meta.seeds);
  run.metrics() = j;
  return run.finish();
}

json cmd_report(Run& run, const fs::path& dir) {
  std::ifstream in(dir / "manifests.jsonl");
  require(static_cast<bool>(in), ErrorKind::io_error, "no manifests.jsonl under " + dir.string());
  json runs = json::array();
  json latest = json::object();
  bool all_ok = true;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json m;
    try {
      m = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::config_error, (dir / "manifests.jsonl").string() + ": " + e.what());
    }
    bool ok = true;
    for (const auto& a : m.value("artifacts", json::array())) {
      const fs::path p = dir / a.at("path").get<std::string>();
      ok = ok && fs::exists(p) && sha256_file(p) == a.at("sha256").get<std::string>();
    }
    all_ok = all_ok && ok;
    const std::string cmd = m.value("command", "");
    runs.push_back({{"command", cmd}, {"finished", m.value("finished", "")}, {"verified", ok},
                    {"metrics", m.value("metrics", json::object())}});
    latest[cmd] = m.value("metrics", json::object());
  }
  const json summary = {{"run_dir", dir.generic_string()},
                        {"n_manifests", runs.size()},
                        {"verified", all_ok},
                        {"latest", latest},
                        {"runs", runs}};
  write_json_file(run.path("report.json"), summary);
  run.add(run.path("report.json"));
  run.metrics() = {{"n_manifests", runs.size()}, {"verified", all_ok}};
  run.finish();
  return summary;
}

void emit_error(std::ostream& err, std::string_view kind, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    emit_error(err, to_string(ErrorKind::unknown_command), "no subcommand given");
    return 1;
  }
  if (!args[0].starts_with("-") && !known_command(args[0])) {
    emit_error(err, to_string(ErrorKind::unknown_command), "unknown subcommand '" + args[0] + "'");
    return 1;
  }

  CLI::App app{"Change detection on image pairs with a twin VAE", "pairdis"};
  app.require_subcommand(1, 1);
  Options opt;
  std::string out_dir = opt.out.string();
  std::uint64_t seed = 0;
  for (const auto& [name, help] : kCommandHelp) {
    CLI::App* sc = app.add_subcommand(name, help);
    sc->add_option("--config", opt.config_path, "JSON config file");
    sc->add_option("--out", out_dir, "run directory")->capture_default_str();
    sc->add_option("--seed", seed, "overrides train.seed");
    sc->add_option("--checkpoint", opt.checkpoint, "parameter checkpoint to start from");
    if (name == "report") sc->add_option("run_dir", opt.run_dir, "run directory to summarise");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    emit_error(err, to_string(ErrorKind::invalid_argument), e.what());
    return 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  opt.out = out_dir;
  if (app.get_subcommands().front()->count("--seed") > 0) opt.seed = seed;

  try {
    if (command == "report" && !opt.run_dir.empty() && app.get_subcommands().front()->count("--out") == 0)
      opt.out = opt.run_dir;
    Run run(command, opt, load_config(opt));
    json result;
    if (command == "gen-data") result = cmd_gen_data(run);
    else if (command == "pretrain") result = cmd_pretrain(run);
    else if (command == "finetune") result = cmd_finetune(run);
    else if (command == "eval") result = cmd_eval(run);
    else if (command == "detect-unsup") result = cmd_detect(run);
    else if (command == "ablate") result = cmd_ablate(run);
    else if (command == "interpolate") result = cmd_interpolate(run);
    else if (command == "project") result = cmd_project(run);
    else result = cmd_report(run, opt.run_dir.empty() ? opt.out : fs::path(opt.run_dir));
    out << result.dump(2) << '\n';
    return 0;
  } catch (const Error& e) {
    emit_error(err, to_string(e.kind()), e.what());
  } catch (const json::exception& e) {
    emit_error(err, to_string(ErrorKind::config_error), e.what());
  } catch (const fs::filesystem_error& e) {
    emit_error(err, to_string(ErrorKind::io_error), e.what());
  } catch (const std::exception& e) {
    emit_error(err, "internal-error", e.what());
  }
  return 1;
}

}  // namespace pairdis
