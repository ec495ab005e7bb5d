#include "mmpoe/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "mmpoe/acoustic.hpp"
#include "mmpoe/datamodel.hpp"
#include "mmpoe/error.hpp"
#include "mmpoe/eval.hpp"
#include "mmpoe/parallel.hpp"
#include "mmpoe/poe.hpp"
#include "mmpoe/synthbench.hpp"
#include "mmpoe/version.hpp"

namespace mmpoe {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct TrainerFlags {
  std::string config;
  std::uint64_t seed = 0;
  std::string task;
  std::string experts;
  bool no_poe = false;
  int epochs = 0;
  double lr = 0.0;
  double weight_decay = 0.0;
  int batch_size = 0;
  std::size_t hidden_width = 0;
  std::size_t hidden_layers = 0;
  std::string optimizer;

  std::map<std::string, CLI::Option*> opts;

  bool given(const std::string& name) const {
    const auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

void add_trainer_flags(CLI::App* cmd, TrainerFlags& f) {
  f.opts["config"] = cmd->add_option("--config", f.config, "JSON trainer config; flags override it")
                         ->check(CLI::ExistingFile);
  f.opts["seed"] = cmd->add_option("--seed", f.seed, "Random seed");
  f.opts["task"] = cmd->add_option("--task", f.task, "classification or regression")
                       ->check(CLI::IsMember({"classification", "regression"}));
  f.opts["experts"] =
      cmd->add_option("--experts", f.experts, "Enabled experts, e.g. s,t,a or none");
  f.opts["no-poe"] = cmd->add_flag("--no-poe", f.no_poe, "Disable all experts");
  f.opts["epochs"] =
      cmd->add_option("--epochs", f.epochs, "Training epochs")->check(CLI::PositiveNumber);
  f.opts["lr"] = cmd->add_option("--lr", f.lr, "Learning rate")->check(CLI::PositiveNumber);
  f.opts["weight-decay"] = cmd->add_option("--weight-decay", f.weight_decay, "Weight decay")
                               ->check(CLI::NonNegativeNumber);
  f.opts["batch-size"] =
      cmd->add_option("--batch-size", f.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  f.opts["hidden-width"] = cmd->add_option("--hidden-width", f.hidden_width, "Hidden layer width")
                               ->check(CLI::PositiveNumber);
  f.opts["hidden-layers"] =
      cmd->add_option("--hidden-layers", f.hidden_layers, "Hidden layers per head");
  f.opts["optimizer"] = cmd->add_option("--optimizer", f.optimizer, "adamw or sgd")
                            ->check(CLI::IsMember({"adamw", "sgd"}));
}

PoEConfig resolve_config(const TrainerFlags& f, PoEConfig base) {
  PoEConfig c = base;
  if (f.given("config")) {
    std::ifstream in(f.config);
    Json j;
    try {
      in >> j;
    } catch (const Json::parse_error& e) {
      throw ConfigError(f.config + ": " + e.what());
    }
    c = poe_config_from_json(j, base);
  }
  if (f.given("seed")) c.seed = f.seed;
  if (f.given("task")) c.task = parse_task(f.task);
  if (f.given("experts")) c.experts = ExpertSet::parse(f.experts);
  if (f.no_poe) c.experts = ExpertSet::none();
  if (f.given("epochs")) c.epochs = f.epochs;
  if (f.given("lr")) c.lr = f.lr;
  if (f.given("weight-decay")) c.weight_decay = f.weight_decay;
  if (f.given("batch-size")) c.batch_size = f.batch_size;
  if (f.given("hidden-width")) c.hidden_width = f.hidden_width;
  if (f.given("hidden-layers")) c.hidden_layers = f.hidden_layers;
  if (f.given("optimizer")) c.optimizer = parse_optimizer(f.optimizer);
  c.validate();
  return c;
}

// jobs == 1 selects the serial reference path; 0 keeps the OpenMP default.
Exec apply_jobs(int jobs) {
  if (jobs == 1) return Exec::kSerial;
  if (jobs > 1) set_thread_count(jobs);
  return Exec::kParallel;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json acoustic_params_json(const AcousticParams& p) {
  return {{"frame_ms", p.frame_ms},
          {"hop_ms", p.hop_ms},
          {"f0_min", p.f0_min},
          {"f0_max", p.f0_max},
          {"voicing_threshold", p.voicing_threshold},
          {"pause_min_ms", p.pause_min_ms},
          {"energy_floor_db", p.energy_floor_db},
          {"silence_db", p.silence_db},
          {"peak_fraction", p.peak_fraction}};
}

// ---- extract --------------------------------------------------------------

struct ExtractFlags {
  std::string wav_dir;
  std::string out;
  std::string merge;
  bool keep_going = false;
  bool sidecar = false;
  std::size_t d_s = 1;
  std::size_t d_t = 1;
  int jobs = 0;
  AcousticParams params;
};

bool is_wav(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".wav";
}

int cmd_extract(const ExtractFlags& f, std::ostream& out, std::ostream& err) {
  f.params.validate();
  const Exec exec = apply_jobs(f.jobs);

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(f.wav_dir)) {
    if (entry.is_regular_file() && is_wav(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::optional<DatasetManifest> merge;
  std::map<std::string, std::size_t> merge_index;
  if (!f.merge.empty()) {
    merge = parse_manifest(f.merge);
    for (std::size_t i = 0; i < merge->records.size(); ++i) {
      merge_index[merge->records[i].sample_id] = i;
    }
  }
  Dims dims{merge ? merge->dims.speech : f.d_s, merge ? merge->dims.text : f.d_t, kAcousticDim};
  if (merge && merge->dims.acoustic != kAcousticDim) {
    err << "note: merge manifest d_a=" << merge->dims.acoustic << " replaced by " << kAcousticDim
        << "\n";
  }

  std::vector<std::optional<FeatureRecord>> records(files.size());
  std::vector<std::string> errors(files.size());
  std::vector<std::vector<std::string>> warnings(files.size());
  // Files run serially; frames inside each file use `exec`.
  for (std::size_t i = 0; i < files.size(); ++i) {
    try {
      const AudioClip clip = read_wav(files[i]);
      const AcousticVector vec = extract_acoustic_vector(clip, f.params, exec);
      FeatureRecord rec;
      const std::string id = files[i].stem().string();
      if (merge) {
        const auto it = merge_index.find(id);
        if (it == merge_index.end()) throw Error("no record \"" + id + "\" in merge manifest");
        rec = merge->records[it->second];
      } else {
        rec.sample_id = id;
        rec.participant_id = id;
        rec.language = Language::kEnglish;
        rec.gender = Gender::kFemale;
        rec.age = 1.0;
        rec.label = Label::kNc;
        rec.mmse = kMmseMax;
        rec.speech_vec.assign(dims.speech, 0.0);
        rec.text_vec.assign(dims.text, 0.0);
      }
      rec.acoustic_vec.assign(vec.values.begin(), vec.values.end());
      warnings[i] = vec.warnings;
      records[i] = std::move(rec);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }

  std::size_t failed = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!errors[i].empty()) {
      ++failed;
      err << "error: " << files[i].filename().string() << ": " << errors[i] << "\n";
    }
  }
  if (failed > 0 && !f.keep_going) {
    err << failed << " of " << files.size() << " files failed; nothing written\n";
    return kExitFailure;
  }

  DatasetManifest manifest;
  manifest.dims = dims;
  Json file_log = Json::array();
  for (std::size_t i = 0; i < files.size(); ++i) {
    Json entry = {{"file", files[i].filename().string()}};
    if (records[i]) {
      entry["sample_id"] = records[i]->sample_id;
      entry["warnings"] = warnings[i];
      manifest.records.push_back(std::move(*records[i]));
    } else {
      entry["error"] = errors[i];
    }
    file_log.push_back(std::move(entry));
  }
  const fs::path out_path(f.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_manifest(out_path, manifest, f.sidecar ? VectorStorage::kSidecar : VectorStorage::kInline);

  Json config = {{"command", "extract"},
                 {"acoustic", acoustic_params_json(f.params)},
                 {"merge", !f.merge.empty()},
                 {"d_s", dims.speech},
                 {"d_t", dims.text},
                 {"sidecar", f.sidecar}};
  Json summary;
  summary["reproducibility"] = reproducibility_block(0, config);
  summary["config"] = config;
  summary["feature_names"] = Json::array();
  for (auto name : kAcousticFeatureNames) summary["feature_names"].push_back(std::string(name));
  summary["files"] = file_log;
  summary["records"] = manifest.records.size();
  summary["failed"] = failed;
  if (!merge) {
    summary["note"] = "metadata fields are placeholders; supply them with --merge";
  }
  fs::path summary_path = out_path;
  summary_path.replace_extension(".extract.json");
  write_text(summary_path, summary.dump(2) + "\n");

  out << "wrote " << manifest.records.size() << " records to " << out_path.string() << "\n";
  if (!merge && !manifest.records.empty()) {
    err << "warning: metadata are placeholders (use --merge to supply them)\n";
  }
  return failed > 0 ? kExitFailure : kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainCmd {
  std::string manifest;
  std::string out;
  int jobs = 0;
  TrainerFlags trainer;
};

int cmd_train(const TrainCmd& f, std::ostream& out) {
  PoEConfig config = resolve_config(f.trainer, PoEConfig{});
  config.exec = apply_jobs(f.jobs);
  const std::string manifest_bytes = read_file(f.manifest);
  const DatasetManifest manifest = parse_manifest(f.manifest);

  const ModelBundle init = make_bundle(manifest.dims, config);
  const TrainResult result = config.task == Task::kClassification
                                 ? train_classification(init, manifest.records, config)
                                 : train_regression(init, manifest.records, config);

  const fs::path dir(f.out);
  fs::create_directories(dir);
  save_checkpoint(dir / "model.ckpt", result.bundle, config);
  std::ostringstream trace;
  write_loss_trace_csv(trace, result.trace);
  write_text(dir / "loss_trace.csv", trace.str());

  Json cfg = to_json(config);
  Json report;
  report["reproducibility"] = reproducibility_block(config.seed, {{"command", "train"},
                                                                  {"config", cfg}});
  report["reproducibility"]["manifest_hash"] = hex64(fnv1a64(manifest_bytes));
  report["config"] = cfg;
  report["records"] = manifest.records.size();
  report["epoch_loss"] = result.epoch_loss;
  if (config.task == Task::kClassification) {
    std::vector<Label> preds, labels;
    for (const auto& rec : manifest.records) {
      preds.push_back(predict_label(result.bundle, rec));
      labels.push_back(rec.label);
    }
    report["train_f1"] = f1_score(preds, labels);
  } else {
    std::vector<double> preds, targets;
    for (const auto& rec : manifest.records) {
      preds.push_back(predict_mmse(result.bundle, rec, config.clamp_mmse));
      targets.push_back(rec.mmse);
    }
    report["train_rmse"] = rmse_r2(preds, targets).rmse;
  }
  write_text(dir / "train.json", report.dump(2) + "\n");
  out << "trained " << to_string(config.task) << " model on " << manifest.records.size()
      << " records; final epoch loss "
      << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << "\n";
  return kExitOk;
}

// ---- cv -------------------------------------------------------------------

struct CvCmd {
  std::string manifest;
  std::string out;
  int k = 10;
  bool grouped = false;
  bool pooled = false;
  bool macro_f1 = false;
  int jobs = 0;
  TrainerFlags trainer;
};

int cmd_cv(const CvCmd& f, std::ostream& out) {
  PoEConfig config = resolve_config(f.trainer, PoEConfig{});
  const Exec exec = apply_jobs(f.jobs);
  config.exec = exec;
  const std::string manifest_bytes = read_file(f.manifest);
  const DatasetManifest manifest = parse_manifest(f.manifest);

  CvOptions options;
  options.k = f.k;
  options.seed = config.seed;
  options.group_by_participant = f.grouped;
  options.pooled = f.pooled;
  options.macro_f1 = f.macro_f1;
  options.exec = exec;
  const EvalReport report = cross_validate(manifest.records, manifest.dims, config, options);

  const Json cfg = to_json(config);
  Json j = to_json(report);
  const Json hashed = {{"command", "cv"},
                       {"config", cfg},
                       {"k", f.k},
                       {"group_by_participant", f.grouped},
                       {"pooled", f.pooled},
                       {"macro_f1", f.macro_f1}};
  j["reproducibility"] = reproducibility_block(config.seed, hashed);
  j["reproducibility"]["manifest_hash"] = hex64(fnv1a64(manifest_bytes));
  j["config"] = cfg;

  const std::string table = render_table(report);
  const fs::path dir(f.out);
  fs::create_directories(dir);
  write_text(dir / "report.json", j.dump(2) + "\n");
  write_text(dir / "report.txt", table);
  out << table;
  return kExitOk;
}

// ---- synth ----------------------------------------------------------------

struct SynthCmd {
  ShortcutSpec spec;
  std::string core = "t";
  std::string shortcut = "a";
  int seeds = 10;
  std::uint64_t first_seed = 0;
  std::string out;
  int jobs = 0;
  TrainerFlags trainer;
};

Modality parse_modality(const std::string& text) {
  const ExpertSet set = ExpertSet::parse(text);
  for (Modality m : kAllModalities) {
    if (set.size() == 1 && set.contains(m)) return m;
  }
  throw ConfigError("expected exactly one modality (s, t or a), got \"" + text + "\"");
}

struct Verdict {
  bool no_shortcut = false;
  bool passed = false;
  std::string text;
};

Verdict synth_verdict(const ShortcutSpec& spec, const AblationResult& r) {
  Verdict v;
  v.no_shortcut = spec.train_corr == 0.5;
  if (v.no_shortcut) {
    v.passed = r.mean_abs_delta <= 0.02;
    v.text = std::string("no shortcut: delta within ±0.02: ") + (v.passed ? "PASS" : "FAIL");
  } else {
    v.passed = r.mean_delta >= 0.05;
    v.text = std::string("PoE delta ≥ +0.05: ") + (v.passed ? "PASS" : "FAIL");
  }
  return v;
}

int cmd_synth(SynthCmd f, std::ostream& out) {
  f.spec.core_modality = parse_modality(f.core);
  f.spec.shortcut_modality = parse_modality(f.shortcut);
  f.spec.validate();
  PoEConfig trainer = resolve_config(f.trainer, benchmark_trainer_config());
  if (!f.trainer.given("experts")) trainer.experts = ExpertSet::none();
  const Exec exec = apply_jobs(f.jobs);
  trainer.exec = Exec::kSerial;

  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < f.seeds; ++i) seeds.push_back(f.first_seed + static_cast<std::uint64_t>(i));
  const AblationResult result = run_poe_ablation(f.spec, trainer, seeds, exec);
  const Verdict verdict = synth_verdict(f.spec, result);

  Json spec_json = to_json(f.spec);
  spec_json.erase("seed");
  const Json cfg = to_json(trainer);
  Json j;
  j["reproducibility"] = reproducibility_block(
      f.first_seed, {{"command", "synth"}, {"spec", spec_json}, {"trainer", cfg}, {"seeds", seeds}});
  j["spec"] = spec_json;
  j["trainer"] = cfg;
  j["result"] = to_json(result);
  j["verdict"] = {{"text", verdict.text},
                  {"passed", verdict.passed},
                  {"statistic", verdict.no_shortcut ? "mean_abs_delta" : "mean_delta"},
                  {"threshold", verdict.no_shortcut ? 0.02 : 0.05}};
  if (!f.out.empty()) {
    const fs::path dir(f.out);
    fs::create_directories(dir);
    write_text(dir / "synth.json", j.dump(2) + "\n");
  }
  char line[160];
  for (const auto& s : result.seeds) {
    std::snprintf(line, sizeof line, "seed %llu  poe %.4f  no-poe %.4f  delta %+.4f\n",
                  static_cast<unsigned long long>(s.seed), s.poe_acc, s.nopoe_acc, s.delta());
    out << line;
  }
  std::snprintf(line, sizeof line, "mean    poe %.4f  no-poe %.4f  delta %+.4f  |delta| %.4f\n",
                result.mean_poe_acc, result.mean_nopoe_acc, result.mean_delta,
                result.mean_abs_delta);
  out << line << verdict.text << "\n";
  return kExitOk;
}

// ---- report ---------------------------------------------------------------

int cmd_report(const std::string& in_path, const std::string& out_path, std::ostream& out) {
  Json j;
  try {
    j = Json::parse(read_file(in_path));
  } catch (const Json::parse_error& e) {
    throw Error(in_path + ": " + e.what());
  }
  const std::string table = render_table(eval_report_from_json(j));
  if (!out_path.empty()) write_text(out_path, table);
  out << table;
  return kExitOk;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

Json reproducibility_block(std::uint64_t seed, const Json& config) {
  return {{"seed", seed},
          {"config_hash", "fnv1a64:" + hex64(fnv1a64(config.dump()))},
          {"version", std::string(kVersion)}};
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Product-of-experts multimodal training and evaluation", "mmpoe"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  ExtractFlags ex;
  auto* extract = app.add_subcommand("extract", "Acoustic features from a directory of WAV files");
  extract->add_option("--wav-dir,wav_dir", ex.wav_dir, "Directory of .wav files")
      ->required()
      ->check(CLI::ExistingDirectory);
  extract->add_option("--out", ex.out, "Output manifest (.jsonl)")->required();
  extract->add_option("--merge", ex.merge, "Manifest supplying metadata and speech/text vectors")
      ->check(CLI::ExistingFile);
  extract->add_flag("--keep-going", ex.keep_going, "Write valid files even if some fail");
  extract->add_flag("--sidecar", ex.sidecar, "Store vectors in float32 sidecar files");
  extract->add_option("--d-s", ex.d_s, "Placeholder speech dim without --merge")
      ->check(CLI::PositiveNumber);
  extract->add_option("--d-t", ex.d_t, "Placeholder text dim without --merge")
      ->check(CLI::PositiveNumber);
  extract->add_option("--jobs", ex.jobs, "Threads (1 = serial)")->check(CLI::NonNegativeNumber);
  extract->add_option("--frame-ms", ex.params.frame_ms, "Analysis frame length")
      ->check(CLI::PositiveNumber);
  extract->add_option("--hop-ms", ex.params.hop_ms, "Frame hop")->check(CLI::PositiveNumber);
  extract->add_option("--f0-min", ex.params.f0_min, "Lowest F0 in Hz")->check(CLI::PositiveNumber);
  extract->add_option("--f0-max", ex.params.f0_max, "Highest F0 in Hz")
      ->check(CLI::PositiveNumber);
  extract->add_option("--voicing-threshold", ex.params.voicing_threshold,
                      "Autocorrelation peak needed for a voiced frame")
      ->check(CLI::Range(0.0, 1.0));
  extract->add_option("--pause-min-ms", ex.params.pause_min_ms, "Shortest pause")
      ->check(CLI::NonNegativeNumber);
  extract->add_option("--silence-db", ex.params.silence_db, "Low-energy threshold for pauses");

  TrainCmd tr;
  auto* train = app.add_subcommand("train", "Train on a whole manifest and save a checkpoint");
  train->add_option("--manifest", tr.manifest, "Input manifest")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", tr.out, "Output directory")->required();
  train->add_option("--jobs", tr.jobs, "Threads (1 = serial)")->check(CLI::NonNegativeNumber);
  add_trainer_flags(train, tr.trainer);

  CvCmd cvf;
  auto* cv = app.add_subcommand("cv", "Stratified k-fold cross-validation report");
  cv->add_option("--manifest", cvf.manifest, "Input manifest")
      ->required()
      ->check(CLI::ExistingFile);
  cv->add_option("--out", cvf.out, "Output directory")->required();
  cv->add_option("--k", cvf.k, "Number of folds")->check(CLI::Range(2, 1000));
  cv->add_flag("--group-by-participant", cvf.grouped, "Keep each participant in one fold");
  cv->add_flag("--pooled", cvf.pooled, "Score pooled predictions instead of fold means");
  cv->add_flag("--macro-f1", cvf.macro_f1, "Report macro F1 instead of MCI F1");
  cv->add_option("--jobs", cvf.jobs, "Threads (1 = serial)")->check(CLI::NonNegativeNumber);
  add_trainer_flags(cv, cvf.trainer);

  SynthCmd sy;
  auto* synth = app.add_subcommand("synth", "Synthetic shortcut benchmark, PoE vs no PoE");
  synth->add_option("--n-train", sy.spec.n_train, "Training samples")->check(CLI::Range(2, 10000000));
  synth->add_option("--n-test", sy.spec.n_test, "Test samples")->check(CLI::PositiveNumber);
  synth->add_option("--rho-train", sy.spec.train_corr, "Shortcut/label agreement in training")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--rho-test", sy.spec.test_corr, "Shortcut/label agreement in test")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--noise-sigma", sy.spec.noise_sigma, "Cluster noise")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--core-margin", sy.spec.core_margin, "Core cluster offset")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--shortcut-margin", sy.spec.shortcut_margin, "Shortcut cluster offset")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--d-s", sy.spec.dims.speech, "Speech dim")->check(CLI::PositiveNumber);
  synth->add_option("--d-t", sy.spec.dims.text, "Text dim")->check(CLI::PositiveNumber);
  synth->add_option("--d-a", sy.spec.dims.acoustic, "Acoustic dim")->check(CLI::PositiveNumber);
  synth->add_option("--core", sy.core, "Core modality (s, t or a)");
  synth->add_option("--shortcut", sy.shortcut, "Shortcut modality (s, t or a)");
  synth->add_option("--seeds", sy.seeds, "Number of seeds")->check(CLI::Range(1, 100000));
  synth->add_option("--first-seed", sy.first_seed, "First seed");
  synth->add_option("--out", sy.out, "Output directory for synth.json");
  synth->add_option("--jobs", sy.jobs, "Threads (1 = serial)")->check(CLI::NonNegativeNumber);
  add_trainer_flags(synth, sy.trainer);

  std::string report_in, report_out;
  auto* report = app.add_subcommand("report", "Render a cv report JSON as a text table");
  report->add_option("--in,input", report_in, "report.json")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--out", report_out, "Also write the table here");

  std::vector<const char*> argv = {"mmpoe"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (extract->parsed()) return cmd_extract(ex, out, err);
    if (train->parsed()) return cmd_train(tr, out);
    if (cv->parsed()) return cmd_cv(cvf, out);
    if (synth->parsed()) return cmd_synth(sy, out);
    if (report->parsed()) return cmd_report(report_in, report_out, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace mmpoe
