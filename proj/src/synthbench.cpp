#include "mmpoe/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <random>

#include "mmpoe/error.hpp"
#include "mmpoe/eval.hpp"
#include "mmpoe/rng.hpp"

namespace mmpoe {

namespace {

std::vector<double> random_unit(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<double>& slot(FeatureRecord& rec, Modality m) {
  switch (m) {
    case Modality::kSpeech: return rec.speech_vec;
    case Modality::kText: return rec.text_vec;
    case Modality::kAcoustic: break;
  }
  return rec.acoustic_vec;
}

struct Directions {
  std::vector<double> core;
  std::vector<double> shortcut;
};

DatasetManifest generate_split(const ShortcutSpec& spec, const Directions& dirs,
                               std::size_t n, double corr, const char* prefix,
                               std::mt19937_64& rng, std::vector<bool>& aligned) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution agree(corr);
  DatasetManifest out;
  out.dims = spec.dims;
  out.records.reserve(n);
  aligned.assign(n, false);
  Modality noise_modality = Modality::kSpeech;
  for (Modality m : kAllModalities) {
    if (m != spec.core_modality && m != spec.shortcut_modality) noise_modality = m;
  }
  for (std::size_t i = 0; i < n; ++i) {
    FeatureRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "%s-%06zu", prefix, i);
    rec.sample_id = id;
    rec.participant_id = id;
    rec.label = (i % 2 == 0) ? Label::kMci : Label::kNc;
    rec.language = ((i / 2) % 2 == 0) ? Language::kEnglish : Language::kChinese;
    rec.gender = ((i / 4) % 2 == 0) ? Gender::kFemale : Gender::kMale;
    rec.age = 70.0;
    rec.mmse = rec.label == Label::kMci ? 24.0 : 29.0;
    const double sign = rec.label == Label::kMci ? 1.0 : -1.0;
    aligned[i] = agree(rng);
    const double shortcut_sign = aligned[i] ? sign : -sign;

    auto& core = slot(rec, spec.core_modality);
    core.resize(dirs.core.size());
    for (std::size_t d = 0; d < core.size(); ++d) {
      core[d] = sign * spec.core_margin * dirs.core[d] + spec.noise_sigma * normal(rng);
    }
    auto& shortcut = slot(rec, spec.shortcut_modality);
    shortcut.resize(dirs.shortcut.size());
    for (std::size_t d = 0; d < shortcut.size(); ++d) {
      shortcut[d] = shortcut_sign * spec.shortcut_margin * dirs.shortcut[d] +
                    spec.noise_sigma * normal(rng);
    }
    auto& noise = slot(rec, noise_modality);
    noise.resize(modality_dim(spec.dims, noise_modality));
    for (double& x : noise) x = normal(rng);
    out.records.push_back(std::move(rec));
  }
  return out;
}

double accuracy(const ModelBundle& bundle, std::span<const FeatureRecord> records,
                double& f1) {
  std::vector<Label> preds, labels;
  std::size_t correct = 0;
  for (const auto& rec : records) {
    const Label p = predict_label(bundle, rec);
    preds.push_back(p);
    labels.push_back(rec.label);
    correct += p == rec.label;
  }
  f1 = f1_score(preds, labels);
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

}  // namespace

void ShortcutSpec::validate() const {
  if (n_train < 2 || n_test < 1) throw ConfigError("n_train must be >= 2 and n_test >= 1");
  if (dims.speech == 0 || dims.text == 0 || dims.acoustic == 0) {
    throw ConfigError("modality dims must be positive");
  }
  if (core_modality == shortcut_modality) {
    throw ConfigError("core and shortcut modality must differ");
  }
  for (double corr : {train_corr, test_corr}) {
    if (!(corr >= 0.0 && corr <= 1.0)) throw ConfigError("correlations must lie in [0, 1]");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError("noise_sigma must be non-negative");
  }
  if (!(core_margin >= 0.0) || !(shortcut_margin >= 0.0)) {
    throw ConfigError("margins must be non-negative");
  }
}

ShortcutDataset generate_shortcut_dataset(const ShortcutSpec& spec) {
  spec.validate();
  std::mt19937_64 dir_rng(mix_seed(spec.seed, 0));
  Directions dirs;
  dirs.core = random_unit(modality_dim(spec.dims, spec.core_modality), dir_rng);
  dirs.shortcut = random_unit(modality_dim(spec.dims, spec.shortcut_modality), dir_rng);

  ShortcutDataset data;
  std::mt19937_64 train_rng(mix_seed(spec.seed, 1));
  std::mt19937_64 test_rng(mix_seed(spec.seed, 2));
  data.train = generate_split(spec, dirs, spec.n_train, spec.train_corr, "train", train_rng,
                              data.train_aligned);
  data.test = generate_split(spec, dirs, spec.n_test, spec.test_corr, "test", test_rng,
                             data.test_aligned);
  return data;
}

PoEConfig benchmark_trainer_config() {
  PoEConfig c;
  c.experts = ExpertSet::none();
  c.lr = 1e-3;
  c.epochs = 10;
  c.batch_size = 16;
  c.hidden_width = 32;
  c.hidden_layers = 1;
  c.exec = Exec::kSerial;
  return c;
}

AblationResult run_poe_ablation(const ShortcutSpec& spec, const PoEConfig& trainer,
                                std::span<const std::uint64_t> seeds, Exec exec) {
  spec.validate();
  trainer.validate();
  std::vector<std::uint64_t> sorted(seeds.begin(), seeds.end());
  std::sort(sorted.begin(), sorted.end());
  AblationResult result;
  result.seeds.resize(sorted.size());
  std::vector<std::exception_ptr> failures(sorted.size());

  for_each_index(sorted.size(), exec, [&](std::size_t s) {
    try {
      ShortcutSpec run_spec = spec;
      run_spec.seed = sorted[s];
      const ShortcutDataset data = generate_shortcut_dataset(run_spec);

      PoEConfig plain = trainer;
      plain.seed = sorted[s];
      plain.experts = ExpertSet::none();
      PoEConfig poe = plain;
      poe.experts = trainer.experts;
      poe.experts.insert(spec.shortcut_modality);

      const ModelBundle init = make_bundle(spec.dims, plain);
      const auto plain_model = train_classification(init, data.train.records, plain);
      const auto poe_model = train_classification(init, data.train.records, poe);

      SeedOutcome& out = result.seeds[s];
      out.seed = sorted[s];
      out.nopoe_acc = accuracy(plain_model.bundle, data.test.records, out.nopoe_f1);
      out.poe_acc = accuracy(poe_model.bundle, data.test.records, out.poe_f1);
    } catch (...) {
      failures[s] = std::current_exception();
    }
  });
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }
  if (!result.seeds.empty()) {
    for (const auto& o : result.seeds) {
      result.mean_poe_acc += o.poe_acc;
      result.mean_nopoe_acc += o.nopoe_acc;
      result.mean_delta += o.delta();
      result.mean_abs_delta += std::abs(o.delta());
    }
    const auto n = static_cast<double>(result.seeds.size());
    result.mean_poe_acc /= n;
    result.mean_nopoe_acc /= n;
    result.mean_delta /= n;
    result.mean_abs_delta /= n;
  }
  return result;
}

nlohmann::json to_json(const AblationResult& result) {
  nlohmann::json j;
  j["seeds"] = nlohmann::json::object();
  for (const auto& o : result.seeds) {
    j["seeds"][std::to_string(o.seed)] = {{"poe_acc", o.poe_acc},
                                          {"nopoe_acc", o.nopoe_acc},
                                          {"poe_f1", o.poe_f1},
                                          {"nopoe_f1", o.nopoe_f1},
                                          {"delta", o.delta()}};
  }
  j["mean_poe_acc"] = result.mean_poe_acc;
  j["mean_nopoe_acc"] = result.mean_nopoe_acc;
  j["mean_delta"] = result.mean_delta;
  j["mean_abs_delta"] = result.mean_abs_delta;
  return j;
}

nlohmann::json to_json(const ShortcutSpec& spec) {
  return {{"n_train", spec.n_train},
          {"n_test", spec.n_test},
          {"d_s", spec.dims.speech},
          {"d_t", spec.dims.text},
          {"d_a", spec.dims.acoustic},
          {"core_modality", to_string(spec.core_modality)},
          {"shortcut_modality", to_string(spec.shortcut_modality)},
          {"train_corr", spec.train_corr},
          {"test_corr", spec.test_corr},
          {"noise_sigma", spec.noise_sigma},
          {"core_margin", spec.core_margin},
          {"shortcut_margin", spec.shortcut_margin},
          {"seed", spec.seed}};
}

}  // namespace mmpoe
