#pragma once

// Synthetic spurious-correlation benchmark.
//
// One modality (core) carries a label-dependent Gaussian cluster. Another
// (shortcut) carries a cleaner cluster whose sign agrees with the label with
// probability train_corr in the training split and test_corr in the test
// split. The remaining modality is pure noise. A model that leans on the
// shortcut loses accuracy once test_corr drops to 0.5.

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmpoe/datamodel.hpp"
#include "mmpoe/poe.hpp"

namespace mmpoe {

struct ShortcutSpec {
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  Dims dims{16, 16, 10};
  Modality core_modality = Modality::kText;
  Modality shortcut_modality = Modality::kAcoustic;
  double train_corr = 0.9;
  double test_corr = 0.5;
  /// Per-coordinate noise of the core and shortcut clusters.
  double noise_sigma = 1.0;
  /// Distance of each core cluster mean from the origin.
  double core_margin = 0.8;
  /// Distance of each shortcut cluster mean from the origin.
  double shortcut_margin = 3.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError on invalid values.
  void validate() const;
};

struct ShortcutDataset {
  DatasetManifest train;
  DatasetManifest test;
  /// Whether each record's shortcut cluster agrees with its label.
  std::vector<bool> train_aligned;
  std::vector<bool> test_aligned;
};

ShortcutDataset generate_shortcut_dataset(const ShortcutSpec& spec);

struct SeedOutcome {
  std::uint64_t seed = 0;
  double poe_acc = 0.0;
  double nopoe_acc = 0.0;
  double poe_f1 = 0.0;
  double nopoe_f1 = 0.0;

  double delta() const { return poe_acc - nopoe_acc; }
};

struct AblationResult {
  std::vector<SeedOutcome> seeds;  // sorted by seed
  double mean_poe_acc = 0.0;
  double mean_nopoe_acc = 0.0;
  double mean_delta = 0.0;
  double mean_abs_delta = 0.0;  // mean over seeds of |delta|
};

/// Trainer settings used by the benchmark: lr 1e-3 and a narrow hidden layer
/// so ten seeds finish in seconds.
PoEConfig benchmark_trainer_config();

/// For each seed: generates the dataset with spec.seed = seed, trains a
/// multi-only model and a PoE model (experts {shortcut} unless the trainer
/// config already names a non-empty set), and scores both on the test split.
/// Seeds run under `exec`; aggregation is over the sorted seed list.
AblationResult run_poe_ablation(const ShortcutSpec& spec, const PoEConfig& trainer,
                                std::span<const std::uint64_t> seeds,
                                Exec exec = Exec::kParallel);

/// {"seeds": {seed: {poe_acc, nopoe_acc, poe_f1, nopoe_f1, delta}}, means...}
nlohmann::json to_json(const AblationResult& result);
nlohmann::json to_json(const ShortcutSpec& spec);

}  // namespace mmpoe
