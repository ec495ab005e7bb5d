#pragma once

// Product-of-experts training for the multi-feature classifier.
//
// The multi-feature head sees [speech; text; acoustic] and produces z_M. Each
// enabled expert head sees one modality and produces z_U. Training minimizes
// the cross-entropy of
//
//   log p_F = log_softmax( log_softmax(z_M) + sum_U log_softmax(z_U) )
//
// while inference uses softmax(z_M) alone. Expert log-distributions are
// constants in the multi head's gradient; each expert receives gradient only
// through its own term.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmpoe/datamodel.hpp"
#include "mmpoe/numkernel.hpp"
#include "mmpoe/parallel.hpp"

namespace mmpoe {

enum class Modality { kSpeech = 0, kText = 1, kAcoustic = 2 };
inline constexpr std::array<Modality, 3> kAllModalities = {Modality::kSpeech, Modality::kText,
                                                           Modality::kAcoustic};

/// "s", "t" or "a".
std::string_view to_string(Modality modality);
Modality parse_modality(std::string_view text);
std::span<const double> modality_vector(const FeatureRecord& rec, Modality modality);
std::size_t modality_dim(const Dims& dims, Modality modality);

/// Subset of {S, T, A}.
class ExpertSet {
 public:
  constexpr ExpertSet() = default;
  static constexpr ExpertSet all() { return ExpertSet(0b111); }
  static constexpr ExpertSet none() { return ExpertSet(0); }
  /// Parses "s,t,a", "st", "none" or "" (empty set).
  static ExpertSet parse(std::string_view text);

  constexpr bool contains(Modality m) const { return (bits_ >> static_cast<int>(m)) & 1u; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr void insert(Modality m) { bits_ |= 1u << static_cast<int>(m); }
  constexpr void erase(Modality m) { bits_ &= ~(1u << static_cast<int>(m)); }
  std::size_t size() const;
  /// Canonical "s,t,a" order; "none" for the empty set.
  std::string to_string() const;
  friend constexpr bool operator==(ExpertSet, ExpertSet) = default;

 private:
  constexpr explicit ExpertSet(unsigned bits) : bits_(bits) {}
  unsigned bits_ = 0;
};

enum class Task { kClassification, kRegression };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);

struct PoEConfig {
  ExpertSet experts = ExpertSet::all();
  bool detach_experts_from_multi = true;
  int epochs = 10;
  double lr = 1e-5;
  double weight_decay = 0.01;
  int batch_size = 16;
  std::uint64_t seed = 0;
  Task task = Task::kClassification;
  bool regression_uses_poe = false;

  OptimizerKind optimizer = OptimizerKind::kAdamW;
  std::size_t hidden_width = 256;
  std::size_t hidden_layers = 1;
  /// Expert heads keep their initial parameters when true.
  bool freeze_experts = false;
  /// The regression head fits (mmse - mean) / std of the training targets.
  bool standardize_targets = true;
  /// Clamp MMSE predictions to [0, 30] at inference.
  bool clamp_mmse = false;
  Exec exec = Exec::kParallel;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const PoEConfig& config);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
PoEConfig poe_config_from_json(const nlohmann::json& json, PoEConfig base = {});
PoEConfig load_poe_config(const std::filesystem::path& path);

struct ModelBundle {
  Dims dims;
  DenseNet multi;
  DenseNet speech;
  DenseNet text;
  DenseNet acoustic;
  DenseNet regression;
  double target_mean = 0.0;
  double target_scale = 1.0;
  std::uint64_t seed = 0;

  DenseNet& expert(Modality modality);
  const DenseNet& expert(Modality modality) const;
  friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

/// Fresh Glorot-initialized heads. Each head draws from its own stream
/// derived from config.seed.
ModelBundle make_bundle(const Dims& dims, const PoEConfig& config);

/// [speech; text; acoustic] in that order.
std::vector<double> fused_input(const FeatureRecord& rec);

std::vector<double> multi_forward(const ModelBundle& bundle, const FeatureRecord& rec);
/// Throws ConfigError when the modality is not in `enabled`.
std::vector<double> expert_forward(const ModelBundle& bundle, const FeatureRecord& rec,
                                   Modality modality, ExpertSet enabled);

/// Renormalized sum of log-distributions of the multi head and the experts.
std::vector<double> poe_combine(std::span<const double> multi_logits,
                                std::span<const std::vector<double>> expert_logits);

struct BundleGrad {
  NetGrad multi;
  NetGrad speech;
  NetGrad text;
  NetGrad acoustic;
  NetGrad regression;

  NetGrad& expert(Modality modality);
  const NetGrad& expert(Modality modality) const;
  void add(const BundleGrad& other);
  void scale(double factor);
  friend bool operator==(const BundleGrad&, const BundleGrad&) = default;
};

/// Which heads receive gradients.
struct TrainableHeads {
  bool multi = true;
  ExpertSet experts = ExpertSet::all();
};

struct BatchGradient {
  double mean_loss = 0.0;
  BundleGrad grad;  // mean over the batch
};

/// PoE cross-entropy of one record and its gradient. Heads not trainable (or
/// experts not enabled) get empty gradients.
double poe_sample_gradient(const ModelBundle& bundle, const FeatureRecord& rec,
                           const PoEConfig& config, const TrainableHeads& trainable,
                           BundleGrad& out);

/// Loss of one record under the PoE objective, without gradients.
double poe_sample_loss(const ModelBundle& bundle, const FeatureRecord& rec,
                       const PoEConfig& config);

/// Mean PoE loss and gradient over records[batch[i]]. Per-sample work runs
/// under `exec`; the reduction is in batch order, so serial and parallel
/// results are bit-identical.
BatchGradient poe_batch_gradient(const ModelBundle& bundle,
                                 std::span<const FeatureRecord> records,
                                 std::span<const std::size_t> batch, const PoEConfig& config,
                                 const TrainableHeads& trainable, Exec exec);

/// Mean squared error (in standardized target units) of the regression head
/// and its gradient.
BatchGradient regression_batch_gradient(const ModelBundle& bundle,
                                        std::span<const FeatureRecord> records,
                                        std::span<const std::size_t> batch, Exec exec);

struct LossPoint {
  int epoch = 0;
  int batch = 0;
  double loss = 0.0;
};

struct TrainResult {
  ModelBundle bundle;
  std::vector<LossPoint> trace;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

/// Seed used to shuffle batches for a given fold: seed ^ fold_index.
std::uint64_t fold_seed(std::uint64_t seed, std::uint64_t fold_index);

/// Consecutive mini-batches of a freshly shuffled 0..n-1.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::mt19937_64& rng);

/// Throws Error when the set has a single class or dims disagree.
TrainResult train_classification(ModelBundle bundle, std::span<const FeatureRecord> records,
                                 const PoEConfig& config, std::uint64_t fold_index = 0);
TrainResult train_regression(ModelBundle bundle, std::span<const FeatureRecord> records,
                             const PoEConfig& config, std::uint64_t fold_index = 0);

/// softmax(z_M); the expert heads are not consulted.
std::array<double, 2> predict_proba(const ModelBundle& bundle, const FeatureRecord& rec);
/// argmax with ties going to class 0 (MCI).
Label predict_label(const ModelBundle& bundle, const FeatureRecord& rec);
double predict_mmse(const ModelBundle& bundle, const FeatureRecord& rec, bool clamp = false);

/// "epoch,batch,loss" rows with 17 significant digits.
void write_loss_trace_csv(std::ostream& out, std::span<const LossPoint> trace);

/// Checkpoint: magic "POEC", u32 version, u32 metadata length, metadata JSON,
/// then one record per tensor (u32 name length, name, POEF sidecar block with
/// dim = cols and count = rows).
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle,
                     const PoEConfig& config);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace mmpoe
