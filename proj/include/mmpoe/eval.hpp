#pragma once

// Cross-validated evaluation: stratified folds, F1 / UAR / RMSE / R^2, and
// per-subgroup breakdowns with language and gender disparity gaps.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmpoe/datamodel.hpp"
#include "mmpoe/poe.hpp"

namespace mmpoe {

struct FoldPlan {
  int k = 10;
  bool group_by_participant = false;
  std::vector<int> fold_of;                  // by record index
  std::map<std::string, int> assignment;     // sample_id -> fold

  std::vector<std::size_t> members(int fold) const;
  std::size_t fold_size(int fold) const;
};

/// Label-stratified k-fold plan, deterministic given seed. Ungrouped plans
/// deal each class round-robin, continuing where the previous class stopped,
/// so per-fold class counts differ by at most one. Grouped plans keep every
/// participant in one fold and balance participant labels greedily.
/// Throws Error when k < 2 or a class has fewer than k samples (participants).
FoldPlan stratified_folds(std::span<const FeatureRecord> records, int k, std::uint64_t seed,
                          bool group_by_participant);

/// Positive-class F1: 2TP / (2TP + FP + FN), 0 when the denominator is 0.
double f1_score(std::span<const Label> preds, std::span<const Label> labels,
                Label positive = Label::kMci);
/// Unweighted mean of the two per-class F1 scores.
double macro_f1_score(std::span<const Label> preds, std::span<const Label> labels);
/// Mean of per-class recalls. Throws Error when a class is absent from labels.
double uar_score(std::span<const Label> preds, std::span<const Label> labels);

struct RegressionScores {
  double rmse = 0.0;
  std::optional<double> r2;  // empty when targets are constant
};

RegressionScores rmse_r2(std::span<const double> preds, std::span<const double> targets);

struct CvOptions {
  int k = 10;
  std::uint64_t seed = 0;
  bool group_by_participant = false;
  bool macro_f1 = false;
  /// Metrics from pooled validation predictions instead of fold means.
  bool pooled = false;
  /// Folds run under this policy; training inside a fold uses config.exec.
  Exec exec = Exec::kParallel;
};

/// One metric across the five columns (Avg., M, F, En, Zh).
using SubgroupValues = std::array<std::optional<double>, kSubgroupCount>;

struct FoldResult {
  int fold = 0;
  std::size_t train_size = 0;
  std::size_t valid_size = 0;
  std::map<std::string, SubgroupValues> metrics;
};

struct MetricAggregate {
  SubgroupValues value;
  /// Folds whose value was undefined (empty subgroup, missing class, ...).
  std::array<int, kSubgroupCount> excluded{};
};

struct DisparityGap {
  std::optional<double> language;  // |En - Zh|
  std::optional<double> gender;    // |M - F|
};

struct Prediction {
  std::string sample_id;
  int fold = 0;
  Label label = Label::kNc;
  Label predicted = Label::kNc;
  double p_mci = 0.0;
  double mmse = 0.0;
  double predicted_mmse = 0.0;
};

struct EvalReport {
  Task task = Task::kClassification;
  CvOptions options;
  std::vector<std::string> metric_names;  // {"f1","uar"} or {"rmse","r2"}
  std::vector<FoldResult> folds;
  std::map<std::string, MetricAggregate> aggregate;
  std::map<std::string, DisparityGap> disparity;
  std::vector<Prediction> predictions;  // validation predictions, record order
};

/// Trains a fresh bundle per fold (seed' = seed ^ fold for batch shuffling)
/// and scores held-out predictions overall and per subgroup.
EvalReport cross_validate(std::span<const FeatureRecord> records, const Dims& dims,
                          const PoEConfig& config, const CvOptions& options);

/// Per-fold and pooled scoring of a fixed set of predictions. Exposed so the
/// report assembly can be checked without training.
std::map<std::string, SubgroupValues> score_predictions(
    std::span<const FeatureRecord> records, std::span<const Prediction> preds, Task task,
    bool macro_f1);

/// Absolute En/Zh and M/F differences of each aggregated metric.
std::map<std::string, DisparityGap> disparity_gap(const EvalReport& report);

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& json);

/// Aligned text table in column order Avg., M, F, En, Zh, followed by the
/// disparity gaps. Classification metrics are shown in percent.
std::string render_table(const EvalReport& report);

}  // namespace mmpoe
