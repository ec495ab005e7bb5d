#include "mmpoe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <random>
#include <tuple>
#include <unordered_map>

#include "mmpoe/error.hpp"

namespace mmpoe {

namespace {

using Json = nlohmann::json;

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                         " vs " + std::to_string(b) + ")");
  }
  if (a == 0) throw Error(std::string(what) + ": empty input");
}

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Confusion confusion(std::span<const Label> preds, std::span<const Label> labels,
                    Label positive) {
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == positive;
    const bool t = labels[i] == positive;
    if (p && t) ++c.tp;
    else if (p && !t) ++c.fp;
    else if (!p && t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::string class_name(std::size_t c) { return std::string(to_string(static_cast<Label>(c))); }

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from_json(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

Json values_json(const SubgroupValues& values) {
  Json j = Json::object();
  for (Subgroup g : kAllSubgroups) {
    j[std::string(subgroup_key(g))] = optional_json(values[static_cast<std::size_t>(g)]);
  }
  return j;
}

SubgroupValues values_from_json(const Json& j) {
  SubgroupValues v;
  for (Subgroup g : kAllSubgroups) {
    v[static_cast<std::size_t>(g)] = optional_from_json(j.at(std::string(subgroup_key(g))));
  }
  return v;
}

}  // namespace

std::vector<std::size_t> FoldPlan::members(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

std::size_t FoldPlan::fold_size(int fold) const {
  return static_cast<std::size_t>(std::count(fold_of.begin(), fold_of.end(), fold));
}

FoldPlan stratified_folds(std::span<const FeatureRecord> records, int k, std::uint64_t seed,
                          bool group_by_participant) {
  if (k < 2) throw Error("stratified_folds: k must be at least 2");
  FoldPlan plan;
  plan.k = k;
  plan.group_by_participant = group_by_participant;
  plan.fold_of.assign(records.size(), -1);
  std::mt19937_64 rng(seed);

  if (!group_by_participant) {
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) {
      by_class[class_index(records[i].label)].push_back(i);
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (by_class[c].size() < static_cast<std::size_t>(k)) {
        throw Error("stratified_folds: class " + class_name(c) + " has " +
                    std::to_string(by_class[c].size()) + " samples, fewer than k=" +
                    std::to_string(k));
      }
    }
    int cursor = 0;
    for (auto& members : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t idx : members) {
        plan.fold_of[idx] = cursor;
        cursor = (cursor + 1) % k;
      }
    }
  } else {
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> samples;
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto [it, inserted] = samples.try_emplace(records[i].participant_id);
      if (inserted) order.push_back(records[i].participant_id);
      it->second.push_back(i);
    }
    if (order.size() < static_cast<std::size_t>(k)) {
      throw Error("stratified_folds: " + std::to_string(order.size()) +
                  " participants, fewer than k=" + std::to_string(k));
    }
    // Majority label per participant, ties to MCI.
    std::array<std::vector<std::string>, kNumClasses> by_class;
    for (const auto& pid : order) {
      std::size_t mci = 0;
      for (std::size_t idx : samples[pid]) mci += records[idx].label == Label::kMci;
      const bool majority_mci = 2 * mci >= samples[pid].size();
      by_class[majority_mci ? 0 : 1].push_back(pid);
    }
    std::vector<std::array<std::size_t, kNumClasses>> class_load(k);
    std::vector<std::size_t> total_load(k, 0);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
      for (const auto& pid : by_class[c]) {
        int best = 0;
        for (int f = 1; f < k; ++f) {
          if (std::tie(class_load[f][c], total_load[f]) <
              std::tie(class_load[best][c], total_load[best])) {
            best = f;
          }
        }
        for (std::size_t idx : samples[pid]) {
          plan.fold_of[idx] = best;
          ++class_load[best][class_index(records[idx].label)];
        }
        total_load[best] += samples[pid].size();
      }
    }
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    plan.assignment[records[i].sample_id] = plan.fold_of[i];
  }
  return plan;
}

double f1_score(std::span<const Label> preds, std::span<const Label> labels, Label positive) {
  require_same_length(preds.size(), labels.size(), "f1_score");
  const auto c = confusion(preds, labels, positive);
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

double macro_f1_score(std::span<const Label> preds, std::span<const Label> labels) {
  return 0.5 * (f1_score(preds, labels, Label::kMci) + f1_score(preds, labels, Label::kNc));
}

double uar_score(std::span<const Label> preds, std::span<const Label> labels) {
  require_same_length(preds.size(), labels.size(), "uar_score");
  double total = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto label = static_cast<Label>(c);
    const auto conf = confusion(preds, labels, label);
    const std::size_t support = conf.tp + conf.fn;
    if (support == 0) throw Error("uar_score: class " + class_name(c) + " absent from labels");
    total += static_cast<double>(conf.tp) / static_cast<double>(support);
  }
  return total / static_cast<double>(kNumClasses);
}

RegressionScores rmse_r2(std::span<const double> preds, std::span<const double> targets) {
  require_same_length(preds.size(), targets.size(), "rmse_r2");
  const auto n = static_cast<double>(preds.size());
  double mean = 0.0;
  for (double t : targets) mean += t;
  mean /= n;
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ss_res += (preds[i] - targets[i]) * (preds[i] - targets[i]);
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
  }
  RegressionScores out;
  out.rmse = std::sqrt(ss_res / n);
  if (ss_tot > 0.0) out.r2 = 1.0 - ss_res / ss_tot;
  return out;
}

std::map<std::string, SubgroupValues> score_predictions(
    std::span<const FeatureRecord> records, std::span<const Prediction> preds, Task task,
    bool macro_f1) {
  if (records.size() != preds.size()) {
    throw DimensionError("score_predictions: records and predictions differ in length");
  }
  std::map<std::string, SubgroupValues> out;
  for (Subgroup g : kAllSubgroups) {
    const auto col = static_cast<std::size_t>(g);
    std::vector<Label> labels, predicted;
    std::vector<double> targets, estimates;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!in_subgroup(records[i], g)) continue;
      labels.push_back(preds[i].label);
      predicted.push_back(preds[i].predicted);
      targets.push_back(preds[i].mmse);
      estimates.push_back(preds[i].predicted_mmse);
    }
    if (task == Task::kClassification) {
      auto& f1 = out["f1"][col];
      auto& uar = out["uar"][col];
      if (labels.empty()) continue;
      f1 = macro_f1 ? macro_f1_score(predicted, labels) : f1_score(predicted, labels);
      const bool both = std::count(labels.begin(), labels.end(), Label::kMci) > 0 &&
                        std::count(labels.begin(), labels.end(), Label::kNc) > 0;
      if (both) uar = uar_score(predicted, labels);
    } else {
      auto& rmse = out["rmse"][col];
      auto& r2 = out["r2"][col];
      if (targets.empty()) continue;
      const auto scores = rmse_r2(estimates, targets);
      rmse = scores.rmse;
      r2 = scores.r2;
    }
  }
  return out;
}

EvalReport cross_validate(std::span<const FeatureRecord> records, const Dims& dims,
                          const PoEConfig& config, const CvOptions& options) {
  config.validate();
  const FoldPlan plan =
      stratified_folds(records, options.k, options.seed, options.group_by_participant);

  EvalReport report;
  report.task = config.task;
  report.options = options;
  report.metric_names = config.task == Task::kClassification
                            ? std::vector<std::string>{"f1", "uar"}
                            : std::vector<std::string>{"rmse", "r2"};
  report.folds.resize(static_cast<std::size_t>(options.k));
  std::vector<Prediction> predictions(records.size());
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(options.k));

  for_each_index(static_cast<std::size_t>(options.k), options.exec, [&](std::size_t f) {
    try {
      const int fold = static_cast<int>(f);
      std::vector<FeatureRecord> train, valid;
      std::vector<std::size_t> valid_index;
      for (std::size_t i = 0; i < records.size(); ++i) {
        if (plan.fold_of[i] == fold) {
          valid.push_back(records[i]);
          valid_index.push_back(i);
        } else {
          train.push_back(records[i]);
        }
      }
      ModelBundle bundle = make_bundle(dims, config);
      TrainResult trained = config.task == Task::kClassification
                                ? train_classification(std::move(bundle), train, config, f)
                                : train_regression(std::move(bundle), train, config, f);
      std::vector<Prediction> fold_preds;
      for (std::size_t j = 0; j < valid.size(); ++j) {
        const auto& rec = valid[j];
        Prediction p;
        p.sample_id = rec.sample_id;
        p.fold = fold;
        p.label = rec.label;
        p.mmse = rec.mmse;
        if (config.task == Task::kClassification) {
          p.p_mci = predict_proba(trained.bundle, rec)[0];
          p.predicted = predict_label(trained.bundle, rec);
        } else {
          p.predicted_mmse = predict_mmse(trained.bundle, rec, config.clamp_mmse);
        }
        predictions[valid_index[j]] = p;
        fold_preds.push_back(p);
      }
      FoldResult& result = report.folds[f];
      result.fold = fold;
      result.train_size = train.size();
      result.valid_size = valid.size();
      result.metrics = score_predictions(valid, fold_preds, config.task, options.macro_f1);
    } catch (...) {
      failures[f] = std::current_exception();
    }
  });
  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }

  for (const auto& name : report.metric_names) {
    MetricAggregate agg;
    for (std::size_t col = 0; col < kSubgroupCount; ++col) {
      double total = 0.0;
      int defined = 0;
      for (const auto& fold : report.folds) {
        const auto& v = fold.metrics.at(name)[col];
        if (v) {
          total += *v;
          ++defined;
        } else {
          ++agg.excluded[col];
        }
      }
      if (defined > 0) agg.value[col] = total / defined;
    }
    report.aggregate[name] = agg;
  }
  if (options.pooled) {
    const auto pooled =
        score_predictions(records, predictions, config.task, options.macro_f1);
    for (const auto& name : report.metric_names) {
      report.aggregate[name].value = pooled.at(name);
      report.aggregate[name].excluded = {};
    }
  }
  report.predictions = std::move(predictions);
  report.disparity = disparity_gap(report);
  return report;
}

std::map<std::string, DisparityGap> disparity_gap(const EvalReport& report) {
  std::map<std::string, DisparityGap> out;
  auto gap = [](const std::optional<double>& a, const std::optional<double>& b) {
    return (a && b) ? std::optional<double>(std::abs(*a - *b)) : std::nullopt;
  };
  for (const auto& [name, agg] : report.aggregate) {
    const auto& v = agg.value;
    DisparityGap g;
    g.language = gap(v[static_cast<std::size_t>(Subgroup::kEnglish)],
                     v[static_cast<std::size_t>(Subgroup::kChinese)]);
    g.gender = gap(v[static_cast<std::size_t>(Subgroup::kMale)],
                   v[static_cast<std::size_t>(Subgroup::kFemale)]);
    out[name] = g;
  }
  return out;
}

Json to_json(const EvalReport& report) {
  Json j;
  j["task"] = to_string(report.task);
  j["options"] = {{"k", report.options.k},
                  {"seed", report.options.seed},
                  {"group_by_participant", report.options.group_by_participant},
                  {"macro_f1", report.options.macro_f1},
                  {"pooled", report.options.pooled}};
  Json columns = Json::array();
  for (Subgroup g : kAllSubgroups) columns.push_back(subgroup_label(g));
  j["columns"] = columns;
  j["metrics"] = report.metric_names;
  for (const auto& [name, agg] : report.aggregate) {
    j["aggregate"][name] = values_json(agg.value);
    Json excluded = Json::object();
    for (Subgroup g : kAllSubgroups) {
      excluded[std::string(subgroup_key(g))] = agg.excluded[static_cast<std::size_t>(g)];
    }
    j["excluded_folds"][name] = excluded;
  }
  for (const auto& [name, gap] : report.disparity) {
    j["disparity"][name] = {{"language", optional_json(gap.language)},
                            {"gender", optional_json(gap.gender)}};
  }
  Json folds = Json::array();
  for (const auto& fold : report.folds) {
    Json fj = {{"fold", fold.fold},
               {"train_size", fold.train_size},
               {"valid_size", fold.valid_size}};
    for (const auto& [name, values] : fold.metrics) fj["metrics"][name] = values_json(values);
    folds.push_back(fj);
  }
  j["folds"] = folds;
  Json preds = Json::array();
  for (const auto& p : report.predictions) {
    Json pj = {{"sample_id", p.sample_id}, {"fold", p.fold}};
    if (report.task == Task::kClassification) {
      pj["label"] = to_string(p.label);
      pj["predicted"] = to_string(p.predicted);
      pj["p_mci"] = p.p_mci;
    } else {
      pj["mmse"] = p.mmse;
      pj["predicted_mmse"] = p.predicted_mmse;
    }
    preds.push_back(pj);
  }
  j["predictions"] = preds;
  return j;
}

EvalReport eval_report_from_json(const Json& j) {
  try {
    EvalReport r;
    r.task = parse_task(j.at("task").get<std::string>());
    const auto& o = j.at("options");
    r.options.k = o.at("k").get<int>();
    r.options.seed = o.at("seed").get<std::uint64_t>();
    r.options.group_by_participant = o.at("group_by_participant").get<bool>();
    r.options.macro_f1 = o.at("macro_f1").get<bool>();
    r.options.pooled = o.at("pooled").get<bool>();
    r.metric_names = j.at("metrics").get<std::vector<std::string>>();
    for (const auto& name : r.metric_names) {
      MetricAggregate agg;
      agg.value = values_from_json(j.at("aggregate").at(name));
      const auto& ex = j.at("excluded_folds").at(name);
      for (Subgroup g : kAllSubgroups) {
        agg.excluded[static_cast<std::size_t>(g)] =
            ex.at(std::string(subgroup_key(g))).get<int>();
      }
      r.aggregate[name] = agg;
    }
    for (const auto& fj : j.at("folds")) {
      FoldResult f;
      f.fold = fj.at("fold").get<int>();
      f.train_size = fj.at("train_size").get<std::size_t>();
      f.valid_size = fj.at("valid_size").get<std::size_t>();
      for (const auto& name : r.metric_names) {
        f.metrics[name] = values_from_json(fj.at("metrics").at(name));
      }
      r.folds.push_back(std::move(f));
    }
    for (const auto& pj : j.at("predictions")) {
      Prediction p;
      p.sample_id = pj.at("sample_id").get<std::string>();
      p.fold = pj.at("fold").get<int>();
      if (r.task == Task::kClassification) {
        p.label = parse_label(pj.at("label").get<std::string>());
        p.predicted = parse_label(pj.at("predicted").get<std::string>());
        p.p_mci = pj.at("p_mci").get<double>();
      } else {
        p.mmse = pj.at("mmse").get<double>();
        p.predicted_mmse = pj.at("predicted_mmse").get<double>();
      }
      r.predictions.push_back(std::move(p));
    }
    r.disparity = disparity_gap(r);
    return r;
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed report JSON: ") + e.what());
  }
}

std::string render_table(const EvalReport& report) {
  const bool classification = report.task == Task::kClassification;
  const double scale = classification ? 100.0 : 1.0;
  const char* number_format = classification ? "%8.1f" : "%8.2f";
  auto cell = [&](const std::optional<double>& v) {
    char buf[32];
    if (v) {
      std::snprintf(buf, sizeof buf, number_format, *v * scale);
    } else {
      std::snprintf(buf, sizeof buf, "%8s", "n/a");
    }
    return std::string(buf);
  };
  auto display = [](const std::string& name) {
    if (name == "f1") return std::string("F1");
    if (name == "uar") return std::string("UAR");
    if (name == "rmse") return std::string("RMSE");
    if (name == "r2") return std::string("R2");
    return name;
  };

  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%s, %d-fold cross-validation (seed %llu, %s%s%s)\n",
                classification ? "MCI classification" : "MMSE regression", report.options.k,
                static_cast<unsigned long long>(report.options.seed),
                report.options.pooled ? "pooled" : "mean over folds",
                report.options.group_by_participant ? ", grouped by participant" : "",
                classification && report.options.macro_f1 ? ", macro F1" : "");
  out += line;
  std::snprintf(line, sizeof line, "%-8s|", "Metric");
  out += line;
  for (Subgroup g : kAllSubgroups) {
    std::snprintf(line, sizeof line, "%8s", std::string(subgroup_label(g)).c_str());
    out += line;
  }
  out += "\n" + std::string(8, '-') + "+" + std::string(8 * kSubgroupCount, '-') + "\n";
  for (const auto& name : report.metric_names) {
    std::snprintf(line, sizeof line, "%-8s|", display(name).c_str());
    out += line;
    for (const auto& v : report.aggregate.at(name).value) out += cell(v);
    out += "\n";
  }
  out += "\nDisparity gaps\n";
  std::snprintf(line, sizeof line, "%-8s|%8s%8s\n", "Metric", "|En-Zh|", "|M-F|");
  out += line;
  out += std::string(8, '-') + "+" + std::string(16, '-') + "\n";
  for (const auto& name : report.metric_names) {
    const auto& gap = report.disparity.at(name);
    std::snprintf(line, sizeof line, "%-8s|", display(name).c_str());
    out += line + cell(gap.language) + cell(gap.gender) + "\n";
  }
  return out;
}

}  // namespace mmpoe
