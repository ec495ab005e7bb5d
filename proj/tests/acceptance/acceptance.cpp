// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "mmpoe/acoustic.hpp"
#include "mmpoe/cli.hpp"
#include "mmpoe/eval.hpp"
#include "mmpoe/poe.hpp"
#include "mmpoe/synthbench.hpp"
#include "test_support.hpp"

namespace mmpoe {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << "criterion " << id << " (" << name << "): " << (o.pass ? "PASS" : "FAIL") << "  "
            << o.detail << std::endl;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// 1 -------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> bias(-0.5, 0.5);
  const int trials = 120;
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Dims dims{1 + rng() % 4, 1 + rng() % 4, 1 + rng() % 4};
    PoEConfig config;
    config.seed = rng();
    config.hidden_layers = rng() % 3;
    config.hidden_width = 1 + rng() % 6;
    config.experts = ExpertSet::none();
    for (Modality m : kAllModalities) {
      if (rng() % 4 != 0) config.experts.insert(m);
    }
    auto bundle = make_bundle(dims, config);
    // Zero biases can park a pre-activation exactly on the ReLU kink.
    for (DenseNet* net : {&bundle.multi, &bundle.speech, &bundle.text, &bundle.acoustic}) {
      for (auto& layer : net->layers()) {
        for (auto& b : layer.bias) b = bias(rng);
      }
    }
    auto rec = testing::make_record("g", rng() % 2 ? Label::kNc : Label::kMci,
                                    Language::kEnglish, Gender::kFemale, dims);
    for (auto* v : {&rec.speech_vec, &rec.text_vec, &rec.acoustic_vec}) {
      for (auto& x : *v) x = normal(rng);
    }
    BundleGrad grad;
    poe_sample_gradient(bundle, rec, config, TrainableHeads{}, grad);
    const auto loss = [&] { return poe_sample_loss(bundle, rec, config); };
    worst = std::max(worst, max_relative_error(grad.multi.flatten(),
                                               central_differences(bundle.multi.parameters(),
                                                                   loss, 1e-6)));
    for (Modality m : kAllModalities) {
      if (!config.experts.contains(m)) continue;
      worst = std::max(worst, max_relative_error(grad.expert(m).flatten(),
                                                 central_differences(
                                                     bundle.expert(m).parameters(), loss, 1e-6)));
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-6 && elapsed < 30.0,
          fmt("%.0f configurations, max rel err %.3g, %.2f s", trials, worst, elapsed)};
}

// 2 -------------------------------------------------------------------------

std::vector<double> random_logits(std::mt19937_64& rng, std::size_t k) {
  std::normal_distribution<double> n(0.0, 3.0);
  std::vector<double> z(k);
  for (auto& v : z) v = n(rng);
  return z;
}

Outcome poe_algebra() {
  std::mt19937_64 rng(7);
  double product_err = 0.0, neutral_err = 0.0, commute_err = 0.0;
  bool empty_exact = true;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = 2 + t % 3;
    const auto zm = random_logits(rng, k);
    std::vector<std::vector<double>> ex(1 + t % 3);
    for (auto& z : ex) z = random_logits(rng, k);

    const auto combined = poe_combine(zm, ex);
    auto p = softmax(zm);
    for (const auto& z : ex) {
      const auto q = softmax(z);
      for (std::size_t i = 0; i < k; ++i) p[i] *= q[i];
    }
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      product_err = std::max(product_err, std::abs(std::exp(combined[i]) - p[i] / s));
    }

    const std::vector<std::vector<double>> uniform = {std::vector<double>(k, zm[0])};
    const auto neutral = poe_combine(zm, uniform);
    const auto plain = log_softmax(zm);
    for (std::size_t i = 0; i < k; ++i) {
      neutral_err = std::max(neutral_err, std::abs(neutral[i] - plain[i]));
    }

    const std::vector<std::vector<double>> none;
    empty_exact = empty_exact && poe_combine(zm, none) == plain;

    auto reversed = ex;
    std::reverse(reversed.begin(), reversed.end());
    const auto swapped = poe_combine(zm, reversed);
    for (std::size_t i = 0; i < k; ++i) {
      commute_err = std::max(commute_err, std::abs(swapped[i] - combined[i]));
    }
  }
  const bool pass = product_err <= 1e-12 && neutral_err <= 1e-12 && empty_exact &&
                    commute_err <= 1e-12;
  return {pass, fmt("product %.2g, uniform %.2g, commute %.2g, empty product exact: ",
                    product_err, neutral_err, commute_err) +
                    (empty_exact ? "yes" : "no")};
}

// 3 -------------------------------------------------------------------------

Outcome monotonicity() {
  int violations = 0, grids = 0;
  for (double pm : {0.05, 0.2, 0.5, 0.8, 0.95}) {
    for (std::size_t y : {0u, 1u}) {
      ++grids;
      const std::vector<double> zm = {std::log(pm), std::log(1.0 - pm)};
      double prev = std::numeric_limits<double>::infinity();
      for (int k = 1; k <= 99; ++k) {
        const double pu = k / 100.0;
        std::vector<double> zu(2);
        zu[y] = std::log(pu);
        zu[1 - y] = std::log(1.0 - pu);
        const std::vector<std::vector<double>> ex = {zu};
        const double nll = nll_loss(poe_combine(zm, ex), y);
        if (!(nll < prev)) ++violations;
        prev = nll;
      }
    }
  }
  return {violations == 0, fmt("%.0f grids x 99 points, %.0f violations", grids, violations)};
}

// 4 -------------------------------------------------------------------------

Outcome shortcut_benchmark() {
  const auto t0 = Clock::now();
  std::vector<std::uint64_t> seeds(10);
  std::iota(seeds.begin(), seeds.end(), std::uint64_t{0});
  ShortcutSpec spec;
  spec.n_train = 2000;
  spec.train_corr = 0.9;
  spec.test_corr = 0.5;
  const auto shifted = run_poe_ablation(spec, benchmark_trainer_config(), seeds);
  spec.train_corr = 0.5;
  const auto balanced = run_poe_ablation(spec, benchmark_trainer_config(), seeds);
  const double elapsed = seconds_since(t0);
  const bool pass =
      shifted.mean_delta >= 0.05 && balanced.mean_abs_delta <= 0.02 && elapsed < 120.0;
  return {pass, fmt("rho 0.9: mean delta %+.4f; rho 0.5: mean |delta| %.4f (mean delta %+.4f); "
                    "%.1f s",
                    shifted.mean_delta, balanced.mean_abs_delta, balanced.mean_delta, elapsed)};
}

// 5 -------------------------------------------------------------------------

Outcome metric_oracles() {
  int cases = 0;
  double worst = 0.0;
  // Every confusion matrix with cells in 0..3 that has both classes present.
  for (int tp = 0; tp <= 3; ++tp) {
    for (int fp = 0; fp <= 3; ++fp) {
      for (int fn = 0; fn <= 3; ++fn) {
        for (int tn = 0; tn <= 3; ++tn) {
          if (tp + fn == 0 || tn + fp == 0) continue;
          std::vector<Label> pred, truth;
          auto push = [&](int n, Label p, Label t) {
            for (int i = 0; i < n; ++i) {
              pred.push_back(p);
              truth.push_back(t);
            }
          };
          push(tp, Label::kMci, Label::kMci);
          push(fp, Label::kMci, Label::kNc);
          push(fn, Label::kNc, Label::kMci);
          push(tn, Label::kNc, Label::kNc);
          const double f1 = 2.0 * tp / (2.0 * tp + fp + fn);
          const double uar = 0.5 * (double(tp) / (tp + fn) + double(tn) / (tn + fp));
          worst = std::max(worst, std::abs(f1_score(pred, truth) - f1));
          worst = std::max(worst, std::abs(uar_score(pred, truth) - uar));
          ++cases;
        }
      }
    }
  }
  // Prediction vectors of small integers, scored against exact fractions.
  std::mt19937_64 rng(5);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 3 + t % 6;
    std::vector<double> p(n), y(n);
    long long res = 0, sum = 0, sum2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int yi = static_cast<int>(rng() % 31);
      const int pi = static_cast<int>(rng() % 31);
      y[i] = yi;
      p[i] = pi;
      res += static_cast<long long>(pi - yi) * (pi - yi);
      sum += yi;
      sum2 += static_cast<long long>(yi) * yi;
    }
    const auto nn = static_cast<long long>(n);
    const long long tot_scaled = nn * sum2 - sum * sum;  // n * SS_tot
    const auto s = rmse_r2(p, y);
    worst = std::max(worst, std::abs(s.rmse - std::sqrt(double(res) / nn)));
    if (tot_scaled > 0) {
      worst = std::max(worst, std::abs(*s.r2 - (1.0 - double(nn * res) / tot_scaled)));
    } else if (s.r2) {
      worst = 1.0;
    }
    ++cases;
  }
  return {cases >= 20 && worst <= 1e-9, fmt("%.0f cases, max abs err %.3g", cases, worst)};
}

// 6 -------------------------------------------------------------------------

std::string plan_bytes(const FoldPlan& plan) {
  std::ostringstream s;
  for (int f : plan.fold_of) s << f << ',';
  return s.str();
}

Outcome fold_invariants() {
  const auto recs = testing::table_cohort(Dims{1, 1, 1});
  std::size_t mci_total = 0;
  for (const auto& r : recs) mci_total += r.label == Label::kMci;
  bool ok = recs.size() == 387 && mci_total == 222;
  int worst_mci_dev = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto plan = stratified_folds(recs, 10, seed, false);
    std::vector<int> seen(recs.size(), 0);
    for (int f = 0; f < 10; ++f) {
      int mci = 0;
      for (std::size_t i : plan.members(f)) {
        ++seen[i];
        mci += recs[i].label == Label::kMci;
      }
      worst_mci_dev = std::max(worst_mci_dev, std::abs(mci - 22));
    }
    ok = ok && std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
    ok = ok && plan_bytes(plan) == plan_bytes(stratified_folds(recs, 10, seed, false));
  }
  ok = ok && worst_mci_dev <= 1;
  return {ok, fmt("20 seeds, k=10, 222/165 cohort; max |MCI per fold - 22| = %.0f",
                  worst_mci_dev)};
}

// 7 -------------------------------------------------------------------------

DatasetManifest protocol_manifest() {
  DatasetManifest m;
  m.dims = Dims{4, 4, 10};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.7);
  for (int i = 0; i < 80; ++i) {
    const Label label = i % 2 ? Label::kNc : Label::kMci;
    auto r = testing::make_record("p" + std::to_string(i), label,
                                  (i / 2) % 2 ? Language::kChinese : Language::kEnglish,
                                  (i / 4) % 2 ? Gender::kMale : Gender::kFemale, m.dims);
    for (auto* v : {&r.speech_vec, &r.text_vec, &r.acoustic_vec}) {
      for (auto& x : *v) x = noise(rng);
    }
    r.text_vec[0] += label == Label::kMci ? 1.0 : -1.0;
    r.mmse = label == Label::kMci ? 22.0 + i % 6 : 27.0 + i % 4;
    m.records.push_back(std::move(r));
  }
  return m;
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

Outcome protocol_shape() {
  testing::TempDir dir;
  write_manifest(dir / "m.jsonl", protocol_manifest());
  const nlohmann::json columns = {"Avg.", "M", "F", "En", "Zh"};
  const std::vector<std::string> keys = {"all", "m", "f", "en", "zh"};
  std::string detail;
  bool ok = true;
  for (const char* task : {"classification", "regression"}) {
    const auto out = dir / task;
    if (cli({"cv", "--manifest", (dir / "m.jsonl").string(), "--task", task, "--k", "5",
             "--epochs", "5", "--lr", "1e-3", "--hidden-width", "16", "--out",
             out.string()}) != 0) {
      return {false, std::string("cv failed for ") + task};
    }
    const auto j = nlohmann::json::parse(testing::slurp(out / "report.json"));
    const std::vector<std::string> metrics =
        std::string(task) == "classification" ? std::vector<std::string>{"f1", "uar"}
                                              : std::vector<std::string>{"rmse", "r2"};
    ok = ok && j.at("columns") == columns;
    ok = ok && j.at("metrics").get<std::vector<std::string>>() == metrics;
    for (const auto& name : metrics) {
      const auto& agg = j.at("aggregate").at(name);
      ok = ok && agg.size() == keys.size();
      for (const auto& key : keys) ok = ok && agg.contains(key);
      ok = ok && j.at("disparity").at(name).contains("language") &&
           j.at("disparity").at(name).contains("gender");
    }
    const auto table = testing::slurp(out / "report.txt");
    for (const char* col : {"Avg.", "M", "F", "En", "Zh", "|En-Zh|", "|M-F|"}) {
      ok = ok && table.find(col) != std::string::npos;
    }
    if (!ok) return {false, std::string("unexpected report layout for ") + task};
    detail += std::string(task) + " [" + metrics[0] + ", " + metrics[1] + "] ";
  }
  return {ok, detail + "x (Avg., M, F, En, Zh) + language/gender gaps"};
}

// 8 -------------------------------------------------------------------------

Outcome acoustic_tolerances() {
  std::string detail;
  bool ok = true;
  double slowest = 0.0;

  auto t0 = Clock::now();
  const auto tone = extract_acoustic_vector(testing::sine(220.0, 1.0));
  slowest = std::max(slowest, seconds_since(t0));
  const double f0 = tone.values[0], jitter = tone.values[2], shimmer = tone.values[3],
               voiced = tone.values[4];
  ok = ok && std::abs(f0 - 220.0) <= 3.0 && jitter < 0.5 && shimmer < 0.5 && voiced > 0.95;
  detail += fmt("sine: F0 %.2f Hz, jitter %.3f%%, shimmer %.3f%%, voiced %.3f; ", f0, jitter,
                shimmer, voiced);

  t0 = Clock::now();
  const auto train = extract_acoustic_vector(testing::pulse_train({72, 88}, 1.0));
  slowest = std::max(slowest, seconds_since(t0));
  ok = ok && std::abs(train.values[2] - 20.0) <= 0.5;
  detail += fmt("pulse train jitter %.3f%%; ", train.values[2]);

  t0 = Clock::now();
  const auto quiet = extract_acoustic_vector(testing::silence(1.0));
  slowest = std::max(slowest, seconds_since(t0));
  ok = ok && quiet.values[4] == 0.0;
  detail += fmt("silence voiced %.3f; slowest %.3f s", quiet.values[4], slowest);
  ok = ok && slowest < 5.0;
  return {ok, detail};
}

// 9 -------------------------------------------------------------------------

Outcome determinism() {
  testing::TempDir dir;
  write_manifest(dir / "m.jsonl", protocol_manifest());
  const auto wavs = dir / "wavs";
  std::filesystem::create_directories(wavs);
  write_wav(wavs / "a.wav", testing::sine(190.0, 0.8));
  write_wav(wavs / "b.wav", testing::pulse_train({80, 90}, 0.8));

  struct Invocation {
    std::vector<std::string> args;
    std::vector<std::string> files;
  };
  const std::string m = (dir / "m.jsonl").string();
  const std::vector<Invocation> invocations = {
      {{"cv", "--manifest", m, "--k", "4", "--epochs", "3", "--hidden-width", "8", "--seed", "5"},
       {"report.json", "report.txt"}},
      {{"cv", "--manifest", m, "--task", "regression", "--k", "4", "--epochs", "3",
        "--hidden-width", "8"},
       {"report.json", "report.txt"}},
      {{"train", "--manifest", m, "--epochs", "3", "--hidden-width", "8", "--seed", "9"},
       {"model.ckpt", "loss_trace.csv", "train.json"}},
      {{"synth", "--n-train", "300", "--n-test", "200", "--seeds", "2"}, {"synth.json"}},
  };
  int compared = 0;
  for (std::size_t i = 0; i < invocations.size(); ++i) {
    std::string first_dir;
    for (int rep = 0; rep < 2; ++rep) {
      auto args = invocations[i].args;
      const auto out = dir / ("run" + std::to_string(i) + "_" + std::to_string(rep));
      args.insert(args.end(), {"--out", out.string()});
      if (cli(args) != 0) return {false, "invocation failed: " + args[0]};
    }
    for (const auto& f : invocations[i].files) {
      const auto a = testing::slurp(dir / ("run" + std::to_string(i) + "_0") / f);
      const auto b = testing::slurp(dir / ("run" + std::to_string(i) + "_1") / f);
      if (a.empty() || a != b) return {false, "differs: " + invocations[i].args[0] + " " + f};
      ++compared;
    }
  }
  for (int rep = 0; rep < 2; ++rep) {
    if (cli({"extract", wavs.string(), "--out",
             (dir / ("x" + std::to_string(rep) + ".jsonl")).string()}) != 0) {
      return {false, "extract failed"};
    }
  }
  if (testing::slurp(dir / "x0.jsonl") != testing::slurp(dir / "x1.jsonl")) {
    return {false, "differs: extract manifest"};
  }
  ++compared;
  return {true, fmt("%.0f output files byte-identical across repeated runs", compared)};
}

}  // namespace
}  // namespace mmpoe

int main() {
  using namespace mmpoe;
  report(1, "gradient correctness", gradient_check);
  report(2, "PoE algebra", poe_algebra);
  report(3, "NLL monotone in expert confidence", monotonicity);
  report(4, "shortcut benchmark", shortcut_benchmark);
  report(5, "metric oracles", metric_oracles);
  report(6, "fold-plan invariants", fold_invariants);
  report(7, "protocol shape", protocol_shape);
  report(8, "acoustic tolerances", acoustic_tolerances);
  report(9, "determinism", determinism);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
