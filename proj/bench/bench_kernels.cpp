// Serial reference vs OpenMP for the two hot kernels: the per-batch PoE
// gradient and the per-frame F0 search.

#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "mmpoe/acoustic.hpp"
#include "mmpoe/poe.hpp"

namespace {

using namespace mmpoe;

std::vector<FeatureRecord> random_records(const Dims& dims, std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<FeatureRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = out[i];
    r.sample_id = r.participant_id = "b" + std::to_string(i);
    r.label = i % 2 ? Label::kNc : Label::kMci;
    r.speech_vec.resize(dims.speech);
    r.text_vec.resize(dims.text);
    r.acoustic_vec.resize(dims.acoustic);
    for (auto* v : {&r.speech_vec, &r.text_vec, &r.acoustic_vec}) {
      for (auto& x : *v) x = normal(rng);
    }
  }
  return out;
}

void BM_PoEBatchGradient(benchmark::State& state) {
  const Exec exec = state.range(0) ? Exec::kParallel : Exec::kSerial;
  const auto batch_size = static_cast<std::size_t>(state.range(1));
  // Encoder-sized inputs: 768-d speech and text vectors plus 10 acoustic.
  const Dims dims{768, 768, 10};
  PoEConfig config;
  const auto bundle = make_bundle(dims, config);
  const auto records = random_records(dims, batch_size);
  std::vector<std::size_t> batch(batch_size);
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  for (auto _ : state) {
    auto g = poe_batch_gradient(bundle, records, batch, config, {}, exec);
    benchmark::DoNotOptimize(g.mean_loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(batch_size));
  state.SetLabel(std::string(to_string(exec)));
}
BENCHMARK(BM_PoEBatchGradient)
    ->ArgsProduct({{0, 1}, {16, 64}})
    ->Unit(benchmark::kMillisecond);

void BM_F0Contour(benchmark::State& state) {
  const Exec exec = state.range(0) ? Exec::kParallel : Exec::kSerial;
  const double seconds = static_cast<double>(state.range(1));
  AudioClip clip;
  clip.samples.resize(static_cast<std::size_t>(seconds * clip.sample_rate));
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    const double t = static_cast<double>(i) / clip.sample_rate;
    clip.samples[i] = 0.5 * std::sin(2.0 * std::numbers::pi * (150.0 + 20.0 * std::sin(t)) * t);
  }
  for (auto _ : state) {
    auto c = estimate_f0_contour(clip, {}, exec);
    benchmark::DoNotOptimize(c.frames.data());
  }
  state.SetLabel(std::string(to_string(exec)));
}
BENCHMARK(BM_F0Contour)->ArgsProduct({{0, 1}, {5, 30}})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
