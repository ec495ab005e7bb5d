#include "mmpoe/poe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mmpoe/error.hpp"
#include "mmpoe/rng.hpp"
#include "mmpoe/sidecar.hpp"

namespace mmpoe {

namespace {

using Json = nlohmann::json;

constexpr char kCheckpointMagic[4] = {'P', 'O', 'E', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Head order used for seeding and checkpoints.
constexpr std::array<const char*, 5> kHeadNames = {"multi", "speech", "text", "acoustic",
                                                   "regression"};

std::array<DenseNet*, 5> heads(ModelBundle& b) {
  return {&b.multi, &b.speech, &b.text, &b.acoustic, &b.regression};
}

std::array<const DenseNet*, 5> heads(const ModelBundle& b) {
  return {&b.multi, &b.speech, &b.text, &b.acoustic, &b.regression};
}

std::vector<std::size_t> head_dims(std::size_t in, std::size_t out, const PoEConfig& config) {
  std::vector<std::size_t> dims = {in};
  for (std::size_t l = 0; l < config.hidden_layers; ++l) dims.push_back(config.hidden_width);
  dims.push_back(out);
  return dims;
}

void check_record_dims(const ModelBundle& bundle, const FeatureRecord& rec) {
  if (rec.speech_vec.size() != bundle.dims.speech || rec.text_vec.size() != bundle.dims.text ||
      rec.acoustic_vec.size() != bundle.dims.acoustic) {
    throw DimensionError("record \"" + rec.sample_id + "\" dims (" +
                         std::to_string(rec.speech_vec.size()) + ", " +
                         std::to_string(rec.text_vec.size()) + ", " +
                         std::to_string(rec.acoustic_vec.size()) +
                         ") do not match model dims (" + std::to_string(bundle.dims.speech) +
                         ", " + std::to_string(bundle.dims.text) + ", " +
                         std::to_string(bundle.dims.acoustic) + ")");
  }
}

void add_into(NetGrad& acc, const NetGrad& g) {
  if (g.empty()) return;
  if (acc.empty()) {
    acc = g;
  } else {
    acc.add(g);
  }
}

// Combined log-distribution plus the per-head forward results it came from.
struct PoEForward {
  ForwardResult multi;
  std::array<std::optional<ForwardResult>, 3> experts;
  std::vector<double> log_combined;
};

PoEForward poe_forward(const ModelBundle& bundle, const FeatureRecord& rec,
                       ExpertSet enabled) {
  check_record_dims(bundle, rec);
  PoEForward out;
  out.multi = forward(bundle.multi, fused_input(rec));
  std::vector<std::vector<double>> expert_logits;
  for (Modality m : kAllModalities) {
    if (!enabled.contains(m)) continue;
    auto& slot = out.experts[static_cast<std::size_t>(m)];
    slot = forward(bundle.expert(m), modality_vector(rec, m));
    expert_logits.push_back(slot->output);
  }
  out.log_combined = poe_combine(out.multi.output, expert_logits);
  return out;
}

std::size_t count_classes(std::span<const FeatureRecord> records) {
  std::array<bool, kNumClasses> seen{};
  for (const auto& rec : records) seen[class_index(rec.label)] = true;
  return static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
}

}  // namespace

std::string_view to_string(Modality modality) {
  switch (modality) {
    case Modality::kSpeech: return "s";
    case Modality::kText: return "t";
    case Modality::kAcoustic: return "a";
  }
  return "?";
}

Modality parse_modality(std::string_view text) {
  if (text == "s" || text == "S" || text == "speech") return Modality::kSpeech;
  if (text == "t" || text == "T" || text == "text") return Modality::kText;
  if (text == "a" || text == "A" || text == "acoustic") return Modality::kAcoustic;
  throw ConfigError("unknown modality \"" + std::string(text) + "\" (expected s|t|a)");
}

std::span<const double> modality_vector(const FeatureRecord& rec, Modality modality) {
  switch (modality) {
    case Modality::kSpeech: return rec.speech_vec;
    case Modality::kText: return rec.text_vec;
    case Modality::kAcoustic: return rec.acoustic_vec;
  }
  return {};
}

std::size_t modality_dim(const Dims& dims, Modality modality) {
  switch (modality) {
    case Modality::kSpeech: return dims.speech;
    case Modality::kText: return dims.text;
    case Modality::kAcoustic: return dims.acoustic;
  }
  return 0;
}

ExpertSet ExpertSet::parse(std::string_view text) {
  ExpertSet set = none();
  if (text == "none" || text.empty()) return set;
  for (char c : text) {
    if (c == ',' || c == ' ') continue;
    set.insert(parse_modality(std::string_view(&c, 1)));
  }
  return set;
}

std::size_t ExpertSet::size() const {
  return static_cast<std::size_t>(contains(Modality::kSpeech)) +
         static_cast<std::size_t>(contains(Modality::kText)) +
         static_cast<std::size_t>(contains(Modality::kAcoustic));
}

std::string ExpertSet::to_string() const {
  std::string out;
  for (Modality m : kAllModalities) {
    if (!contains(m)) continue;
    if (!out.empty()) out += ',';
    out += mmpoe::to_string(m);
  }
  return out.empty() ? "none" : out;
}

std::string_view to_string(Task task) {
  return task == Task::kClassification ? "classification" : "regression";
}

Task parse_task(std::string_view text) {
  if (text == "classification") return Task::kClassification;
  if (text == "regression") return Task::kRegression;
  throw ConfigError("unknown task \"" + std::string(text) +
                    "\" (expected classification|regression)");
}

void PoEConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("weight_decay must be non-negative");
  }
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (hidden_layers > 0 && hidden_width == 0) {
    throw ConfigError("hidden_width must be positive when hidden_layers > 0");
  }
  if (regression_uses_poe) {
    throw ConfigError("regression_uses_poe: product-of-experts regression is not supported");
  }
}

Json to_json(const PoEConfig& c) {
  Json j;
  j["experts"] = c.experts.to_string();
  j["detach_experts_from_multi"] = c.detach_experts_from_multi;
  j["epochs"] = c.epochs;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["task"] = to_string(c.task);
  j["regression_uses_poe"] = c.regression_uses_poe;
  j["optimizer"] = to_string(c.optimizer);
  j["hidden_width"] = c.hidden_width;
  j["hidden_layers"] = c.hidden_layers;
  j["freeze_experts"] = c.freeze_experts;
  j["standardize_targets"] = c.standardize_targets;
  j["clamp_mmse"] = c.clamp_mmse;
  return j;
}

PoEConfig poe_config_from_json(const Json& j, PoEConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "experts") {
        c.experts = ExpertSet::parse(value.get<std::string>());
      } else if (key == "detach_experts_from_multi") {
        c.detach_experts_from_multi = value.get<bool>();
      } else if (key == "epochs") {
        c.epochs = value.get<int>();
      } else if (key == "lr") {
        c.lr = value.get<double>();
      } else if (key == "weight_decay") {
        c.weight_decay = value.get<double>();
      } else if (key == "batch_size") {
        c.batch_size = value.get<int>();
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "task") {
        c.task = parse_task(value.get<std::string>());
      } else if (key == "regression_uses_poe") {
        c.regression_uses_poe = value.get<bool>();
      } else if (key == "optimizer") {
        c.optimizer = parse_optimizer(value.get<std::string>());
      } else if (key == "hidden_width") {
        c.hidden_width = value.get<std::size_t>();
      } else if (key == "hidden_layers") {
        c.hidden_layers = value.get<std::size_t>();
      } else if (key == "freeze_experts") {
        c.freeze_experts = value.get<bool>();
      } else if (key == "standardize_targets") {
        c.standardize_targets = value.get<bool>();
      } else if (key == "clamp_mmse") {
        c.clamp_mmse = value.get<bool>();
      } else {
        throw ConfigError("unknown config key \"" + key + "\"");
      }
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: wrong value type: ") + e.what());
  }
  return c;
}

PoEConfig load_poe_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return poe_config_from_json(j);
}

DenseNet& ModelBundle::expert(Modality modality) {
  switch (modality) {
    case Modality::kSpeech: return speech;
    case Modality::kText: return text;
    case Modality::kAcoustic: break;
  }
  return acoustic;
}

const DenseNet& ModelBundle::expert(Modality modality) const {
  return const_cast<ModelBundle*>(this)->expert(modality);
}

ModelBundle make_bundle(const Dims& dims, const PoEConfig& config) {
  if (dims.speech == 0 || dims.text == 0 || dims.acoustic == 0) {
    throw DimensionError("make_bundle: modality dims must be positive");
  }
  ModelBundle b;
  b.dims = dims;
  b.seed = config.seed;
  const std::array<std::size_t, 5> inputs = {dims.fused(), dims.speech, dims.text,
                                             dims.acoustic, dims.fused()};
  const std::array<std::size_t, 5> outputs = {kNumClasses, kNumClasses, kNumClasses,
                                              kNumClasses, 1};
  auto slots = heads(b);
  for (std::size_t h = 0; h < slots.size(); ++h) {
    const auto layer_dims = head_dims(inputs[h], outputs[h], config);
    *slots[h] = DenseNet::glorot(layer_dims, Activation::kRelu, mix_seed(config.seed, h));
  }
  return b;
}

std::vector<double> fused_input(const FeatureRecord& rec) {
  std::vector<double> x;
  x.reserve(rec.speech_vec.size() + rec.text_vec.size() + rec.acoustic_vec.size());
  x.insert(x.end(), rec.speech_vec.begin(), rec.speech_vec.end());
  x.insert(x.end(), rec.text_vec.begin(), rec.text_vec.end());
  x.insert(x.end(), rec.acoustic_vec.begin(), rec.acoustic_vec.end());
  return x;
}

std::vector<double> multi_forward(const ModelBundle& bundle, const FeatureRecord& rec) {
  check_record_dims(bundle, rec);
  return infer(bundle.multi, fused_input(rec));
}

std::vector<double> expert_forward(const ModelBundle& bundle, const FeatureRecord& rec,
                                   Modality modality, ExpertSet enabled) {
  if (!enabled.contains(modality)) {
    throw ConfigError("expert \"" + std::string(to_string(modality)) + "\" is not enabled");
  }
  check_record_dims(bundle, rec);
  return infer(bundle.expert(modality), modality_vector(rec, modality));
}

std::vector<double> poe_combine(std::span<const double> multi_logits,
                                std::span<const std::vector<double>> expert_logits) {
  auto sum = log_softmax(multi_logits);
  // The empty product is softmax(z_M) itself.
  if (expert_logits.empty()) return sum;
  for (const auto& z : expert_logits) {
    if (z.size() != sum.size()) throw DimensionError("poe_combine: logit dim mismatch");
    const auto lp = log_softmax(z);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += lp[i];
  }
  return log_softmax(sum);
}

NetGrad& BundleGrad::expert(Modality modality) {
  switch (modality) {
    case Modality::kSpeech: return speech;
    case Modality::kText: return text;
    case Modality::kAcoustic: break;
  }
  return acoustic;
}

const NetGrad& BundleGrad::expert(Modality modality) const {
  return const_cast<BundleGrad*>(this)->expert(modality);
}

void BundleGrad::add(const BundleGrad& other) {
  add_into(multi, other.multi);
  add_into(speech, other.speech);
  add_into(text, other.text);
  add_into(acoustic, other.acoustic);
  add_into(regression, other.regression);
}

void BundleGrad::scale(double factor) {
  for (NetGrad* g : {&multi, &speech, &text, &acoustic, &regression}) g->scale(factor);
}

double poe_sample_gradient(const ModelBundle& bundle, const FeatureRecord& rec,
                           const PoEConfig& config, const TrainableHeads& trainable,
                           BundleGrad& out) {
  const PoEForward fwd = poe_forward(bundle, rec, config.experts);
  const std::size_t y = class_index(rec.label);
  const double loss = nll_loss(fwd.log_combined, y);

  // dL/d(sum of log-distributions) = p_F - e_y. Its entries sum to zero, so
  // the log_softmax Jacobian of every head passes it through unchanged and
  // each head's logit gradient is exactly this vector.
  std::vector<double> g(fwd.log_combined.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::exp(fwd.log_combined[i]);
  g[y] -= 1.0;

  out = BundleGrad{};
  if (trainable.multi) {
    // Expert log-distributions enter as constants here whether or not
    // detach_experts_from_multi is set: the heads share no parameters.
    out.multi = backward(bundle.multi, fwd.multi.tape, g).grad;
  }
  for (Modality m : kAllModalities) {
    if (!config.experts.contains(m) || !trainable.experts.contains(m)) continue;
    const auto& expert_fwd = fwd.experts[static_cast<std::size_t>(m)];
    out.expert(m) = backward(bundle.expert(m), expert_fwd->tape, g).grad;
  }
  return loss;
}

double poe_sample_loss(const ModelBundle& bundle, const FeatureRecord& rec,
                       const PoEConfig& config) {
  return nll_loss(poe_forward(bundle, rec, config.experts).log_combined,
                  class_index(rec.label));
}

namespace {

template <class SampleFn>
BatchGradient reduce_batch(std::span<const std::size_t> batch, Exec exec, SampleFn&& sample) {
  if (batch.empty()) throw Error("empty batch");
  BatchGradient out;
  if (exec == Exec::kSerial) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      BundleGrad g;
      out.mean_loss += sample(batch[i], g);
      out.grad.add(g);
    }
  } else {
    // One sample per thread at a time keeps memory bounded; the reduction
    // still walks the batch in order.
    const std::size_t block = static_cast<std::size_t>(std::max(1, thread_count()));
    std::vector<BundleGrad> grads(std::min(block, batch.size()));
    std::vector<double> losses(grads.size());
    for (std::size_t start = 0; start < batch.size(); start += block) {
      const std::size_t n = std::min(block, batch.size() - start);
      for_each_index(n, exec,
                     [&](std::size_t i) { losses[i] = sample(batch[start + i], grads[i]); });
      for (std::size_t i = 0; i < n; ++i) {
        out.mean_loss += losses[i];
        out.grad.add(grads[i]);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.mean_loss *= inv;
  out.grad.scale(inv);
  return out;
}

}  // namespace

BatchGradient poe_batch_gradient(const ModelBundle& bundle,
                                 std::span<const FeatureRecord> records,
                                 std::span<const std::size_t> batch, const PoEConfig& config,
                                 const TrainableHeads& trainable, Exec exec) {
  return reduce_batch(batch, exec, [&](std::size_t idx, BundleGrad& g) {
    return poe_sample_gradient(bundle, records[idx], config, trainable, g);
  });
}

BatchGradient regression_batch_gradient(const ModelBundle& bundle,
                                        std::span<const FeatureRecord> records,
                                        std::span<const std::size_t> batch, Exec exec) {
  return reduce_batch(batch, exec, [&](std::size_t idx, BundleGrad& g) {
    const auto& rec = records[idx];
    check_record_dims(bundle, rec);
    const auto fwd = forward(bundle.regression, fused_input(rec));
    const double target = (rec.mmse - bundle.target_mean) / bundle.target_scale;
    const double diff = fwd.output[0] - target;
    const std::array<double, 1> dpred = {2.0 * diff};
    g = BundleGrad{};
    g.regression = backward(bundle.regression, fwd.tape, dpred).grad;
    return diff * diff;
  });
}

std::uint64_t fold_seed(std::uint64_t seed, std::uint64_t fold_index) {
  return seed ^ fold_index;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

namespace {

OptimizerSettings optimizer_settings(const PoEConfig& config) {
  OptimizerSettings s;
  s.kind = config.optimizer;
  s.learning_rate = config.lr;
  s.weight_decay = config.weight_decay;
  return s;
}

void check_training_set(const ModelBundle& bundle, std::span<const FeatureRecord> records) {
  if (records.empty()) throw Error("training set is empty");
  for (const auto& rec : records) check_record_dims(bundle, rec);
}

}  // namespace

TrainResult train_classification(ModelBundle bundle, std::span<const FeatureRecord> records,
                                 const PoEConfig& config, std::uint64_t fold_index) {
  config.validate();
  check_training_set(bundle, records);
  if (count_classes(records) < kNumClasses) {
    throw Error("training set contains a single class");
  }
  TrainableHeads trainable;
  trainable.experts = config.freeze_experts ? ExpertSet::none() : config.experts;

  const auto settings = optimizer_settings(config);
  OptimizerState multi_state(bundle.multi, settings);
  std::array<OptimizerState, 3> expert_states;
  for (Modality m : kAllModalities) {
    if (trainable.experts.contains(m)) {
      expert_states[static_cast<std::size_t>(m)] = OptimizerState(bundle.expert(m), settings);
    }
  }

  TrainResult result;
  std::mt19937_64 rng(fold_seed(config.seed, fold_index));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches =
        epoch_batches(records.size(), static_cast<std::size_t>(config.batch_size), rng);
    double epoch_total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto step =
          poe_batch_gradient(bundle, records, batches[b], config, trainable, config.exec);
      optimizer_step(multi_state, bundle.multi, step.grad.multi);
      for (Modality m : kAllModalities) {
        if (!trainable.experts.contains(m)) continue;
        optimizer_step(expert_states[static_cast<std::size_t>(m)], bundle.expert(m),
                       step.grad.expert(m));
      }
      result.trace.push_back({epoch, static_cast<int>(b), step.mean_loss});
      epoch_total += step.mean_loss;
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(batches.size()));
  }
  result.bundle = std::move(bundle);
  return result;
}

TrainResult train_regression(ModelBundle bundle, std::span<const FeatureRecord> records,
                             const PoEConfig& config, std::uint64_t fold_index) {
  config.validate();
  check_training_set(bundle, records);
  for (const auto& rec : records) {
    if (!(rec.mmse >= kMmseMin && rec.mmse <= kMmseMax)) {
      throw Error("record \"" + rec.sample_id + "\": mmse out of range");
    }
  }
  if (config.standardize_targets) {
    double mean = 0.0;
    for (const auto& rec : records) mean += rec.mmse;
    mean /= static_cast<double>(records.size());
    double var = 0.0;
    for (const auto& rec : records) var += (rec.mmse - mean) * (rec.mmse - mean);
    var /= static_cast<double>(records.size());
    bundle.target_mean = mean;
    bundle.target_scale = var > 0.0 ? std::sqrt(var) : 1.0;
  } else {
    bundle.target_mean = 0.0;
    bundle.target_scale = 1.0;
  }

  OptimizerState state(bundle.regression, optimizer_settings(config));
  const double unit_scale = bundle.target_scale * bundle.target_scale;
  TrainResult result;
  std::mt19937_64 rng(fold_seed(config.seed, fold_index));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches =
        epoch_batches(records.size(), static_cast<std::size_t>(config.batch_size), rng);
    double epoch_total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto step = regression_batch_gradient(bundle, records, batches[b], config.exec);
      optimizer_step(state, bundle.regression, step.grad.regression);
      // Trace in squared MMSE points.
      const double loss = step.mean_loss * unit_scale;
      result.trace.push_back({epoch, static_cast<int>(b), loss});
      epoch_total += loss;
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(batches.size()));
  }
  result.bundle = std::move(bundle);
  return result;
}

std::array<double, 2> predict_proba(const ModelBundle& bundle, const FeatureRecord& rec) {
  const auto p = softmax(multi_forward(bundle, rec));
  return {p[0], p[1]};
}

Label predict_label(const ModelBundle& bundle, const FeatureRecord& rec) {
  const auto p = predict_proba(bundle, rec);
  return p[0] >= p[1] ? Label::kMci : Label::kNc;
}

double predict_mmse(const ModelBundle& bundle, const FeatureRecord& rec, bool clamp) {
  check_record_dims(bundle, rec);
  const double raw = infer(bundle.regression, fused_input(rec))[0];
  const double mmse = raw * bundle.target_scale + bundle.target_mean;
  return clamp ? std::clamp(mmse, kMmseMin, kMmseMax) : mmse;
}

void write_loss_trace_csv(std::ostream& out, std::span<const LossPoint> trace) {
  out << "epoch,batch,loss\n";
  std::ostringstream row;
  row << std::setprecision(17);
  for (const auto& p : trace) {
    row.str({});
    row << p.epoch << ',' << p.batch << ',' << p.loss << '\n';
    out << row.str();
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle,
                     const PoEConfig& config) {
  Json meta;
  meta["format"] = "mmpoe-checkpoint";
  meta["dims"] = {{"d_s", bundle.dims.speech},
                  {"d_t", bundle.dims.text},
                  {"d_a", bundle.dims.acoustic}};
  meta["seed"] = bundle.seed;
  meta["target_mean"] = bundle.target_mean;
  meta["target_scale"] = bundle.target_scale;
  meta["config"] = to_json(config);
  Json head_meta = Json::array();
  std::vector<std::pair<std::string, const DenseLayer*>> tensors;
  const auto slots = heads(bundle);
  for (std::size_t h = 0; h < slots.size(); ++h) {
    Json layers = Json::array();
    const auto& net_layers = slots[h]->layers();
    for (std::size_t l = 0; l < net_layers.size(); ++l) {
      layers.push_back({{"in", net_layers[l].in_dim()},
                        {"out", net_layers[l].out_dim()},
                        {"activation", to_string(net_layers[l].activation)}});
      tensors.emplace_back(std::string(kHeadNames[h]) + "." + std::to_string(l),
                           &net_layers[l]);
    }
    head_meta.push_back({{"name", kHeadNames[h]}, {"layers", layers}});
  }
  meta["heads"] = head_meta;
  const std::string meta_text = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, 4);
  write_u32_le(out, kCheckpointVersion);
  write_u32_le(out, static_cast<std::uint32_t>(meta_text.size()));
  out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  for (const auto& [prefix, layer] : tensors) {
    for (const bool is_bias : {false, true}) {
      const std::string name = prefix + (is_bias ? ".bias" : ".weight");
      write_u32_le(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      if (is_bias) {
        write_sidecar_block(out, static_cast<std::uint32_t>(layer->bias.size()), 1,
                            layer->bias);
      } else {
        write_sidecar_block(out, static_cast<std::uint32_t>(layer->weight.cols),
                            static_cast<std::uint32_t>(layer->weight.rows),
                            layer->weight.data);
      }
    }
  }
  if (!out) throw Error("failed writing " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw Error(path.string() + ": not a checkpoint (bad magic)");
  }
  try {
    if (read_u32_le(in) != kCheckpointVersion) throw Error("unsupported checkpoint version");
    const std::uint32_t meta_len = read_u32_le(in);
    std::string meta_text(meta_len, '\0');
    in.read(meta_text.data(), meta_len);
    if (static_cast<std::uint32_t>(in.gcount()) != meta_len) throw Error("truncated metadata");
    const Json meta = Json::parse(meta_text);

    ModelBundle b;
    b.dims.speech = meta.at("dims").at("d_s").get<std::size_t>();
    b.dims.text = meta.at("dims").at("d_t").get<std::size_t>();
    b.dims.acoustic = meta.at("dims").at("d_a").get<std::size_t>();
    b.seed = meta.at("seed").get<std::uint64_t>();
    b.target_mean = meta.at("target_mean").get<double>();
    b.target_scale = meta.at("target_scale").get<double>();
    auto slots = heads(b);
    const auto& head_meta = meta.at("heads");
    if (head_meta.size() != slots.size()) throw Error("unexpected head count");
    for (std::size_t h = 0; h < slots.size(); ++h) {
      if (head_meta[h].at("name").get<std::string>() != kHeadNames[h]) {
        throw Error("unexpected head order");
      }
      std::vector<DenseLayer> layers;
      for (const auto& lm : head_meta[h].at("layers")) {
        DenseLayer layer;
        const auto in_dim = lm.at("in").get<std::size_t>();
        const auto out_dim = lm.at("out").get<std::size_t>();
        layer.activation = parse_activation(lm.at("activation").get<std::string>());
        for (const bool is_bias : {false, true}) {
          const std::uint32_t name_len = read_u32_le(in);
          std::string name(name_len, '\0');
          in.read(name.data(), name_len);
          const SidecarBlock block = read_sidecar_block(in);
          const std::string expected = std::string(kHeadNames[h]) + "." +
                                       std::to_string(layers.size()) +
                                       (is_bias ? ".bias" : ".weight");
          if (name != expected) throw Error("expected tensor " + expected + ", found " + name);
          if (is_bias) {
            if (block.dim != out_dim || block.count != 1) throw Error(name + ": bad shape");
            layer.bias = block.values;
          } else {
            if (block.dim != in_dim || block.count != out_dim) throw Error(name + ": bad shape");
            layer.weight = Matrix(out_dim, in_dim);
            layer.weight.data = block.values;
          }
        }
        layers.push_back(std::move(layer));
      }
      *slots[h] = DenseNet(std::move(layers));
    }
    return b;
  } catch (const Json::exception& e) {
    throw Error(path.string() + ": bad checkpoint metadata: " + e.what());
  } catch (const ManifestError& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace mmpoe
