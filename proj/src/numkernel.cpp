#include "mmpoe/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "mmpoe/error.hpp"

namespace mmpoe {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

double relu(double v) { return v > 0.0 ? v : 0.0; }

}  // namespace

std::string_view to_string(Activation activation) {
  return activation == Activation::kRelu ? "relu" : "identity";
}

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::kRelu;
  if (text == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation \"" + std::string(text) + "\"");
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    require(layer.weight.data.size() == layer.weight.rows * layer.weight.cols,
            "layer " + std::to_string(l) + ": weight storage does not match shape");
    require(layer.bias.size() == layer.out_dim(),
            "layer " + std::to_string(l) + ": bias size does not match output dim");
    if (l > 0) {
      require(layers_[l - 1].out_dim() == layer.in_dim(),
              "layer " + std::to_string(l) + ": input dim " + std::to_string(layer.in_dim()) +
                  " does not chain with previous output dim " +
                  std::to_string(layers_[l - 1].out_dim()));
    }
  }
}

DenseNet DenseNet::zeros(std::span<const std::size_t> dims, Activation hidden) {
  require(dims.size() >= 2, "a net needs at least input and output dims");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    require(dims[l] > 0 && dims[l + 1] > 0, "layer dims must be positive");
    DenseLayer layer;
    layer.weight = Matrix(dims[l + 1], dims[l]);
    layer.bias.assign(dims[l + 1], 0.0);
    layer.activation = (l + 2 == dims.size()) ? Activation::kIdentity : hidden;
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers));
}

DenseNet DenseNet::glorot(std::span<const std::size_t> dims, Activation hidden,
                          std::uint64_t seed) {
  DenseNet net = zeros(dims, hidden);
  std::mt19937_64 rng(seed);
  for (auto& layer : net.layers_) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : layer.weight.data) w = dist(rng);
  }
  return net;
}

std::size_t DenseNet::input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }

std::size_t DenseNet::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().out_dim();
}

std::size_t DenseNet::parameter_count() const {
  std::size_t total = 0;
  for (const auto& layer : layers_) total += layer.weight.data.size() + layer.bias.size();
  return total;
}

std::vector<std::span<double>> DenseNet::parameters() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers_) {
    out.emplace_back(layer.weight.data);
    out.emplace_back(layer.bias);
  }
  return out;
}

std::vector<std::span<const double>> DenseNet::parameters() const {
  std::vector<std::span<const double>> out;
  for (const auto& layer : layers_) {
    out.emplace_back(layer.weight.data);
    out.emplace_back(layer.bias);
  }
  return out;
}

NetGrad NetGrad::zeros_like(const DenseNet& net) {
  NetGrad g;
  for (const auto& layer : net.layers()) {
    g.weight.emplace_back(layer.weight.rows, layer.weight.cols);
    g.bias.emplace_back(layer.bias.size(), 0.0);
  }
  return g;
}

void NetGrad::add(const NetGrad& other) {
  require(weight.size() == other.weight.size(), "NetGrad::add: layer count mismatch");
  for (std::size_t l = 0; l < weight.size(); ++l) {
    require(weight[l].data.size() == other.weight[l].data.size() &&
                bias[l].size() == other.bias[l].size(),
            "NetGrad::add: shape mismatch");
    for (std::size_t i = 0; i < weight[l].data.size(); ++i) {
      weight[l].data[i] += other.weight[l].data[i];
    }
    for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
  }
}

void NetGrad::scale(double factor) {
  for (auto& w : weight) {
    for (double& v : w.data) v *= factor;
  }
  for (auto& b : bias) {
    for (double& v : b) v *= factor;
  }
}

std::vector<std::span<double>> NetGrad::blocks() {
  std::vector<std::span<double>> out;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    out.emplace_back(weight[l].data);
    out.emplace_back(bias[l]);
  }
  return out;
}

std::vector<std::span<const double>> NetGrad::blocks() const {
  std::vector<std::span<const double>> out;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    out.emplace_back(weight[l].data);
    out.emplace_back(bias[l]);
  }
  return out;
}

std::vector<double> NetGrad::flatten() const {
  std::vector<double> out;
  for (const auto& block : blocks()) out.insert(out.end(), block.begin(), block.end());
  return out;
}

ForwardResult forward(const DenseNet& net, std::span<const double> x) {
  require(!net.empty(), "forward: empty net");
  require(x.size() == net.input_dim(), "forward: input dim " + std::to_string(x.size()) +
                                           " != net input dim " +
                                           std::to_string(net.input_dim()));
  for (double v : x) {
    if (!std::isfinite(v)) throw Error("forward: non-finite input");
  }
  ForwardResult result;
  Tape& tape = result.tape;
  std::vector<double> current(x.begin(), x.end());
  for (const auto& layer : net.layers()) {
    std::vector<double> z(layer.bias);
    const std::size_t in = layer.in_dim();
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      const double* row = layer.weight.data.data() + r * in;
      double acc = 0.0;
      for (std::size_t c = 0; c < in; ++c) acc += row[c] * current[c];
      z[r] += acc;
    }
    std::vector<double> a(z);
    if (layer.activation == Activation::kRelu) {
      for (double& v : a) v = relu(v);
    }
    tape.shapes.emplace_back(layer.out_dim(), layer.in_dim());
    tape.inputs.push_back(std::move(current));
    tape.preact.push_back(std::move(z));
    current = std::move(a);
  }
  result.output = std::move(current);
  return result;
}

std::vector<double> infer(const DenseNet& net, std::span<const double> x) {
  return forward(net, x).output;
}

BackwardResult backward(const DenseNet& net, const Tape& tape,
                        std::span<const double> output_grad) {
  const auto& layers = net.layers();
  if (tape.shapes.size() != layers.size()) {
    throw Error("backward: tape does not match net (layer count)");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (tape.shapes[l] != std::make_pair(layers[l].out_dim(), layers[l].in_dim()) ||
        tape.inputs[l].size() != layers[l].in_dim() ||
        tape.preact[l].size() != layers[l].out_dim()) {
      throw Error("backward: tape does not match net (layer " + std::to_string(l) + ")");
    }
  }
  require(output_grad.size() == net.output_dim(), "backward: output grad dim mismatch");

  BackwardResult result;
  result.grad = NetGrad::zeros_like(net);
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    if (layer.activation == Activation::kRelu) {
      for (std::size_t r = 0; r < delta.size(); ++r) {
        if (!(tape.preact[l][r] > 0.0)) delta[r] = 0.0;
      }
    }
    const std::size_t in = layer.in_dim();
    const auto& input = tape.inputs[l];
    Matrix& gw = result.grad.weight[l];
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      double* row = gw.data.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) row[c] = delta[r] * input[c];
    }
    result.grad.bias[l] = delta;
    std::vector<double> prev(in, 0.0);
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
      const double* row = layer.weight.data.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) prev[c] += row[c] * delta[r];
    }
    delta = std::move(prev);
  }
  result.input_grad = std::move(delta);
  return result;
}

std::vector<double> log_softmax(std::span<const double> z) {
  require(!z.empty(), "log_softmax: empty input");
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - peak);
  const double log_norm = peak + std::log(total);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - log_norm;
  return out;
}

std::vector<double> softmax(std::span<const double> z) {
  auto out = log_softmax(z);
  for (double& v : out) v = std::exp(v);
  return out;
}

double nll_loss(std::span<const double> logp, std::size_t label) {
  require(label < logp.size(), "nll_loss: label " + std::to_string(label) +
                                   " out of range for " + std::to_string(logp.size()) +
                                   " classes");
  return -logp[label];
}

double mse_loss(double pred, double target) {
  const double d = pred - target;
  return d * d;
}

double mean_mse(std::span<const double> preds, std::span<const double> targets) {
  require(preds.size() == targets.size() && !preds.empty(), "mean_mse: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) total += mse_loss(preds[i], targets[i]);
  return total / static_cast<double>(preds.size());
}

std::vector<double> log_softmax_vjp(std::span<const double> z, std::span<const double> g) {
  require(z.size() == g.size(), "log_softmax_vjp: size mismatch");
  const auto p = softmax(z);
  double g_sum = 0.0;
  for (double v : g) g_sum += v;
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = g[i] - p[i] * g_sum;
  return out;
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdamW ? "adamw" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "adamw" || text == "adam") return OptimizerKind::kAdamW;
  if (text == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer \"" + std::string(text) + "\" (expected adamw|sgd)");
}

OptimizerState::OptimizerState(const DenseNet& net, OptimizerSettings s) : settings(s) {
  for (const auto& block : net.parameters()) {
    first_moment.emplace_back(block.size(), 0.0);
    second_moment.emplace_back(block.size(), 0.0);
  }
}

void optimizer_step(OptimizerState& state, DenseNet& net, const NetGrad& grad) {
  auto params = net.parameters();
  const auto grads = grad.blocks();
  require(params.size() == grads.size() && params.size() == state.first_moment.size(),
          "optimizer_step: block count mismatch");
  for (std::size_t b = 0; b < params.size(); ++b) {
    require(params[b].size() == grads[b].size() &&
                params[b].size() == state.first_moment[b].size(),
            "optimizer_step: block " + std::to_string(b) + " shape mismatch");
  }
  const auto& s = state.settings;
  ++state.step;
  const double decay = 1.0 - s.learning_rate * s.weight_decay;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(s.beta1, t);
  const double bias2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    const auto g = grads[b];
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] *= decay;
      if (s.kind == OptimizerKind::kSgd) {
        p[i] -= s.learning_rate * g[i];
        continue;
      }
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
  }
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  require(analytic.size() == numeric.size(), "max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double err = relative_error(analytic[i], numeric[i]);
    if (!(err <= worst)) worst = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
  }
  return worst;
}

std::vector<double> central_differences(const std::vector<std::span<double>>& params,
                                        const std::function<double()>& loss, double step) {
  std::vector<double> out;
  for (auto block : params) {
    for (double& entry : block) {
      const double saved = entry;
      entry = saved + step;
      const double up = loss();
      entry = saved - step;
      const double down = loss();
      entry = saved;
      out.push_back((up - down) / (2.0 * step));
    }
  }
  return out;
}

double finite_diff_check(const DenseNet& net, std::span<const double> x, std::size_t label,
                         double step) {
  const auto fwd = forward(net, x);
  const auto logp = log_softmax(fwd.output);
  std::vector<double> g = softmax(fwd.output);
  require(label < g.size(), "finite_diff_check: label out of range");
  g[label] -= 1.0;
  const auto analytic = backward(net, fwd.tape, g).grad.flatten();

  DenseNet probe = net;
  const auto numeric = central_differences(
      probe.parameters(),
      [&] { return nll_loss(log_softmax(infer(probe, x)), label); }, step);
  return max_relative_error(analytic, numeric);
}

}  // namespace mmpoe
