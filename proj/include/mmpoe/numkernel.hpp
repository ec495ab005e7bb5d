#pragma once

// Small dense feed-forward networks with exact reverse-mode gradients.
// Storage is row-major std::vector<double>; all arithmetic is 64-bit.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace mmpoe {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

enum class Activation { kIdentity, kRelu };

std::string_view to_string(Activation activation);
Activation parse_activation(std::string_view text);

struct DenseLayer {
  Matrix weight;  // out x in
  std::vector<double> bias;
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

class DenseNet {
 public:
  DenseNet() = default;
  /// Throws DimensionError when adjacent layer dims do not chain.
  explicit DenseNet(std::vector<DenseLayer> layers);

  /// Glorot-uniform weights, zero biases. dims = {input, hidden..., output};
  /// hidden layers use `hidden`, the last layer is identity.
  static DenseNet glorot(std::span<const std::size_t> dims, Activation hidden,
                         std::uint64_t seed);
  /// All weights and biases zero.
  static DenseNet zeros(std::span<const std::size_t> dims, Activation hidden);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;
  bool empty() const { return layers_.empty(); }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  /// Views over every parameter block: layer 0 weight, layer 0 bias, layer 1...
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;

  friend bool operator==(const DenseNet&, const DenseNet&) = default;

 private:
  std::vector<DenseLayer> layers_;
};

/// Cached activations of one forward pass. shapes pins the net it came from.
struct Tape {
  std::vector<std::vector<double>> inputs;  // input to each layer
  std::vector<std::vector<double>> preact;  // W x + b for each layer
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
};

struct ForwardResult {
  std::vector<double> output;
  Tape tape;
};

/// Gradient buffers shaped like a DenseNet.
struct NetGrad {
  std::vector<Matrix> weight;
  std::vector<std::vector<double>> bias;

  static NetGrad zeros_like(const DenseNet& net);
  bool empty() const { return weight.empty(); }
  void add(const NetGrad& other);
  void scale(double factor);
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  /// Concatenation of blocks() in order.
  std::vector<double> flatten() const;
  friend bool operator==(const NetGrad&, const NetGrad&) = default;
};

struct BackwardResult {
  NetGrad grad;
  std::vector<double> input_grad;
};

/// Throws DimensionError on a size mismatch and Error on non-finite input.
ForwardResult forward(const DenseNet& net, std::span<const double> x);
/// Forward pass without keeping the tape.
std::vector<double> infer(const DenseNet& net, std::span<const double> x);
/// Throws Error when the tape does not belong to this net.
BackwardResult backward(const DenseNet& net, const Tape& tape,
                        std::span<const double> output_grad);

std::vector<double> log_softmax(std::span<const double> z);
std::vector<double> softmax(std::span<const double> z);
/// -logp[label]. Throws DimensionError when label is out of range.
double nll_loss(std::span<const double> logp, std::size_t label);
double mse_loss(double pred, double target);
double mean_mse(std::span<const double> preds, std::span<const double> targets);

/// Vector-Jacobian product of log_softmax at z: g - softmax(z) * sum(g).
std::vector<double> log_softmax_vjp(std::span<const double> z, std::span<const double> g);

enum class OptimizerKind { kAdamW, kSgd };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::kAdamW;
  double learning_rate = 1e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for one net. Weight decay is decoupled: every
/// parameter is first scaled by (1 - lr * weight_decay), then the Adam (or
/// plain gradient) step is applied.
struct OptimizerState {
  OptimizerSettings settings;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  OptimizerState() = default;
  OptimizerState(const DenseNet& net, OptimizerSettings settings);
};

/// Throws DimensionError when the state or gradient shapes differ from net.
void optimizer_step(OptimizerState& state, DenseNet& net, const NetGrad& grad);

/// |a - n| / max(1, |a|, |n|): relative for large entries, absolute near zero.
double relative_error(double analytic, double numeric);
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

/// Central differences of loss() with respect to every entry of params, in
/// order. Each entry is restored after probing.
std::vector<double> central_differences(const std::vector<std::span<double>>& params,
                                        const std::function<double()>& loss, double step);

/// Compares backward() with central differences on
/// nll_loss(log_softmax(forward(net, x)), label). Returns the max relative
/// error over all parameters.
double finite_diff_check(const DenseNet& net, std::span<const double> x, std::size_t label,
                         double step = 1e-6);

}  // namespace mmpoe
