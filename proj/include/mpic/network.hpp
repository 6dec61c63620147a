#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mpic/layers.hpp"

namespace mpic {

/// A sequential stack of layers.
struct Network {
  std::vector<Layer> layers;

  bool operator==(const Network&) const = default;
};

/// Per-layer values recorded during a forward pass for the backward pass.
struct LayerCache {
  Tensor input;
  std::vector<std::size_t> argmax;
  BatchNormCache bn;
};

struct Tape {
  std::vector<LayerCache> caches;
};

struct Gradients {
  std::vector<LayerGrads> layers;
};

/// Runs the stack. Train mode uses batch statistics and updates running
/// statistics; a tape, when given, records what backward() needs.
Tensor forward(Network& net, const Tensor& input, Mode mode, Tape* tape = nullptr);

/// Inference-mode forward pass on a frozen network.
Tensor infer(const Network& net, const Tensor& input);

/// Reverse pass through a taped forward. Fills `grads` and returns the
/// gradient with respect to the network input.
Tensor backward(const Network& net, const Tape& tape, const Tensor& grad_out,
                Gradients& grads);

struct BackpropResult {
  double loss = 0.0;
  Gradients grads;
  Tensor logits;
};

/// Train-mode forward, mean softmax cross-entropy and full backward pass.
BackpropResult backprop_network(Network& net, const Tensor& input,
                                std::span<const int> labels);

/// Learnable arrays in a fixed order: per layer, weight then bias.
std::vector<std::span<double>> parameters(Network& net);
std::vector<std::span<const double>> parameters(const Network& net);
/// Gradient arrays in the same order as parameters().
std::vector<std::span<const double>> gradient_views(const Gradients& grads);

/// Shape of the output for a given input shape, without computing values.
std::vector<std::size_t> output_shape(const Network& net, std::vector<std::size_t> input_shape);

enum class CountConvention {
  Reported,   // 3 values per batch-norm channel
  Learnable,  // gamma and beta only
};

std::size_t count_parameters(const Layer& layer, CountConvention convention);
std::size_t count_parameters(const Network& net, CountConvention convention);

// ---------------------------------------------------------------- Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// Zeroed accumulators sized to match `params`.
AdamState make_adam_state(std::span<const std::span<double>> params, AdamConfig config);

/// One bias-corrected Adam update.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state);

}  // namespace mpic
