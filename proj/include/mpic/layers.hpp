#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "mpic/tensor.hpp"

namespace mpic {

enum class LayerKind : std::uint32_t {
  Conv1D = 1,
  MaxPool1D = 2,
  ReLU = 3,
  BatchNorm1D = 4,
  Linear = 5,
};

std::string_view layer_kind_name(LayerKind kind);

enum class Mode { Train, Infer };

inline constexpr std::size_t kConvWidth = 3;
inline constexpr std::size_t kPoolWidth = 2;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// One layer of the fixed layer set.
///
/// Value layout per kind:
///   Conv1D      weight[out][in][width], no bias
///   Linear      weight[in][out], bias[out]
///   BatchNorm1D weight = gamma[C], bias = beta[C], running_mean[C], running_var[C]
///   MaxPool1D, ReLU carry no values.
struct Layer {
  LayerKind kind = LayerKind::ReLU;
  std::size_t in = 0;     // input channels / features
  std::size_t out = 0;    // output channels / features
  std::size_t width = 0;  // kernel or pool width
  std::vector<double> weight;
  std::vector<double> bias;
  std::vector<double> running_mean;
  std::vector<double> running_var;

  bool operator==(const Layer&) const = default;
};

Layer make_conv1d(std::size_t in_channels, std::size_t out_channels);
Layer make_maxpool1d();
Layer make_relu();
Layer make_batchnorm1d(std::size_t channels);
Layer make_linear(std::size_t in_features, std::size_t out_features);

/// Uniform fan-in scaled initialization of conv/linear weights; gamma=1, beta=0.
void initialize(Layer& layer, std::mt19937_64& rng);

/// Gradients for the learnable arrays of one layer (same layout as Layer).
struct LayerGrads {
  std::vector<double> weight;
  std::vector<double> bias;
};

// Conv1D: input [C_in x L] or [B x C_in x L]; width-3 kernel, stride 1, zero
// 'same' padding. Accumulation per output element runs over input channel
// ascending, then kernel tap ascending.
Tensor conv1d_forward(const Layer& layer, const Tensor& input);
Tensor conv1d_backward(const Layer& layer, const Tensor& input,
                       const Tensor& grad_out, LayerGrads& grads);

// MaxPool1D width 2 stride 2 on [C x L] or [B x C x L]; L must be even.
// Ties go to the lower index. `argmax` receives flat input indices.
Tensor maxpool_forward(const Tensor& input, std::vector<std::size_t>* argmax = nullptr);
Tensor maxpool_backward(const std::vector<std::size_t>& input_shape,
                        const std::vector<std::size_t>& argmax,
                        const Tensor& grad_out);

Tensor relu_forward(const Tensor& input);
/// Subgradient at exactly zero is 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

struct BatchNormCache {
  Mode mode = Mode::Infer;
  std::vector<double> xhat;
  std::vector<double> inv_std;  // per channel
};

// BatchNorm1D on [B x C] or [B x C x L]; statistics per channel over B (and L).
// Train mode needs B >= 2 and updates the running statistics.
Tensor batchnorm_forward(Layer& layer, const Tensor& input, Mode mode,
                         BatchNormCache* cache = nullptr);
Tensor batchnorm_infer(const Layer& layer, const Tensor& input);
Tensor batchnorm_backward(const Layer& layer, const Tensor& input,
                          const BatchNormCache& cache, const Tensor& grad_out,
                          LayerGrads& grads);

// Linear on [D], [B x D] or [B x C x L] (flattened to [B x C*L]).
// output = input . W + b, accumulated over input features ascending.
Tensor linear_forward(const Layer& layer, const Tensor& input);
Tensor linear_backward(const Layer& layer, const Tensor& input,
                       const Tensor& grad_out, LayerGrads& grads);

/// Row-wise softmax of [B x Q] (or [Q]) with max subtraction.
Tensor softmax_rows(const Tensor& logits);
/// Vector-Jacobian product of softmax_rows given its output.
Tensor softmax_rows_backward(const Tensor& probs, const Tensor& grad_probs);

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits, [B x Q]
};

/// Mean softmax cross-entropy over the batch.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace mpic
