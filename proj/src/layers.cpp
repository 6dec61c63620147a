#include "mpic/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mpic {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv1D: return "Conv1D";
    case LayerKind::MaxPool1D: return "MaxPool1D";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::BatchNorm1D: return "BatchNorm1D";
    case LayerKind::Linear: return "Linear";
  }
  return "Unknown";
}

Layer make_conv1d(std::size_t in_channels, std::size_t out_channels) {
  Layer l;
  l.kind = LayerKind::Conv1D;
  l.in = in_channels;
  l.out = out_channels;
  l.width = kConvWidth;
  l.weight.assign(out_channels * in_channels * kConvWidth, 0.0);
  return l;
}

Layer make_maxpool1d() {
  Layer l;
  l.kind = LayerKind::MaxPool1D;
  l.width = kPoolWidth;
  return l;
}

Layer make_relu() {
  Layer l;
  l.kind = LayerKind::ReLU;
  return l;
}

Layer make_batchnorm1d(std::size_t channels) {
  Layer l;
  l.kind = LayerKind::BatchNorm1D;
  l.in = channels;
  l.out = channels;
  l.weight.assign(channels, 1.0);
  l.bias.assign(channels, 0.0);
  l.running_mean.assign(channels, 0.0);
  l.running_var.assign(channels, 1.0);
  return l;
}

Layer make_linear(std::size_t in_features, std::size_t out_features) {
  Layer l;
  l.kind = LayerKind::Linear;
  l.in = in_features;
  l.out = out_features;
  l.weight.assign(in_features * out_features, 0.0);
  l.bias.assign(out_features, 0.0);
  return l;
}

void initialize(Layer& layer, std::mt19937_64& rng) {
  switch (layer.kind) {
    case LayerKind::Conv1D:
    case LayerKind::Linear: {
      const std::size_t fan_in =
          layer.kind == LayerKind::Conv1D ? layer.in * layer.width : layer.in;
      const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& w : layer.weight) w = dist(rng);
      std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
      break;
    }
    case LayerKind::BatchNorm1D:
      std::fill(layer.weight.begin(), layer.weight.end(), 1.0);
      std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
      std::fill(layer.running_mean.begin(), layer.running_mean.end(), 0.0);
      std::fill(layer.running_var.begin(), layer.running_var.end(), 1.0);
      break;
    default:
      break;
  }
}

namespace {

struct Ncl {
  std::size_t batch, channels, length;
};

// Interprets [C x L] as a single sample and [B x C x L] as a batch.
Ncl as_ncl(const Tensor& t, std::string_view op) {
  if (t.rank() == 2) return {1, t.dim(0), t.dim(1)};
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  throw ContractError(std::string(op) + ": expected [C x L] or [B x C x L], got " +
                      shape_string(t.shape));
}

std::vector<std::size_t> ncl_shape(const Tensor& like, std::size_t b, std::size_t c,
                                   std::size_t l) {
  if (like.rank() == 2) return {c, l};
  return {b, c, l};
}

void check_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape != b.shape) {
    throw ContractError(std::string(op) + ": gradient shape " + shape_string(b.shape) +
                        " does not match " + shape_string(a.shape));
  }
}

}  // namespace

// ---------------------------------------------------------------- conv

Tensor conv1d_forward(const Layer& layer, const Tensor& input) {
  const auto [batch, channels, length] = as_ncl(input, "conv1d");
  if (channels != layer.in) {
    throw ContractError("conv1d: channel axis has " + std::to_string(channels) +
                        " entries, layer expects " + std::to_string(layer.in));
  }
  if (length < 1) throw ContractError("conv1d: length axis is empty");
  const std::size_t width = layer.width;
  const std::size_t half = width / 2;
  Tensor out(ncl_shape(input, batch, layer.out, length));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < layer.out; ++c) {
      double* o = &out.data[(b * layer.out + c) * length];
      for (std::size_t j = 0; j < channels; ++j) {
        const double* x = &input.data[(b * channels + j) * length];
        const double* k = &layer.weight[(c * layer.in + j) * width];
        for (std::size_t a = 0; a < width; ++a) {
          const double kv = k[a];
          // o[t] += x[t + a - half] for t + a - half in [0, length)
          const std::size_t t0 = a < half ? half - a : 0;
          const std::size_t t1 =
              std::min(length, length + half >= a ? length + half - a : 0);
          for (std::size_t t = t0; t < t1; ++t) o[t] += kv * x[t + a - half];
        }
      }
    }
  }
  return out;
}

Tensor conv1d_backward(const Layer& layer, const Tensor& input, const Tensor& grad_out,
                       LayerGrads& grads) {
  const auto [batch, channels, length] = as_ncl(input, "conv1d backward");
  const std::size_t width = layer.width;
  const std::size_t half = width / 2;
  if (grad_out.shape != ncl_shape(input, batch, layer.out, length)) {
    throw ContractError("conv1d backward: gradient shape " +
                        shape_string(grad_out.shape) + " mismatch");
  }
  grads.weight.assign(layer.weight.size(), 0.0);
  grads.bias.clear();
  Tensor grad_in(input.shape, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < layer.out; ++c) {
      const double* g = &grad_out.data[(b * layer.out + c) * length];
      for (std::size_t j = 0; j < channels; ++j) {
        const double* x = &input.data[(b * channels + j) * length];
        double* dx = &grad_in.data[(b * channels + j) * length];
        const double* k = &layer.weight[(c * layer.in + j) * width];
        double* dk = &grads.weight[(c * layer.in + j) * width];
        for (std::size_t a = 0; a < width; ++a) {
          const std::size_t t0 = a < half ? half - a : 0;
          const std::size_t t1 =
              std::min(length, length + half >= a ? length + half - a : 0);
          const double kv = k[a];
          double acc = 0.0;
          for (std::size_t t = t0; t < t1; ++t) {
            acc += g[t] * x[t + a - half];
            dx[t + a - half] += g[t] * kv;
          }
          dk[a] += acc;
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- pool

Tensor maxpool_forward(const Tensor& input, std::vector<std::size_t>* argmax) {
  const auto [batch, channels, length] = as_ncl(input, "maxpool");
  if (length % kPoolWidth != 0) {
    throw ContractError("maxpool: length axis " + std::to_string(length) +
                        " is not divisible by pool width");
  }
  const std::size_t half = length / kPoolWidth;
  Tensor out(ncl_shape(input, batch, channels, half));
  if (argmax) argmax->assign(out.size(), 0);
  for (std::size_t row = 0; row < batch * channels; ++row) {
    const double* x = &input.data[row * length];
    double* o = &out.data[row * half];
    for (std::size_t t = 0; t < half; ++t) {
      const std::size_t i0 = 2 * t;
      const std::size_t pick = x[i0 + 1] > x[i0] ? i0 + 1 : i0;
      o[t] = x[pick];
      if (argmax) (*argmax)[row * half + t] = row * length + pick;
    }
  }
  return out;
}

Tensor maxpool_backward(const std::vector<std::size_t>& input_shape,
                        const std::vector<std::size_t>& argmax, const Tensor& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw ContractError("maxpool backward: argmax/gradient size mismatch");
  }
  Tensor grad_in(input_shape, 0.0);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_in.data[argmax[i]] += grad_out.data[i];
  return grad_in;
}

// ---------------------------------------------------------------- relu

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  check_same_shape(input, grad_out, "relu backward");
  Tensor grad_in(input.shape, 0.0);
  for (std::size_t i = 0; i < input.size(); ++i) {
    grad_in.data[i] = input.data[i] > 0.0 ? grad_out.data[i] : 0.0;
  }
  return grad_in;
}

// ---------------------------------------------------------------- batch norm

namespace {

Ncl bn_layout(const Layer& layer, const Tensor& input) {
  Ncl n{};
  if (input.rank() == 2) {
    n = {input.dim(0), input.dim(1), 1};
  } else if (input.rank() == 3) {
    n = {input.dim(0), input.dim(1), input.dim(2)};
  } else {
    throw ContractError("batchnorm: expected [B x C] or [B x C x L], got " +
                        shape_string(input.shape));
  }
  if (n.channels != layer.in) {
    throw ContractError("batchnorm: channel axis has " + std::to_string(n.channels) +
                        " entries, layer expects " + std::to_string(layer.in));
  }
  return n;
}

}  // namespace

Tensor batchnorm_infer(const Layer& layer, const Tensor& input) {
  const auto [batch, channels, length] = bn_layout(layer, input);
  Tensor out(input.shape);
  for (std::size_t c = 0; c < channels; ++c) {
    const double inv = 1.0 / std::sqrt(layer.running_var[c] + kBatchNormEps);
    const double scale = layer.weight[c] * inv;
    const double shift = layer.bias[c] - layer.running_mean[c] * scale;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * length;
      for (std::size_t t = 0; t < length; ++t) {
        out.data[base + t] = input.data[base + t] * scale + shift;
      }
    }
  }
  return out;
}

Tensor batchnorm_forward(Layer& layer, const Tensor& input, Mode mode,
                         BatchNormCache* cache) {
  const auto [batch, channels, length] = bn_layout(layer, input);
  if (mode == Mode::Infer) {
    if (cache) {
      cache->mode = Mode::Infer;
      cache->inv_std.resize(channels);
      for (std::size_t c = 0; c < channels; ++c) {
        cache->inv_std[c] = 1.0 / std::sqrt(layer.running_var[c] + kBatchNormEps);
      }
      cache->xhat.clear();
    }
    return batchnorm_infer(layer, input);
  }
  if (batch < 2) {
    throw ContractError("batchnorm: train mode needs batch size >= 2, got " +
                        std::to_string(batch));
  }
  const double count = static_cast<double>(batch * length);
  Tensor out(input.shape);
  std::vector<double> xhat(input.size());
  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * length;
      for (std::size_t t = 0; t < length; ++t) mean += input.data[base + t];
    }
    mean /= count;
    double var = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * length;
      for (std::size_t t = 0; t < length; ++t) {
        const double d = input.data[base + t] - mean;
        var += d * d;
      }
    }
    var /= count;
    const double inv = 1.0 / std::sqrt(var + kBatchNormEps);
    inv_std[c] = inv;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * length;
      for (std::size_t t = 0; t < length; ++t) {
        const double h = (input.data[base + t] - mean) * inv;
        xhat[base + t] = h;
        out.data[base + t] = layer.weight[c] * h + layer.bias[c];
      }
    }
    layer.running_mean[c] =
        (1.0 - kBatchNormMomentum) * layer.running_mean[c] + kBatchNormMomentum * mean;
    layer.running_var[c] =
        (1.0 - kBatchNormMomentum) * layer.running_var[c] + kBatchNormMomentum * var;
  }
  if (cache) {
    cache->mode = Mode::Train;
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

Tensor batchnorm_backward(const Layer& layer, const Tensor& input,
                          const BatchNormCache& cache, const Tensor& grad_out,
                          LayerGrads& grads) {
  const auto [batch, channels, length] = bn_layout(layer, input);
  check_same_shape(input, grad_out, "batchnorm backward");
  grads.weight.assign(channels, 0.0);
  grads.bias.assign(channels, 0.0);
  Tensor grad_in(input.shape);
  const double count = static_cast<double>(batch * length);
  for (std::size_t c = 0; c < channels; ++c) {
    const double inv = cache.inv_std[c];
    const double gamma = layer.weight[c];
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * length;
      for (std::size_t t = 0; t < length; ++t) {
        const double g = grad_out.data[base + t];
        const double h = cache.mode == Mode::Train
                             ? cache.xhat[base + t]
                             : (input.data[base + t] - layer.running_mean[c]) * inv;
        sum_g += g;
        sum_gx += g * h;
      }
    }
    grads.weight[c] = sum_gx;
    grads.bias[c] = sum_g;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * length;
      for (std::size_t t = 0; t < length; ++t) {
        const double g = grad_out.data[base + t];
        if (cache.mode == Mode::Train) {
          const double h = cache.xhat[base + t];
          grad_in.data[base + t] = gamma * inv * (g - sum_g / count - h * sum_gx / count);
        } else {
          grad_in.data[base + t] = gamma * inv * g;
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- linear

namespace {

std::size_t linear_rows(const Layer& layer, const Tensor& input) {
  std::size_t rows = 0;
  std::size_t features = 0;
  if (input.rank() == 1) {
    rows = 1;
    features = input.dim(0);
  } else {
    rows = input.dim(0);
    features = input.size() / std::max<std::size_t>(rows, 1);
  }
  if (features != layer.in) {
    throw ContractError("linear: feature axis has " + std::to_string(features) +
                        " entries, layer expects " + std::to_string(layer.in));
  }
  return rows;
}

}  // namespace

Tensor linear_forward(const Layer& layer, const Tensor& input) {
  const std::size_t rows = linear_rows(layer, input);
  Tensor out(input.rank() == 1 ? std::vector<std::size_t>{layer.out}
                               : std::vector<std::size_t>{rows, layer.out});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &input.data[r * layer.in];
    double* o = &out.data[r * layer.out];
    for (std::size_t i = 0; i < layer.in; ++i) {
      const double xi = x[i];
      const double* w = &layer.weight[i * layer.out];
      for (std::size_t k = 0; k < layer.out; ++k) o[k] += xi * w[k];
    }
    for (std::size_t k = 0; k < layer.out; ++k) o[k] += layer.bias[k];
  }
  return out;
}

Tensor linear_backward(const Layer& layer, const Tensor& input, const Tensor& grad_out,
                       LayerGrads& grads) {
  const std::size_t rows = linear_rows(layer, input);
  if (grad_out.size() != rows * layer.out) {
    throw ContractError("linear backward: gradient shape " +
                        shape_string(grad_out.shape) + " mismatch");
  }
  grads.weight.assign(layer.weight.size(), 0.0);
  grads.bias.assign(layer.out, 0.0);
  Tensor grad_in(input.shape, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &input.data[r * layer.in];
    const double* g = &grad_out.data[r * layer.out];
    double* dx = &grad_in.data[r * layer.in];
    for (std::size_t i = 0; i < layer.in; ++i) {
      const double xi = x[i];
      const double* w = &layer.weight[i * layer.out];
      double* dw = &grads.weight[i * layer.out];
      double acc = 0.0;
      for (std::size_t k = 0; k < layer.out; ++k) {
        dw[k] += xi * g[k];
        acc += w[k] * g[k];
      }
      dx[i] = acc;
    }
    for (std::size_t k = 0; k < layer.out; ++k) grads.bias[k] += g[k];
  }
  return grad_in;
}

// ---------------------------------------------------------------- softmax / loss

Tensor softmax_rows(const Tensor& logits) {
  const std::size_t q = logits.shape.back();
  const std::size_t rows = logits.size() / q;
  Tensor out(logits.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = &logits.data[r * q];
    double* p = &out.data[r * q];
    const double m = *std::max_element(z, z + q);
    double s = 0.0;
    for (std::size_t k = 0; k < q; ++k) {
      p[k] = std::exp(z[k] - m);
      s += p[k];
    }
    for (std::size_t k = 0; k < q; ++k) p[k] /= s;
  }
  return out;
}

Tensor softmax_rows_backward(const Tensor& probs, const Tensor& grad_probs) {
  check_same_shape(probs, grad_probs, "softmax backward");
  const std::size_t q = probs.shape.back();
  const std::size_t rows = probs.size() / q;
  Tensor grad(probs.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = &probs.data[r * q];
    const double* g = &grad_probs.data[r * q];
    double dot = 0.0;
    for (std::size_t k = 0; k < q; ++k) dot += p[k] * g[k];
    for (std::size_t k = 0; k < q; ++k) grad.data[r * q + k] = p[k] * (g[k] - dot);
  }
  return grad;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ContractError("cross entropy: expected [B x Q] logits, got " +
                        shape_string(logits.shape));
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t q = logits.dim(1);
  if (labels.size() != batch) {
    throw ContractError("cross entropy: " + std::to_string(labels.size()) +
                        " labels for batch axis of " + std::to_string(batch));
  }
  LossResult res;
  res.grad = Tensor(logits.shape);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t r = 0; r < batch; ++r) {
    const int label = labels[r];
    if (label < 0 || static_cast<std::size_t>(label) >= q) {
      throw ContractError("cross entropy: label " + std::to_string(label) +
                          " outside [0, " + std::to_string(q) + ")");
    }
    const double* z = &logits.data[r * q];
    double* g = &res.grad.data[r * q];
    const double m = *std::max_element(z, z + q);
    double s = 0.0;
    for (std::size_t k = 0; k < q; ++k) {
      g[k] = std::exp(z[k] - m);
      s += g[k];
    }
    res.loss += (std::log(s) + m - z[label]) * inv_batch;
    for (std::size_t k = 0; k < q; ++k) g[k] = g[k] / s * inv_batch;
    g[label] -= inv_batch;
  }
  return res;
}

}  // namespace mpic
