#include "mpic/network.hpp"

#include <cmath>
#include <string>

namespace mpic {

namespace {

Tensor layer_forward(Layer& layer, const Tensor& x, Mode mode, LayerCache* cache) {
  switch (layer.kind) {
    case LayerKind::Conv1D:
      return conv1d_forward(layer, x);
    case LayerKind::MaxPool1D:
      return maxpool_forward(x, cache ? &cache->argmax : nullptr);
    case LayerKind::ReLU:
      return relu_forward(x);
    case LayerKind::BatchNorm1D:
      return batchnorm_forward(layer, x, mode, cache ? &cache->bn : nullptr);
    case LayerKind::Linear:
      return linear_forward(layer, x);
  }
  throw ContractError("forward: unknown layer kind");
}

}  // namespace

Tensor forward(Network& net, const Tensor& input, Mode mode, Tape* tape) {
  require_finite(input, "network input");
  if (tape) tape->caches.assign(net.layers.size(), {});
  Tensor x = input;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    LayerCache* cache = tape ? &tape->caches[i] : nullptr;
    if (cache) cache->input = x;
    x = layer_forward(net.layers[i], x, mode, cache);
  }
  require_finite(x, "network output");
  return x;
}

Tensor infer(const Network& net, const Tensor& input) {
  require_finite(input, "network input");
  Tensor x = input;
  for (const Layer& layer : net.layers) {
    switch (layer.kind) {
      case LayerKind::Conv1D: x = conv1d_forward(layer, x); break;
      case LayerKind::MaxPool1D: x = maxpool_forward(x); break;
      case LayerKind::ReLU: x = relu_forward(x); break;
      case LayerKind::BatchNorm1D: x = batchnorm_infer(layer, x); break;
      case LayerKind::Linear: x = linear_forward(layer, x); break;
    }
  }
  require_finite(x, "network output");
  return x;
}

Tensor backward(const Network& net, const Tape& tape, const Tensor& grad_out,
                Gradients& grads) {
  if (tape.caches.size() != net.layers.size()) {
    throw ContractError("backward: tape does not match network");
  }
  grads.layers.assign(net.layers.size(), {});
  Tensor g = grad_out;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const Layer& layer = net.layers[i];
    const LayerCache& c = tape.caches[i];
    switch (layer.kind) {
      case LayerKind::Conv1D:
        g = conv1d_backward(layer, c.input, g, grads.layers[i]);
        break;
      case LayerKind::MaxPool1D:
        g = maxpool_backward(c.input.shape, c.argmax, g);
        break;
      case LayerKind::ReLU:
        g = relu_backward(c.input, g);
        break;
      case LayerKind::BatchNorm1D:
        g = batchnorm_backward(layer, c.input, c.bn, g, grads.layers[i]);
        break;
      case LayerKind::Linear:
        g = linear_backward(layer, c.input, g, grads.layers[i]);
        break;
    }
  }
  return g;
}

BackpropResult backprop_network(Network& net, const Tensor& input,
                                std::span<const int> labels) {
  Tape tape;
  BackpropResult res;
  res.logits = forward(net, input, Mode::Train, &tape);
  LossResult loss = softmax_cross_entropy(res.logits, labels);
  res.loss = loss.loss;
  backward(net, tape, loss.grad, res.grads);
  return res;
}

std::vector<std::span<double>> parameters(Network& net) {
  std::vector<std::span<double>> out;
  for (Layer& l : net.layers) {
    if (!l.weight.empty()) out.emplace_back(l.weight);
    if (!l.bias.empty()) out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> parameters(const Network& net) {
  std::vector<std::span<const double>> out;
  for (const Layer& l : net.layers) {
    if (!l.weight.empty()) out.emplace_back(l.weight);
    if (!l.bias.empty()) out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> gradient_views(const Gradients& grads) {
  std::vector<std::span<const double>> out;
  for (const LayerGrads& g : grads.layers) {
    if (!g.weight.empty()) out.emplace_back(g.weight);
    if (!g.bias.empty()) out.emplace_back(g.bias);
  }
  return out;
}

std::vector<std::size_t> output_shape(const Network& net, std::vector<std::size_t> shape) {
  for (const Layer& l : net.layers) {
    switch (l.kind) {
      case LayerKind::Conv1D:
        shape[shape.size() - 2] = l.out;
        break;
      case LayerKind::MaxPool1D:
        shape.back() /= l.width;
        break;
      case LayerKind::Linear:
        shape = shape.size() == 1 ? std::vector<std::size_t>{l.out}
                                  : std::vector<std::size_t>{shape[0], l.out};
        break;
      default:
        break;
    }
  }
  return shape;
}

std::size_t count_parameters(const Layer& layer, CountConvention convention) {
  switch (layer.kind) {
    case LayerKind::Conv1D:
      return layer.width * layer.in * layer.out;
    case LayerKind::BatchNorm1D:
      return (convention == CountConvention::Reported ? 3 : 2) * layer.in;
    case LayerKind::Linear:
      return layer.in * layer.out + layer.out;
    default:
      return 0;
  }
}

std::size_t count_parameters(const Network& net, CountConvention convention) {
  std::size_t total = 0;
  for (const Layer& l : net.layers) total += count_parameters(l, convention);
  return total;
}

AdamState make_adam_state(std::span<const std::span<double>> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.size(), 0.0);
    s.second_moment.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ContractError("adam: parameter/gradient/state array counts differ");
  }
  const AdamConfig& hp = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(hp.beta1, t);
  const double correction2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t a = 0; a < params.size(); ++a) {
    std::span<double> p = params[a];
    std::span<const double> g = grads[a];
    std::vector<double>& m = state.first_moment[a];
    std::vector<double>& v = state.second_moment[a];
    if (p.size() != g.size() || p.size() != m.size()) {
      throw ContractError("adam: array " + std::to_string(a) + " size mismatch");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= hp.learning_rate * m_hat / (std::sqrt(v_hat) + hp.epsilon);
    }
  }
}

}  // namespace mpic
