#pragma once

// Shared oracles for the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mpic/layers.hpp"
#include "mpic/network.hpp"
#include "mpic/stream.hpp"

namespace mpic::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = u(rng);
  return t;
}

/// Textbook conv: out[b][c][t] = sum_j sum_a in[b][j][t+a-1] * k[c][j][a].
inline Tensor naive_conv(const Layer& l, const Tensor& x) {
  const std::size_t B = x.dim(0), C = l.in, L = x.dim(2);
  Tensor y({B, l.out, L});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < l.out; ++c) {
      for (std::size_t t = 0; t < L; ++t) {
        double s = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
          for (std::size_t a = 0; a < 3; ++a) {
            const long idx = static_cast<long>(t) + static_cast<long>(a) - 1;
            if (idx < 0 || idx >= static_cast<long>(L)) continue;
            s += x.at(b, j, static_cast<std::size_t>(idx)) * l.weight[(c * C + j) * 3 + a];
          }
        }
        y.at(b, c, t) = s;
      }
    }
  }
  return y;
}

inline Tensor naive_linear(const Layer& l, const Tensor& x) {
  const std::size_t B = x.dim(0);
  Tensor y({B, l.out});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < l.out; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < l.in; ++i) s += x.data[b * l.in + i] * l.weight[i * l.out + o];
      y.at(b, o) = s + l.bias[o];
    }
  }
  return y;
}

/// Small network that uses every layer kind, with randomized sizes and order.
inline Network random_mini_network(std::mt19937_64& rng, std::size_t& in_channels,
                                   std::size_t& length, std::size_t& classes) {
  std::uniform_int_distribution<std::size_t> ch(1, 3), len(2, 4), cls(2, 4), coin(0, 1);
  in_channels = ch(rng);
  length = 2 * len(rng);
  classes = cls(rng);
  const std::size_t mid = ch(rng) + 1;
  Network net;
  net.layers.push_back(make_conv1d(in_channels, mid));
  if (coin(rng)) {
    net.layers.push_back(make_batchnorm1d(mid));
    net.layers.push_back(make_maxpool1d());
    net.layers.push_back(make_relu());
  } else {
    net.layers.push_back(make_maxpool1d());
    net.layers.push_back(make_relu());
    net.layers.push_back(make_batchnorm1d(mid));
  }
  std::size_t c = mid;
  if (coin(rng)) {
    const std::size_t next = ch(rng) + 1;
    net.layers.push_back(make_conv1d(c, next));
    net.layers.push_back(make_batchnorm1d(next));
    c = next;
  }
  const std::size_t hidden = ch(rng) + 2;
  net.layers.push_back(make_linear(c * (length / 2), hidden));
  net.layers.push_back(make_relu());
  net.layers.push_back(make_linear(hidden, classes));
  for (auto& l : net.layers) initialize(l, rng);
  // Non-trivial affine batch-norm values so their gradients are exercised.
  std::uniform_real_distribution<double> u(0.5, 1.5), v(-0.5, 0.5);
  for (auto& l : net.layers) {
    if (l.kind != LayerKind::BatchNorm1D) continue;
    for (auto& g : l.weight) g = u(rng);
    for (auto& b : l.bias) b = v(rng);
  }
  return net;
}

/// Train-mode loss without touching the caller's running statistics.
inline double train_loss(const Network& net, const Tensor& x, const std::vector<int>& labels) {
  Network copy = net;
  const Tensor logits = forward(copy, x, Mode::Train);
  return softmax_cross_entropy(logits, labels).loss;
}

inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheck {
  double worst = 0.0;
  std::size_t checked = 0;
};

/// Central differences on every learnable value and every input value.
inline GradCheck gradient_check(const Network& net, const Tensor& x, const std::vector<int>& labels,
                                double h = 1e-5) {
  Network work = net;
  const BackpropResult bp = backprop_network(work, x, labels);
  GradCheck out;

  Network probe = net;
  auto params = parameters(probe);
  const auto grads = gradient_views(bp.grads);
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + h;
      const double up = train_loss(probe, x, labels);
      params[p][i] = saved - h;
      const double down = train_loss(probe, x, labels);
      params[p][i] = saved;
      out.worst = std::max(out.worst, relative_error(grads[p][i], (up - down) / (2 * h)));
      ++out.checked;
    }
  }

  Network taped = net;
  Tape tape;
  const Tensor logits = forward(taped, x, Mode::Train, &tape);
  const LossResult lr = softmax_cross_entropy(logits, labels);
  Gradients g;
  const Tensor dx = backward(taped, tape, lr.grad, g);
  Tensor xp = x;
  for (std::size_t i = 0; i < xp.size(); ++i) {
    const double saved = xp.data[i];
    xp.data[i] = saved + h;
    const double up = train_loss(net, xp, labels);
    xp.data[i] = saved - h;
    const double down = train_loss(net, xp, labels);
    xp.data[i] = saved;
    out.worst = std::max(out.worst, relative_error(dx.data[i], (up - down) / (2 * h)));
    ++out.checked;
  }
  return out;
}

/// Emissions from a rolling-buffer reference: positions i (0-based, inclusive
/// end) with i+1 >= span and (i+1-span) % stride == 0.
inline std::size_t reference_emissions(std::size_t length, std::size_t span, std::size_t stride) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < length; ++i) {
    if (i + 1 >= span && (i + 1 - span) % stride == 0) ++n;
  }
  return n;
}

/// Per-class counts taken straight from the label vectors.
struct Recount {
  double tp = 0, fp = 0, fn = 0;
};

inline Recount recount(const std::vector<int>& truth, const std::vector<int>& pred, int c) {
  Recount r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == c && pred[i] == c) ++r.tp;
    if (truth[i] != c && pred[i] == c) ++r.fp;
    if (truth[i] == c && pred[i] != c) ++r.fn;
  }
  return r;
}

}  // namespace mpic::testing
