#include "mpic/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "mpic/serialize.hpp"
#include "mpic/stream.hpp"

namespace mpic {

Network build_upstream() {
  Network net;
  auto& L = net.layers;
  const std::size_t channels[] = {5, 25, 50};
  std::size_t in = 1;
  for (std::size_t c : channels) {
    L.push_back(make_conv1d(in, c));
    L.push_back(make_maxpool1d());
    L.push_back(make_relu());
    L.push_back(make_batchnorm1d(c));
    in = c;
  }
  // 400 -> 200 -> 100 -> 50 samples; 50 channels x 50 = 2500 features.
  L.push_back(make_linear(2500, 200));
  L.push_back(make_linear(200, 10));
  L.push_back(make_linear(10, kUpstreamClasses));
  return net;
}

Network build_downstream() {
  Network net;
  auto& L = net.layers;
  L.push_back(make_conv1d(kUpstreamClasses, 8));
  L.push_back(make_batchnorm1d(8));
  L.push_back(make_conv1d(8, 16));
  L.push_back(make_batchnorm1d(16));
  L.push_back(make_linear(16 * kSequenceLength, 64));
  L.push_back(make_linear(64, kDownstreamClasses));
  return net;
}

void initialize(Network& net, std::mt19937_64& rng) {
  for (Layer& l : net.layers) initialize(l, rng);
}

EncoderClassifier make_encoder_classifier(std::uint64_t seed, bool normalize_scores) {
  std::mt19937_64 rng(seed);
  EncoderClassifier m;
  m.upstream = build_upstream();
  m.downstream = build_downstream();
  m.normalize_scores = normalize_scores;
  initialize(m.upstream, rng);
  initialize(m.downstream, rng);
  return m;
}

namespace {

// [B*n x p] upstream rows -> [B x p x n] downstream input.
Tensor to_trajectory(const Tensor& scores, std::size_t batch, std::size_t n) {
  const std::size_t p = scores.dim(1);
  Tensor out({batch, p, n});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < p; ++c) out.at(b, c, i) = scores.at(b * n + i, c);
    }
  }
  return out;
}

Tensor from_trajectory(const Tensor& traj) {
  const std::size_t batch = traj.dim(0), p = traj.dim(1), n = traj.dim(2);
  Tensor out({batch * n, p});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < p; ++c) out.at(b * n + i, c) = traj.at(b, c, i);
    }
  }
  return out;
}

Tensor windows_tensor(std::span<const double> flat, std::size_t count, std::size_t w) {
  return Tensor({count, 1, w}, std::vector<double>(flat.begin(), flat.begin() + count * w));
}

}  // namespace

Tensor encode_windows(const EncoderClassifier& model, const Tensor& windows) {
  if (windows.rank() != 3 || windows.dim(1) != 1 || windows.dim(2) != kWindowLength) {
    throw ContractError("encode: expected [n x 1 x 400], got " + shape_string(windows.shape));
  }
  return infer(model.upstream, windows);
}

Tensor classify_batch(const EncoderClassifier& model, std::span<const double> flat,
                      std::size_t count) {
  const std::size_t span = kSequenceLength * kWindowLength;
  if (flat.size() != count * span) {
    throw ContractError("classify: " + std::to_string(flat.size()) + " samples for " +
                        std::to_string(count) + " sequences of " + std::to_string(span));
  }
  Tensor scores = infer(model.upstream, windows_tensor(flat, count * kSequenceLength, kWindowLength));
  if (model.normalize_scores) scores = softmax_rows(scores);
  return infer(model.downstream, to_trajectory(scores, count, kSequenceLength));
}

Tensor classify_sequence(const EncoderClassifier& model, const Tensor& sequence) {
  if (sequence.rank() != 3 || sequence.dim(0) != kSequenceLength || sequence.dim(1) != 1 ||
      sequence.dim(2) != kWindowLength) {
    throw ContractError("classify: expected [8 x 1 x 400] sequence, got " +
                        shape_string(sequence.shape));
  }
  Tensor out = classify_batch(model, sequence.data, 1);
  return out.reshaped({kDownstreamClasses});
}

std::vector<int> argmax_rows(const Tensor& scores) {
  const std::size_t q = scores.shape.back();
  const std::size_t rows = scores.size() / q;
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = &scores.data[r * q];
    out[r] = static_cast<int>(std::max_element(z, z + q) - z);
  }
  return out;
}

// ---------------------------------------------------------------- training

void TrainingConfig::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ContractError("training: split fraction must be in (0, 1)");
  }
  if (batch_size < 2) throw ContractError("training: batch size must be >= 2");
  if (!(adam.learning_rate > 0.0)) throw ContractError("training: learning rate must be > 0");
}

const EpochRecord* TrainingReport::final_validation() const {
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (it->split == "validation") return &*it;
  }
  return nullptr;
}

void write_report_csv(std::ostream& os, const TrainingReport& report,
                      const std::vector<std::string>& comments) {
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "stage,epoch,split,loss,accuracy\n";
  for (const auto& r : report.records) {
    os << r.stage << ',' << r.epoch << ',' << r.split << ',' << format_double(r.loss) << ','
       << format_double(r.accuracy) << '\n';
  }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t count, double train_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(count)));
  std::vector<std::size_t> train(idx.begin(), idx.begin() + n_train);
  std::vector<std::size_t> val(idx.begin() + n_train, idx.end());
  return {train, val};
}

namespace {

void require_all_classes(const LabeledDataset& data, std::span<const std::size_t> idx,
                         std::size_t classes, const char* what) {
  for (double v : data.values) {
    if (!std::isfinite(v)) throw ContractError(std::string(what) + ": dataset has non-finite values");
  }
  if (idx.empty()) throw ContractError(std::string(what) + ": training split is empty");
  std::vector<std::size_t> hist(classes, 0);
  for (std::size_t i : idx) {
    const int l = data.labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw ContractError(std::string(what) + ": label " + std::to_string(l) + " out of range");
    }
    ++hist[static_cast<std::size_t>(l)];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (hist[c] == 0) {
      throw ContractError(std::string(what) + ": class " + std::to_string(c) +
                          " is absent from the training split");
    }
  }
}

void gather(const LabeledDataset& data, std::span<const std::size_t> idx, std::vector<double>& x,
            std::vector<int>& y) {
  x.clear();
  y.clear();
  for (std::size_t i : idx) {
    auto r = data.record(i);
    x.insert(x.end(), r.begin(), r.end());
    y.push_back(data.labels[i]);
  }
}

std::vector<std::span<double>> concat(std::vector<std::span<double>> a,
                                      const std::vector<std::span<double>>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void check_loss(double loss, const char* stage, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw DivergenceError(std::string(stage) + ": non-finite loss at epoch " +
                          std::to_string(epoch) + ", step " + std::to_string(step));
  }
}

constexpr std::size_t kEvalBatch = 64;

}  // namespace

Evaluation evaluate_windows(const Network& upstream, const LabeledDataset& data) {
  Evaluation ev;
  if (data.size() == 0) return ev;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < data.size(); s += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, data.size() - s);
    Tensor x({n, 1, data.span},
             std::vector<double>(data.values.begin() + s * data.span,
                                 data.values.begin() + (s + n) * data.span));
    Tensor logits = infer(upstream, x);
    std::span<const int> labels(data.labels.data() + s, n);
    ev.loss += softmax_cross_entropy(logits, labels).loss * static_cast<double>(n);
    for (int p : argmax_rows(logits)) ev.predictions.push_back(p);
  }
  for (std::size_t i = 0; i < data.size(); ++i) correct += ev.predictions[i] == data.labels[i];
  ev.loss /= static_cast<double>(data.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return ev;
}

Evaluation evaluate_sequences(const EncoderClassifier& model, const LabeledDataset& data) {
  Evaluation ev;
  if (data.size() == 0) return ev;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < data.size(); s += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, data.size() - s);
    Tensor logits = classify_batch(
        model, std::span<const double>(data.values.data() + s * data.span, n * data.span), n);
    std::span<const int> labels(data.labels.data() + s, n);
    ev.loss += softmax_cross_entropy(logits, labels).loss * static_cast<double>(n);
    for (int p : argmax_rows(logits)) ev.predictions.push_back(p);
  }
  for (std::size_t i = 0; i < data.size(); ++i) correct += ev.predictions[i] == data.labels[i];
  ev.loss /= static_cast<double>(data.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return ev;
}

PretrainResult pretrain_upstream(const LabeledDataset& windows, const TrainingConfig& cfg,
                                 const ProgressFn& progress) {
  cfg.validate();
  if (windows.size() == 0) throw ContractError("pretrain: dataset is empty");
  if (windows.span != kWindowLength) {
    throw ContractError("pretrain: windows must have " + std::to_string(kWindowLength) +
                        " samples, got " + std::to_string(windows.span));
  }
  auto [train_idx, val_idx] = split_indices(windows.size(), cfg.train_fraction, cfg.seed);
  require_all_classes(windows, train_idx, kUpstreamClasses, "pretrain");
  const LabeledDataset val = windows.subset(val_idx);

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  PretrainResult res;
  res.upstream = build_upstream();
  initialize(res.upstream, rng);
  auto params = parameters(res.upstream);
  AdamState adam = make_adam_state(params, cfg.adam);

  std::vector<double> x;
  std::vector<int> y;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t s = 0; s < train_idx.size(); s += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, train_idx.size() - s);
      if (n < 2) continue;
      gather(windows, std::span(train_idx).subspan(s, n), x, y);
      BackpropResult bp;
      try {
        bp = backprop_network(res.upstream, Tensor({n, 1, kWindowLength}, x), y);
      } catch (const NonFiniteError& e) {
        throw DivergenceError(std::string("pretrain: ") + e.what() + " at epoch " +
                              std::to_string(epoch) + ", step " + std::to_string(step));
      }
      check_loss(bp.loss, "pretrain", epoch, step);
      adam_step(params, gradient_views(bp.grads), adam);
      ++step;
      loss_sum += bp.loss * static_cast<double>(n);
      const auto pred = argmax_rows(bp.logits);
      for (std::size_t i = 0; i < n; ++i) correct += pred[i] == y[i];
      seen += n;
    }
    EpochRecord tr{"pretrain", epoch, "train", loss_sum / static_cast<double>(seen),
                   static_cast<double>(correct) / static_cast<double>(seen)};
    res.report.records.push_back(tr);
    if (progress) progress(tr);
    if (!val_idx.empty()) {
      Evaluation ev = evaluate_windows(res.upstream, val);
      EpochRecord vr{"pretrain", epoch, "validation", ev.loss, ev.accuracy};
      res.report.records.push_back(vr);
      if (progress) progress(vr);
    }
  }
  return res;
}

TrainResult train_end_to_end(const LabeledDataset& sequences, const Network& upstream,
                             const TrainingConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  const std::size_t span = kSequenceLength * kWindowLength;
  if (sequences.size() == 0) throw ContractError("train: dataset is empty");
  if (sequences.span != span) {
    throw ContractError("train: sequences must have " + std::to_string(span) + " samples, got " +
                        std::to_string(sequences.span));
  }
  auto [train_idx, val_idx] = split_indices(sequences.size(), cfg.train_fraction, cfg.seed);
  require_all_classes(sequences, train_idx, kDownstreamClasses, "train");
  const LabeledDataset val = sequences.subset(val_idx);

  std::mt19937_64 rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);
  TrainResult res;
  res.model.upstream = upstream;
  res.model.downstream = build_downstream();
  res.model.normalize_scores = cfg.normalize_scores;
  initialize(res.model.downstream, rng);
  auto params = parameters(res.model.downstream);
  if (!cfg.freeze_upstream) params = concat(parameters(res.model.upstream), params);
  AdamState adam = make_adam_state(params, cfg.adam);

  std::vector<double> x;
  std::vector<int> y;
  std::size_t step = 0;
  const std::size_t n_seq = kSequenceLength;
  EncoderClassifier best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= cfg.end_to_end_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t s = 0; s < train_idx.size(); s += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, train_idx.size() - s);
      if (n < 2) continue;
      gather(sequences, std::span(train_idx).subspan(s, n), x, y);
      Tensor windows({n * n_seq, 1, kWindowLength}, x);

      LossResult loss;
      Tensor logits;
      std::vector<std::span<const double>> grads;
      Gradients up_grads, down_grads;
      try {
        Tape up_tape;
        Tensor up_logits = cfg.freeze_upstream
                               ? infer(res.model.upstream, windows)
                               : forward(res.model.upstream, windows, Mode::Train, &up_tape);
        Tensor scores = res.model.normalize_scores ? softmax_rows(up_logits) : up_logits;
        Tape down_tape;
        logits = forward(res.model.downstream, to_trajectory(scores, n, n_seq), Mode::Train,
                         &down_tape);
        loss = softmax_cross_entropy(logits, y);
        check_loss(loss.loss, "end-to-end", epoch, step);

        Tensor d_traj = backward(res.model.downstream, down_tape, loss.grad, down_grads);
        if (!cfg.freeze_upstream) {
          Tensor d_scores = from_trajectory(d_traj);
          Tensor d_up =
              res.model.normalize_scores ? softmax_rows_backward(scores, d_scores) : d_scores;
          backward(res.model.upstream, up_tape, d_up, up_grads);
          grads = gradient_views(up_grads);
        }
        for (auto g : gradient_views(down_grads)) grads.push_back(g);
      } catch (const NonFiniteError& e) {
        throw DivergenceError(std::string("end-to-end: ") + e.what() + " at epoch " +
                              std::to_string(epoch) + ", step " + std::to_string(step));
      }
      adam_step(params, grads, adam);
      ++step;

      loss_sum += loss.loss * static_cast<double>(n);
      const auto pred = argmax_rows(logits);
      for (std::size_t i = 0; i < n; ++i) correct += pred[i] == y[i];
      seen += n;
    }
    EpochRecord tr{"end-to-end", epoch, "train", loss_sum / static_cast<double>(seen),
                   static_cast<double>(correct) / static_cast<double>(seen)};
    res.report.records.push_back(tr);
    if (progress) progress(tr);
    if (!val_idx.empty()) {
      Evaluation ev = evaluate_sequences(res.model, val);
      EpochRecord vr{"end-to-end", epoch, "validation", ev.loss, ev.accuracy};
      res.report.records.push_back(vr);
      if (progress) progress(vr);
      if (cfg.keep_best && ev.loss < best_loss) {
        best_loss = ev.loss;
        best = res.model;
        res.best_epoch = epoch;
      }
    }
  }
  if (res.best_epoch > 0) res.model = std::move(best);
  return res;
}

// ---------------------------------------------------------------- files

void write_model(std::ostream& os, const EncoderClassifier& model) {
  write_header(os, static_cast<std::uint32_t>(model.upstream.layers.size() + 1 +
                                              model.downstream.layers.size()));
  for (const Layer& l : model.upstream.layers) write_layer_record(os, l);
  write_boundary_record(os, {model.normalize_scores ? 1u : 0u});
  for (const Layer& l : model.downstream.layers) write_layer_record(os, l);
}

EncoderClassifier read_model(std::istream& is) {
  const std::uint32_t count = read_header(is);
  EncoderClassifier m;
  bool boundary = false;
  for (std::uint32_t i = 0; i < count; ++i) {
    Layer l;
    std::vector<std::uint32_t> flags;
    if (!read_layer_record(is, l, flags)) {
      if (boundary) throw FormatError("model file has two stage boundaries");
      if (flags.size() != 1) throw FormatError("stage boundary carries no flags");
      m.normalize_scores = flags[0] != 0;
      boundary = true;
      continue;
    }
    (boundary ? m.downstream : m.upstream).layers.push_back(std::move(l));
  }
  if (!boundary) throw FormatError("model file lacks a stage boundary (single network file?)");
  return m;
}

namespace {
std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return os;
}
std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  return is;
}
}  // namespace

void save_model(const std::filesystem::path& path, const EncoderClassifier& model) {
  auto os = open_out(path);
  write_model(os, model);
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

EncoderClassifier load_model(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_model(is);
}

void save_network(const std::filesystem::path& path, const Network& net) {
  auto os = open_out(path);
  write_network(os, net);
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

Network load_network(const std::filesystem::path& path) {
  auto is = open_in(path);
  return read_network(is);
}

std::vector<std::uint8_t> model_bytes(const EncoderClassifier& model) {
  std::ostringstream os(std::ios::binary);
  write_model(os, model);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

std::string model_hash(const EncoderClassifier& model) {
  return hash_hex(fnv1a64(model_bytes(model)));
}

std::string network_hash(const Network& net) { return hash_hex(fnv1a64(to_bytes(net))); }

}  // namespace mpic
