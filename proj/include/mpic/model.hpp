#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpic/dataset.hpp"
#include "mpic/network.hpp"

namespace mpic {

inline constexpr std::size_t kWindowLength = 400;  // w
inline constexpr std::size_t kSequenceLength = 8;  // n
inline constexpr std::size_t kUpstreamClasses = 4;  // p
inline constexpr std::size_t kDownstreamClasses = 7;  // q

/// Upstream encoder: three Conv-MaxPool-ReLU-BatchNorm blocks (5, 25, 50
/// channels) and Linear 2500x200, 200x10, 10x4. Maps 1x400 to 4 scores.
Network build_upstream();
/// Downstream classifier: Conv(4->8), BatchNorm, Conv(8->16), BatchNorm,
/// Linear 128x64, 64x7. Maps the 4x8 score trajectory to 7 scores.
Network build_downstream();

void initialize(Network& net, std::mt19937_64& rng);

/// Two-stage encoder-classifier. The upstream runs on every window of a
/// sequence with shared weights; its scores (softmax-normalized when
/// `normalize_scores`) form the downstream input with the score axis as
/// channels and the window axis as length.
struct EncoderClassifier {
  Network upstream;
  Network downstream;
  bool normalize_scores = false;

  bool operator==(const EncoderClassifier&) const = default;
};

EncoderClassifier make_encoder_classifier(std::uint64_t seed, bool normalize_scores = false);

/// Upstream scores for n windows laid out as [n x 1 x w] -> [n x 4] (infer mode).
Tensor encode_windows(const EncoderClassifier& model, const Tensor& windows);

/// 7 class scores for one [n x 1 x w] sequence (infer mode).
Tensor classify_sequence(const EncoderClassifier& model, const Tensor& sequence);

/// Infer-mode scores for `count` flat sequences of n*w samples -> [count x 7].
Tensor classify_batch(const EncoderClassifier& model, std::span<const double> flat,
                      std::size_t count);

/// Arg-max per row.
std::vector<int> argmax_rows(const Tensor& scores);

// ---------------------------------------------------------------- training

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t pretrain_epochs = 5;
  std::size_t end_to_end_epochs = 6;
  std::uint64_t seed = 1;
  double train_fraction = 0.8;
  /// Keep the pretrained upstream fixed during end-to-end training.
  bool freeze_upstream = false;
  /// Softmax the upstream logits before the downstream stage.
  bool normalize_scores = false;
  /// Return the end-to-end epoch with the lowest validation loss instead of the last one.
  bool keep_best = true;

  void validate() const;
};

struct EpochRecord {
  std::string stage;  // "pretrain" or "end-to-end"
  std::size_t epoch = 0;
  std::string split;  // "train" or "validation"
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainingReport {
  std::vector<EpochRecord> records;

  /// Last validation record, if any.
  const EpochRecord* final_validation() const;
};

/// Line-delimited CSV: stage,epoch,split,loss,accuracy.
void write_report_csv(std::ostream& os, const TrainingReport& report,
                      const std::vector<std::string>& comments = {});

using ProgressFn = std::function<void(const EpochRecord&)>;

struct PretrainResult {
  Network upstream;
  TrainingReport report;
};

/// Trains a freshly initialized upstream on 4-class windows.
PretrainResult pretrain_upstream(const LabeledDataset& windows, const TrainingConfig& cfg,
                                 const ProgressFn& progress = {});

struct TrainResult {
  EncoderClassifier model;
  TrainingReport report;
  /// Epoch whose weights were returned when `keep_best` picked one, else 0.
  std::size_t best_epoch = 0;
};

/// Joint training of the given upstream and a fresh downstream on 7-class spans.
TrainResult train_end_to_end(const LabeledDataset& sequences, const Network& upstream,
                             const TrainingConfig& cfg, const ProgressFn& progress = {});

/// Mean loss and accuracy of a trained model over a dataset (infer mode).
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
};
Evaluation evaluate_sequences(const EncoderClassifier& model, const LabeledDataset& data);
Evaluation evaluate_windows(const Network& upstream, const LabeledDataset& data);

/// Deterministic train/validation split of record indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t count, double train_fraction, std::uint64_t seed);

// ---------------------------------------------------------------- files

void write_model(std::ostream& os, const EncoderClassifier& model);
EncoderClassifier read_model(std::istream& is);
void save_model(const std::filesystem::path& path, const EncoderClassifier& model);
EncoderClassifier load_model(const std::filesystem::path& path);
void save_network(const std::filesystem::path& path, const Network& net);
Network load_network(const std::filesystem::path& path);

std::vector<std::uint8_t> model_bytes(const EncoderClassifier& model);
/// FNV-1a of the serialized model, as hex.
std::string model_hash(const EncoderClassifier& model);
std::string network_hash(const Network& net);

}  // namespace mpic
