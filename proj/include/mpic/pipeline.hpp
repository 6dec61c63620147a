#pragma once

// End-to-end steps shared by the command-line tool and the acceptance run.

#include <vector>

#include "mpic/config.hpp"

namespace mpic {

/// Trial i is generated with seed gen.seed + i.
std::vector<TrialRecording> make_trials(const GenParams& gen, std::size_t first, std::size_t count);

struct TrialSplit {
  std::vector<TrialRecording> train;
  std::vector<TrialRecording> test;
};

TrialSplit make_split(const RunConfig& cfg);

struct TrainedSystem {
  /// The pretrained 4-class window classifier; also the baseline CNN.
  Network pretrained;
  EncoderClassifier model;
  TrainingReport pretrain_report;
  TrainingReport train_report;
  std::size_t steady_samples = 0;
  std::size_t sequence_samples = 0;
  std::vector<std::string> warnings;
};

/// Steady-window pretraining followed by end-to-end training.
TrainedSystem train_system(const RunConfig& cfg, const std::vector<TrialRecording>& train,
                           const ProgressFn& progress = {});

/// Held-out 7-class spans; drawn with a different seed from the training spans.
LabeledDataset held_out_sequences(const RunConfig& cfg, const std::vector<TrialRecording>& test);

std::vector<std::string> class_names(const FsmDefinition& fsm);

}  // namespace mpic
