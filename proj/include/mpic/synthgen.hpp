#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mpic/dataset.hpp"
#include "mpic/stream.hpp"

namespace mpic {

/// Interactive states of the milling trial, in their fixed order.
enum class MillState : int { NoInt = 0, Entry = 1, Const = 2, Exit = 3 };
inline constexpr int kStateCount = 4;
inline constexpr int kEventCount = 3;
inline constexpr int kClassCount = kStateCount + kEventCount;

/// Classifier class for the event leading into `to` (Entry, Const or Exit).
inline constexpr int event_class_into(int to_state) { return kStateCount + to_state - 1; }

/// Parameters of the synthetic spindle-current trial.
///
/// NoInt: flat baseline. Entry: linear ramp baseline -> plateau with growing
/// tooth-passing ripple. Const: plateau with ripple. Exit: ramp plateau ->
/// baseline with decaying ripple. White Gaussian noise on everything.
struct GenParams {
  std::size_t length = 9000;
  double sample_rate = 250.0;
  double baseline = 0.2;  // mu0
  double plateau = 1.0;   // mu1
  double noise_sigma = 0.05;
  double ripple_amplitude = 0.08;
  double ripple_hz = 35.0;
  /// Fraction of the entry ramp over which the ripple envelope reaches full size.
  double ripple_rise = 0.03;
  /// Nominal state durations in samples; Const absorbs the remainder so the
  /// four always sum to `length`. Entry and Exit are the ramp durations.
  std::size_t noint_samples = 4000;
  std::size_t entry_samples = 1500;
  std::size_t exit_samples = 600;
  /// Relative jitter applied independently to NoInt, Entry and Exit.
  double duration_jitter = 0.20;
  std::uint64_t seed = 1;

  /// Throws ContractError when the parameters cannot produce a valid trial.
  void validate() const;
};

struct TrialRecording {
  std::vector<double> samples;
  std::vector<int> labels;                 // MillState per sample
  std::array<std::size_t, 3> transitions;  // first sample of Entry, Const, Exit
  GenParams params;

  double sample_rate() const { return params.sample_rate; }
  /// Start index of state s (0 for NoInt).
  std::size_t state_start(int s) const { return s == 0 ? 0 : transitions[s - 1]; }
  std::size_t state_end(int s) const { return s == 3 ? samples.size() : transitions[s]; }
};

TrialRecording generate_trial(const GenParams& params);

/// Trial as a labelled signal CSV record (ground-truth state column).
SignalRecord to_signal_record(const TrialRecording& trial);
/// Rebuilds ground truth from a labelled recording. Throws when the label
/// column is absent or does not follow NoInt -> Entry -> Const -> Exit.
TrialRecording from_signal_record(const SignalRecord& rec);

struct SteadyExtraction {
  std::size_t window = 400;
  std::size_t margin = 100;
  std::size_t step = 1;             // stride between candidate window starts
  std::size_t max_per_class = 750;  // 0 = keep the balanced minimum
  std::uint64_t seed = 1;
};

struct ExtractionReport {
  LabeledDataset dataset;
  std::vector<std::string> warnings;
};

/// 4-class windows lying wholly inside one state and at least `margin`
/// samples from every transition point, balanced by down-sampling.
ExtractionReport extract_steady_samples(const std::vector<TrialRecording>& trials,
                                        const SteadyExtraction& opts);

/// 7-class label for the span ending at `end_index` (inclusive): the event
/// class when a transition point falls in the final window, otherwise the
/// state of the last sample.
int sequence_label(const TrialRecording& trial, std::size_t end_index, std::size_t window);

/// How many spans of each class a trial contributes.
enum class ClassPrior {
  /// per_class_per_trial of every class (fewer when a class has fewer ends).
  Balanced,
  /// 7 * per_class_per_trial in total, split in proportion to how many span
  /// ends carry each label, i.e. the class mix a streaming classifier sees.
  Natural,
};

struct SequenceExtraction {
  std::size_t window = 400;
  std::size_t sequence = 8;
  std::size_t per_class_per_trial = 80;
  /// Share of each state-class draw taken from spans whose end lies within one
  /// window of a label change. These are the spans the model confuses with the
  /// neighbouring transition; uniform draws rarely reach them.
  double boundary_fraction = 0.5;
  ClassPrior prior = ClassPrior::Natural;
  std::uint64_t seed = 1;
};

/// 7-class spans of n*w samples, stratified per trial and class.
LabeledDataset extract_sequence_samples(const std::vector<TrialRecording>& trials,
                                        const SequenceExtraction& opts);

}  // namespace mpic
