#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpic/coordinator.hpp"
#include "mpic/model.hpp"
#include "mpic/stream.hpp"
#include "mpic/synthgen.hpp"

namespace mpic {

// ---------------------------------------------------------------- metrics

/// Rows are truth, columns are predictions.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::uint64_t>> counts;

  explicit ConfusionMatrix(std::vector<std::string> class_names);
  void add(int truth, int predicted);
  std::uint64_t total() const;

  static ConfusionMatrix from(std::span<const int> truth, std::span<const int> predicted,
                              std::vector<std::string> class_names);
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;  // true count
  bool precision_undefined = false;
  bool recall_undefined = false;
  /// Never true and never predicted: left out of the macro averages.
  bool excluded = false;
};

struct MetricsSummary {
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

/// Harmonic mean; 0 when both are 0.
double f1_score(double precision, double recall);

MetricsSummary precision_recall_f1(const ConfusionMatrix& cm);

void write_confusion_csv(std::ostream& os, const ConfusionMatrix& cm);
/// Aligned class / precision / recall / F1 table.
std::string metrics_table(const ConfusionMatrix& cm, const MetricsSummary& m);

// ---------------------------------------------------------------- simulation

enum class MatchPolicy {
  Nearest,  // detection closest to the true time
  First,    // earliest detection inside the horizon; later flicker ignored
};

struct EvalConfig {
  double max_delay = 1.0;         // epsilon, seconds
  std::size_t stride = 25;        // decision stride H, samples
  double matching_horizon = 2.0;  // seconds
  std::size_t baseline_persistence = 1;
  /// Applied to both systems so their delays are comparable.
  MatchPolicy match_policy = MatchPolicy::First;
  FilterSpec filter;

  void validate() const;
};

struct DecisionRecord {
  std::uint64_t end_index = 0;
  double end_time = 0.0;
  int raw_class = 0;
  Outcome::Kind outcome = Outcome::Kind::Hold;
  std::optional<RejectReason> reason;
  int state_after = 0;
};

struct CommittedTransition {
  int from = 0;
  int to = 0;
  int event = -1;  // -1 for baseline transitions
  double time = 0.0;
};

struct TruthTransition {
  int from = 0;
  int to = 0;
  std::size_t index = 0;
  double time = 0.0;
};

struct DelayEntry {
  int from = 0;
  int to = 0;
  double true_time = 0.0;
  std::optional<double> detected_time;
  std::optional<double> delay;  // detected - true, seconds
};

struct SimulationReport {
  std::string trial_id;
  std::string system;  // "proposed" or "baseline"
  std::vector<std::string> state_names;
  std::vector<std::string> class_names;
  std::vector<DecisionRecord> trace;
  std::vector<CommittedTransition> transitions;
  std::vector<TruthTransition> truth;
  std::vector<DelayEntry> delays;
  std::vector<Incident> incidents;
  std::uint64_t dropped_incidents = 0;
  std::size_t false_detections = 0;
  nlohmann::json config;

  /// Mean of |delay| over matched transitions; nullopt when none matched.
  std::optional<double> mean_abs_delay() const;
  /// States visited by committed transitions, starting from the initial state.
  std::vector<int> state_path(int initial) const;
};

/// Ground-truth transitions of a trial in seconds.
std::vector<TruthTransition> truth_transitions(const TrialRecording& trial);

/// Pairs each true transition with a committed transition of the same kind
/// inside the horizon. Returns the delay table and the count of unmatched
/// committed transitions.
std::pair<std::vector<DelayEntry>, std::size_t> match_transitions(
    std::span<const TruthTransition> truth, std::span<const CommittedTransition> detected,
    double horizon, MatchPolicy policy);

/// Streams the trial through denoise -> partition -> classify -> coordinator.
SimulationReport simulate_deployment(const EncoderClassifier& model, const FsmDefinition& fsm,
                                     const TrialRecording& trial, const EvalConfig& cfg,
                                     const WindowingConfig& windowing,
                                     const std::string& trial_id = "trial");

/// State changes of a raw decision stream without FSM validation. A change is
/// committed once the new state has been observed for `persistence`
/// consecutive decisions, at the time of the first of them.
std::vector<CommittedTransition> baseline_commit(std::span<const int> decisions,
                                                 std::span<const double> times, int initial,
                                                 std::size_t persistence);

/// Single-stage 4-class window classifier run at the decision stride.
SimulationReport run_baseline(const Network& upstream, const TrialRecording& trial,
                              const EvalConfig& cfg, const WindowingConfig& windowing,
                              const std::string& trial_id = "trial");

struct BudgetCheck {
  int from = 0;
  int to = 0;
  std::optional<double> delay;
  bool pass = false;
};

/// Fails any matched delay above epsilon and every unmatched true transition.
std::vector<BudgetCheck> check_delay_budget(const SimulationReport& report, const EvalConfig& cfg);
bool budget_passes(const std::vector<BudgetCheck>& checks);

/// Re-validates every committed transition against f and Gamma.
bool transitions_respect_fsm(const FsmDefinition& fsm,
                             std::span<const CommittedTransition> transitions);

nlohmann::json to_json(const SimulationReport& report);
/// Aligned table: one row per transition kind, one column per trial.
std::string delay_table(std::span<const SimulationReport> reports, const std::string& title);

/// Confusion matrix of the model over a labelled sequence dataset.
ConfusionMatrix evaluate_classification(const EncoderClassifier& model, const LabeledDataset& data,
                                        std::vector<std::string> class_names);

/// Runs independent trial simulations on up to `jobs` threads; results keep
/// the trial order.
std::vector<SimulationReport> simulate_trials(const EncoderClassifier& model,
                                              const FsmDefinition& fsm,
                                              const std::vector<TrialRecording>& trials,
                                              const std::vector<std::string>& ids,
                                              const EvalConfig& cfg,
                                              const WindowingConfig& windowing, unsigned jobs);

}  // namespace mpic
