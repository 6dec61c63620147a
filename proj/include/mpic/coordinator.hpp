#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mpic/dataset.hpp"
#include "mpic/stream.hpp"

namespace mpic {

class FsmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// What a classifier class stands for: an interactive state or a transition event.
struct ClassTarget {
  enum class Kind { State, Event };
  Kind kind = Kind::State;
  int index = 0;  // into states or events

  bool operator==(const ClassTarget&) const = default;
};

/// Finite state machine (X, E, f, Gamma, x0) plus the classifier-class mapping.
struct FsmDefinition {
  std::vector<std::string> states;
  std::vector<std::string> events;
  int initial = 0;
  std::map<std::pair<int, int>, int> transitions;  // (state, event) -> state
  std::vector<std::set<int>> active_events;         // per state
  std::vector<ClassTarget> class_map;               // per classifier class

  std::size_t class_count() const { return class_map.size(); }
  std::optional<int> next_state(int state, int event) const;
  bool is_active(int state, int event) const;
  std::string class_name(int cls) const;
  /// Classifier class for a state or event name; throws if absent.
  int class_of(const std::string& name) const;
  int state_index(const std::string& name) const;
  int event_index(const std::string& name) const;

  /// Throws FsmError describing the first violated invariant.
  void validate() const;
};

/// Parses the JSON definition (states, events, initial, transitions, class_map,
/// optional active_events) and validates it.
FsmDefinition parse_fsm(const std::string& json_text);
FsmDefinition load_fsm(const std::filesystem::path& path);

/// The four-state milling machine with its three data-backed transitions.
FsmDefinition milling_fsm();

enum class RejectReason { StateJump, InactiveEvent, UndefinedTransition };
std::string reason_name(RejectReason r);

enum class Severity { Warning, Info };

struct Incident {
  std::uint64_t decision_index = 0;
  double end_time = 0.0;
  int current_state = 0;
  int proposed_class = 0;
  RejectReason reason = RejectReason::StateJump;
  /// Info when an already-committed event keeps being reported.
  Severity severity = Severity::Warning;
  std::shared_ptr<const WindowSequence> window;
};

struct Outcome {
  enum class Kind { Hold, Transition, Rejected };
  Kind kind = Kind::Hold;
  int from = 0;
  int to = 0;
  int event = -1;
  double time = 0.0;
  std::optional<Incident> incident;
};

/// Sequential decision validator. Holds the current state, the last committed
/// event and its time, and a bounded incident log.
class Coordinator {
 public:
  explicit Coordinator(FsmDefinition fsm, std::size_t incident_capacity = 4096);

  /// Validates one classifier decision (argmax class) made at `end_time`.
  Outcome step(int decision, double end_time,
               std::shared_ptr<const WindowSequence> window = nullptr);

  int state() const { return state_; }
  int last_event() const { return last_event_; }
  double last_transition_time() const { return last_transition_time_; }
  std::uint64_t decisions() const { return decisions_; }
  const FsmDefinition& fsm() const { return fsm_; }
  const std::deque<Incident>& incidents() const { return incidents_; }
  std::uint64_t dropped_incidents() const { return dropped_; }

 private:
  Outcome reject(RejectReason reason, int decision, double end_time,
                 std::shared_ptr<const WindowSequence> window, Severity severity);

  FsmDefinition fsm_;
  std::size_t capacity_;
  int state_;
  int last_event_ = -1;
  double last_transition_time_ = 0.0;
  double last_time_ = -1.0;
  std::uint64_t decisions_ = 0;
  std::deque<Incident> incidents_;
  std::uint64_t dropped_ = 0;
};

/// Writes every incident's window sequence as an unlabeled training record
/// (label placeholder kUnlabeled) with an annotation describing the rejection.
/// `span` is the record length (n*k*w); every incident window must match it.
LabeledDataset incidents_to_dataset(const Coordinator& coord, std::size_t span);
void export_incidents(const Coordinator& coord, std::size_t span, std::ostream& sink);

}  // namespace mpic
