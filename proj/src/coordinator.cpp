#include "mpic/coordinator.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace mpic {

using nlohmann::json;

std::optional<int> FsmDefinition::next_state(int state, int event) const {
  auto it = transitions.find({state, event});
  if (it == transitions.end()) return std::nullopt;
  return it->second;
}

bool FsmDefinition::is_active(int state, int event) const {
  return active_events.at(static_cast<std::size_t>(state)).count(event) != 0;
}

std::string FsmDefinition::class_name(int cls) const {
  const ClassTarget& t = class_map.at(static_cast<std::size_t>(cls));
  return t.kind == ClassTarget::Kind::State ? states.at(t.index) : events.at(t.index);
}

int FsmDefinition::class_of(const std::string& name) const {
  for (std::size_t c = 0; c < class_map.size(); ++c) {
    if (class_name(static_cast<int>(c)) == name) return static_cast<int>(c);
  }
  throw FsmError("no classifier class maps to '" + name + "'");
}

int FsmDefinition::state_index(const std::string& name) const {
  auto it = std::find(states.begin(), states.end(), name);
  if (it == states.end()) throw FsmError("undeclared state '" + name + "'");
  return static_cast<int>(it - states.begin());
}

int FsmDefinition::event_index(const std::string& name) const {
  auto it = std::find(events.begin(), events.end(), name);
  if (it == events.end()) throw FsmError("undeclared event '" + name + "'");
  return static_cast<int>(it - events.begin());
}

void FsmDefinition::validate() const {
  if (states.empty()) throw FsmError("state set is empty");
  if (events.empty()) throw FsmError("event set is empty");
  auto check_unique = [](const std::vector<std::string>& names, const char* what) {
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (n.empty()) throw FsmError(std::string("empty ") + what + " name");
      if (!seen.insert(n).second) throw FsmError(std::string("duplicate ") + what + " '" + n + "'");
    }
  };
  check_unique(states, "state");
  check_unique(events, "event");
  for (const auto& s : states) {
    if (std::find(events.begin(), events.end(), s) != events.end()) {
      throw FsmError("name '" + s + "' is both a state and an event");
    }
  }
  const int ns = static_cast<int>(states.size());
  const int ne = static_cast<int>(events.size());
  if (initial < 0 || initial >= ns) throw FsmError("initial state is not a declared state");
  if (active_events.size() != states.size()) {
    throw FsmError("active event sets do not cover every state");
  }
  for (const auto& [key, to] : transitions) {
    const auto [from, ev] = key;
    if (from < 0 || from >= ns || to < 0 || to >= ns || ev < 0 || ev >= ne) {
      throw FsmError("transition uses an undeclared state or event");
    }
    if (!is_active(from, ev)) {
      throw FsmError("transition f(" + states[from] + ", " + events[ev] + ") is defined but " +
                     events[ev] + " is not in the active event set of " + states[from]);
    }
  }
  for (int s = 0; s < ns; ++s) {
    for (int ev : active_events[s]) {
      if (ev < 0 || ev >= ne) throw FsmError("active event set of " + states[s] + " is invalid");
    }
  }
  if (class_map.size() != states.size() + events.size()) {
    throw FsmError("class_map has " + std::to_string(class_map.size()) +
                   " classes but there are " + std::to_string(states.size() + events.size()) +
                   " states and events");
  }
  std::set<std::pair<int, int>> targets;
  for (const auto& t : class_map) {
    const int limit = t.kind == ClassTarget::Kind::State ? ns : ne;
    if (t.index < 0 || t.index >= limit) throw FsmError("class_map target out of range");
    if (!targets.insert({static_cast<int>(t.kind), t.index}).second) {
      throw FsmError("class_map is not a bijection: '" +
                     (t.kind == ClassTarget::Kind::State ? states[t.index] : events[t.index]) +
                     "' is mapped twice");
    }
  }
}

FsmDefinition parse_fsm(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FsmError(std::string("FSM definition is not valid JSON: ") + e.what());
  }
  FsmDefinition fsm;
  try {
    fsm.states = doc.at("states").get<std::vector<std::string>>();
    fsm.events = doc.at("events").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FsmError(std::string("FSM definition needs string arrays 'states' and 'events': ") +
                   e.what());
  }
  if (fsm.states.empty()) throw FsmError("state set is empty");
  if (!doc.contains("initial") || !doc["initial"].is_string()) {
    throw FsmError("FSM definition needs a string 'initial'");
  }
  fsm.initial = fsm.state_index(doc["initial"].get<std::string>());

  fsm.active_events.assign(fsm.states.size(), {});
  if (!doc.contains("transitions") || !doc["transitions"].is_array()) {
    throw FsmError("FSM definition needs a 'transitions' array");
  }
  for (const auto& t : doc["transitions"]) {
    if (!t.contains("from") || !t.contains("event") || !t.contains("to")) {
      throw FsmError("transition entries need 'from', 'event' and 'to'");
    }
    const int from = fsm.state_index(t["from"].get<std::string>());
    const int ev = fsm.event_index(t["event"].get<std::string>());
    const int to = fsm.state_index(t["to"].get<std::string>());
    if (!fsm.transitions.emplace(std::make_pair(from, ev), to).second) {
      throw FsmError("transition f(" + fsm.states[from] + ", " + fsm.events[ev] +
                     ") is defined twice");
    }
    fsm.active_events[from].insert(ev);
  }
  if (doc.contains("active_events")) {
    fsm.active_events.assign(fsm.states.size(), {});
    for (const auto& [state, evs] : doc["active_events"].items()) {
      const int s = fsm.state_index(state);
      for (const auto& e : evs) fsm.active_events[s].insert(fsm.event_index(e.get<std::string>()));
    }
  }

  if (!doc.contains("class_map") || !doc["class_map"].is_object()) {
    throw FsmError("FSM definition needs a 'class_map' object");
  }
  const auto& cm = doc["class_map"];
  fsm.class_map.assign(cm.size(), {});
  std::vector<bool> seen(cm.size(), false);
  for (const auto& [key, value] : cm.items()) {
    std::size_t idx = 0;
    try {
      std::size_t used = 0;
      idx = std::stoul(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw FsmError("class_map key '" + key + "' is not a class index");
    }
    if (idx >= cm.size()) {
      throw FsmError("class_map indices must be 0.." + std::to_string(cm.size() - 1) +
                     ", got " + key);
    }
    if (seen[idx]) throw FsmError("class_map index " + std::to_string(idx) + " appears twice");
    seen[idx] = true;
    const std::string name = value.get<std::string>();
    auto si = std::find(fsm.states.begin(), fsm.states.end(), name);
    auto ei = std::find(fsm.events.begin(), fsm.events.end(), name);
    if (si != fsm.states.end()) {
      fsm.class_map[idx] = {ClassTarget::Kind::State, static_cast<int>(si - fsm.states.begin())};
    } else if (ei != fsm.events.end()) {
      fsm.class_map[idx] = {ClassTarget::Kind::Event, static_cast<int>(ei - fsm.events.begin())};
    } else {
      throw FsmError("class_map entry " + key + " names undeclared '" + name + "'");
    }
  }
  fsm.validate();
  return fsm;
}

FsmDefinition load_fsm(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FsmError("cannot open FSM definition '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_fsm(ss.str());
}

FsmDefinition milling_fsm() {
  return parse_fsm(R"({
    "states": ["NoInt", "Entry", "Const", "Exit"],
    "events": ["e_NoInt_Entry", "e_Entry_Const", "e_Const_Exit"],
    "initial": "NoInt",
    "transitions": [
      {"from": "NoInt", "event": "e_NoInt_Entry", "to": "Entry"},
      {"from": "Entry", "event": "e_Entry_Const", "to": "Const"},
      {"from": "Const", "event": "e_Const_Exit", "to": "Exit"}
    ],
    "class_map": {"0": "NoInt", "1": "Entry", "2": "Const", "3": "Exit",
                  "4": "e_NoInt_Entry", "5": "e_Entry_Const", "6": "e_Const_Exit"}
  })");
}

std::string reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::StateJump: return "state-jump";
    case RejectReason::InactiveEvent: return "inactive-event";
    case RejectReason::UndefinedTransition: return "undefined-transition";
  }
  return "unknown";
}

Coordinator::Coordinator(FsmDefinition fsm, std::size_t incident_capacity)
    : fsm_(std::move(fsm)), capacity_(incident_capacity) {
  fsm_.validate();
  state_ = fsm_.initial;
}

Outcome Coordinator::reject(RejectReason reason, int decision, double end_time,
                            std::shared_ptr<const WindowSequence> window, Severity severity) {
  Incident inc;
  inc.decision_index = decisions_;
  inc.end_time = end_time;
  inc.current_state = state_;
  inc.proposed_class = decision;
  inc.reason = reason;
  inc.severity = severity;
  inc.window = std::move(window);
  if (capacity_ > 0) {
    if (incidents_.size() == capacity_) {
      incidents_.pop_front();
      ++dropped_;
    }
    incidents_.push_back(inc);
  } else {
    ++dropped_;
  }
  Outcome o;
  o.kind = Outcome::Kind::Rejected;
  o.from = o.to = state_;
  o.time = end_time;
  o.incident = std::move(inc);
  return o;
}

Outcome Coordinator::step(int decision, double end_time,
                          std::shared_ptr<const WindowSequence> window) {
  if (decision < 0 || static_cast<std::size_t>(decision) >= fsm_.class_count()) {
    throw ContractError("coordinator: decision class " + std::to_string(decision) +
                        " is not in the class map");
  }
  if (end_time < last_time_) {
    throw ContractError("coordinator: decision times must be non-decreasing");
  }
  last_time_ = end_time;
  Outcome out;
  const ClassTarget target = fsm_.class_map[static_cast<std::size_t>(decision)];
  if (target.kind == ClassTarget::Kind::State) {
    if (target.index == state_) {
      out.kind = Outcome::Kind::Hold;
      out.from = out.to = state_;
      out.time = end_time;
    } else {
      out = reject(RejectReason::StateJump, decision, end_time, std::move(window),
                   Severity::Warning);
    }
  } else if (!fsm_.is_active(state_, target.index)) {
    const Severity sev = target.index == last_event_ ? Severity::Info : Severity::Warning;
    out = reject(RejectReason::InactiveEvent, decision, end_time, std::move(window), sev);
  } else if (auto next = fsm_.next_state(state_, target.index); !next) {
    out = reject(RejectReason::UndefinedTransition, decision, end_time, std::move(window),
                 Severity::Warning);
  } else {
    out.kind = Outcome::Kind::Transition;
    out.from = state_;
    out.to = *next;
    out.event = target.index;
    out.time = end_time;
    state_ = *next;
    last_event_ = target.index;
    last_transition_time_ = end_time;
  }
  ++decisions_;
  return out;
}

LabeledDataset incidents_to_dataset(const Coordinator& coord, std::size_t span) {
  LabeledDataset ds;
  ds.span = span;
  ds.classes = coord.fsm().class_count();
  for (const Incident& inc : coord.incidents()) {
    if (!inc.window) continue;
    std::ostringstream note;
    note << "decision=" << inc.decision_index << " end_time=" << format_double(inc.end_time)
         << " end_index=" << inc.window->end_index
         << " state=" << coord.fsm().states[inc.current_state]
         << " proposed=" << coord.fsm().class_name(inc.proposed_class)
         << " reason=" << reason_name(inc.reason)
         << " severity=" << (inc.severity == Severity::Info ? "info" : "warning");
    ds.add(inc.window->data.data, kUnlabeled, note.str());
  }
  return ds;
}

void export_incidents(const Coordinator& coord, std::size_t span, std::ostream& sink) {
  write_dataset(sink, incidents_to_dataset(coord, span));
  if (!sink) throw std::runtime_error("incident export: write failed");
}

}  // namespace mpic
