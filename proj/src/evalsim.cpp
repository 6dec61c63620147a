#include "mpic/evalsim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

namespace mpic {

// ---------------------------------------------------------------- metrics

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : classes(std::move(class_names)),
      counts(classes.size(), std::vector<std::uint64_t>(classes.size(), 0)) {}

void ConfusionMatrix::add(int truth, int predicted) {
  const auto q = static_cast<int>(classes.size());
  if (truth < 0 || truth >= q || predicted < 0 || predicted >= q) {
    throw ContractError("confusion: class index out of range");
  }
  ++counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts) {
    for (auto c : row) t += c;
  }
  return t;
}

ConfusionMatrix ConfusionMatrix::from(std::span<const int> truth, std::span<const int> predicted,
                                      std::vector<std::string> class_names) {
  if (truth.size() != predicted.size()) {
    throw ContractError("confusion: truth and prediction lengths differ");
  }
  ConfusionMatrix cm(std::move(class_names));
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

MetricsSummary precision_recall_f1(const ConfusionMatrix& cm) {
  const std::size_t q = cm.classes.size();
  MetricsSummary m;
  m.per_class.resize(q);
  std::size_t used = 0;
  for (std::size_t c = 0; c < q; ++c) {
    std::uint64_t tp = cm.counts[c][c], fp = 0, fn = 0;
    for (std::size_t o = 0; o < q; ++o) {
      if (o == c) continue;
      fp += cm.counts[o][c];
      fn += cm.counts[c][o];
    }
    ClassMetrics& r = m.per_class[c];
    r.support = tp + fn;
    r.precision_undefined = tp + fp == 0;
    r.recall_undefined = tp + fn == 0;
    r.precision = r.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.recall = r.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    r.f1 = f1_score(r.precision, r.recall);
    r.excluded = r.precision_undefined && r.recall_undefined;
    if (r.excluded) continue;
    m.macro_precision += r.precision;
    m.macro_recall += r.recall;
    m.macro_f1 += r.f1;
    ++used;
  }
  if (used > 0) {
    m.macro_precision /= static_cast<double>(used);
    m.macro_recall /= static_cast<double>(used);
    m.macro_f1 /= static_cast<double>(used);
  }
  return m;
}

void write_confusion_csv(std::ostream& os, const ConfusionMatrix& cm) {
  os << "truth\\predicted";
  for (const auto& c : cm.classes) os << ',' << c;
  os << '\n';
  for (std::size_t r = 0; r < cm.classes.size(); ++r) {
    os << cm.classes[r];
    for (auto v : cm.counts[r]) os << ',' << v;
    os << '\n';
  }
}

std::string metrics_table(const ConfusionMatrix& cm, const MetricsSummary& m) {
  std::size_t width = 5;
  for (const auto& c : cm.classes) width = std::max(width, c.size());
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << std::left << std::setw(static_cast<int>(width)) << "class" << "  precision  recall     F1"
     << "  support\n";
  for (std::size_t c = 0; c < cm.classes.size(); ++c) {
    const auto& r = m.per_class[c];
    os << std::left << std::setw(static_cast<int>(width)) << cm.classes[c] << "  " << std::right
       << std::setw(9) << r.precision << "  " << std::setw(6) << r.recall << "  " << std::setw(5)
       << r.f1 << "  " << std::setw(7) << r.support;
    if (r.excluded) {
      os << "  (absent)";
    } else if (r.precision_undefined) {
      os << "  (never predicted)";
    }
    os << '\n';
  }
  os << std::left << std::setw(static_cast<int>(width)) << "macro" << "  " << std::right
     << std::setw(9) << m.macro_precision << "  " << std::setw(6) << m.macro_recall << "  "
     << std::setw(5) << m.macro_f1 << '\n';
  return os.str();
}

// ---------------------------------------------------------------- simulation

void EvalConfig::validate() const {
  if (!(max_delay > 0.0)) throw ContractError("eval: delay budget must be > 0");
  if (stride == 0) throw ContractError("eval: stride must be > 0");
  if (!(matching_horizon > 0.0)) throw ContractError("eval: matching horizon must be > 0");
  if (baseline_persistence == 0) throw ContractError("eval: baseline persistence must be >= 1");
  if (filter.kind != FilterKind::None && filter.width % 2 == 0) {
    throw ContractError("eval: filter width must be odd");
  }
}

std::optional<double> SimulationReport::mean_abs_delay() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& d : delays) {
    if (!d.delay) continue;
    sum += std::abs(*d.delay);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::vector<int> SimulationReport::state_path(int initial) const {
  std::vector<int> path{initial};
  for (const auto& t : transitions) path.push_back(t.to);
  return path;
}

std::vector<TruthTransition> truth_transitions(const TrialRecording& trial) {
  std::vector<TruthTransition> out;
  for (int k = 0; k < 3; ++k) {
    TruthTransition t;
    t.from = k;
    t.to = k + 1;
    t.index = trial.transitions[static_cast<std::size_t>(k)];
    t.time = static_cast<double>(t.index) / trial.sample_rate();
    out.push_back(t);
  }
  return out;
}

std::pair<std::vector<DelayEntry>, std::size_t> match_transitions(
    std::span<const TruthTransition> truth, std::span<const CommittedTransition> detected,
    double horizon, MatchPolicy policy) {
  std::vector<bool> used(detected.size(), false);
  std::vector<DelayEntry> delays;
  for (const auto& t : truth) {
    DelayEntry e;
    e.from = t.from;
    e.to = t.to;
    e.true_time = t.time;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < detected.size(); ++i) {
      const auto& d = detected[i];
      if (used[i] || d.from != t.from || d.to != t.to) continue;
      const double gap = std::abs(d.time - t.time);
      if (gap > horizon) continue;
      if (!best) {
        best = i;
        if (policy == MatchPolicy::First) break;
      } else if (gap < std::abs(detected[*best].time - t.time)) {
        best = i;
      }
    }
    if (best) {
      used[*best] = true;
      e.detected_time = detected[*best].time;
      e.delay = detected[*best].time - t.time;
    }
    delays.push_back(e);
  }
  const auto unmatched = static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
  return {delays, unmatched};
}

namespace {

nlohmann::json eval_snapshot(const EvalConfig& cfg, const WindowingConfig& w) {
  return {{"max_delay", cfg.max_delay},
          {"stride", cfg.stride},
          {"matching_horizon", cfg.matching_horizon},
          {"baseline_persistence", cfg.baseline_persistence},
          {"match_policy", cfg.match_policy == MatchPolicy::First ? "first" : "nearest"},
          {"filter", {{"kind", filter_kind_name(cfg.filter.kind)}, {"width", cfg.filter.width}}},
          {"window", w.window},
          {"sequence", w.sequence},
          {"channels", w.channels},
          {"sample_rate", w.sample_rate}};
}

std::vector<WindowSequence> partition_trial(const TrialRecording& trial, const EvalConfig& cfg,
                                            WindowingConfig windowing) {
  windowing.stride = cfg.stride;
  windowing.sample_rate = trial.sample_rate();
  windowing.validate();
  if (windowing.channels != 1) throw ContractError("simulate: only single-channel signals");
  const std::vector<double> clean = denoise(trial.samples, cfg.filter);
  Partitioner part(windowing);
  return part.push(clean);
}

}  // namespace

SimulationReport simulate_deployment(const EncoderClassifier& model, const FsmDefinition& fsm,
                                     const TrialRecording& trial, const EvalConfig& cfg,
                                     const WindowingConfig& windowing,
                                     const std::string& trial_id) {
  cfg.validate();
  fsm.validate();
  if (fsm.class_count() != kDownstreamClasses) {
    throw ContractError("simulate: FSM class map has " + std::to_string(fsm.class_count()) +
                        " classes but the model outputs " + std::to_string(kDownstreamClasses));
  }
  if (windowing.window != kWindowLength || windowing.sequence != kSequenceLength) {
    throw ContractError("simulate: windowing does not match the model input");
  }
  const std::vector<WindowSequence> seqs = partition_trial(trial, cfg, windowing);

  SimulationReport rep;
  rep.trial_id = trial_id;
  rep.system = "proposed";
  rep.state_names = fsm.states;
  for (std::size_t c = 0; c < fsm.class_count(); ++c) {
    rep.class_names.push_back(fsm.class_name(static_cast<int>(c)));
  }
  rep.truth = truth_transitions(trial);
  rep.config = eval_snapshot(cfg, windowing);
  rep.config["stride"] = cfg.stride;
  rep.config["normalize_scores"] = model.normalize_scores;
  rep.config["model_hash"] = model_hash(model);

  // Decisions are independent of one another, so the classifier runs in
  // batches; the coordinator still consumes them strictly in order.
  constexpr std::size_t kBatch = 32;
  const std::size_t span = windowing.span();
  std::vector<int> decisions;
  decisions.reserve(seqs.size());
  std::vector<double> flat;
  for (std::size_t b = 0; b < seqs.size(); b += kBatch) {
    const std::size_t count = std::min(kBatch, seqs.size() - b);
    flat.assign(count * span, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      std::copy(seqs[b + i].data.data.begin(), seqs[b + i].data.data.end(),
                flat.begin() + static_cast<std::ptrdiff_t>(i * span));
    }
    const auto pred = argmax_rows(classify_batch(model, flat, count));
    decisions.insert(decisions.end(), pred.begin(), pred.end());
  }

  Coordinator coord(fsm);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    auto window = std::make_shared<const WindowSequence>(seqs[i]);
    const Outcome o = coord.step(decisions[i], seqs[i].end_time, window);
    DecisionRecord d;
    d.end_index = seqs[i].end_index;
    d.end_time = seqs[i].end_time;
    d.raw_class = decisions[i];
    d.outcome = o.kind;
    if (o.incident) d.reason = o.incident->reason;
    d.state_after = coord.state();
    rep.trace.push_back(d);
    if (o.kind == Outcome::Kind::Transition) {
      rep.transitions.push_back({o.from, o.to, o.event, o.time});
    }
  }
  rep.incidents.assign(coord.incidents().begin(), coord.incidents().end());
  rep.dropped_incidents = coord.dropped_incidents();
  auto [delays, spurious] =
      match_transitions(rep.truth, rep.transitions, cfg.matching_horizon, cfg.match_policy);
  rep.delays = std::move(delays);
  rep.false_detections = spurious;
  return rep;
}

std::vector<CommittedTransition> baseline_commit(std::span<const int> decisions,
                                                 std::span<const double> times, int initial,
                                                 std::size_t persistence) {
  if (decisions.size() != times.size()) {
    throw ContractError("baseline: decision and time lengths differ");
  }
  if (persistence == 0) throw ContractError("baseline: persistence must be >= 1");
  std::vector<CommittedTransition> out;
  int state = initial;
  int candidate = initial;
  std::size_t run = 0;
  double run_start = 0.0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const int d = decisions[i];
    if (d == state) {
      run = 0;
      candidate = state;
      continue;
    }
    if (d != candidate || run == 0) {
      candidate = d;
      run = 0;
      run_start = times[i];
    }
    if (++run >= persistence) {
      out.push_back({state, d, -1, run_start});
      state = d;
      run = 0;
      candidate = state;
    }
  }
  return out;
}

SimulationReport run_baseline(const Network& upstream, const TrialRecording& trial,
                              const EvalConfig& cfg, const WindowingConfig& windowing,
                              const std::string& trial_id) {
  cfg.validate();
  WindowingConfig single = windowing;
  single.sequence = 1;
  const std::vector<WindowSequence> seqs = partition_trial(trial, cfg, single);

  SimulationReport rep;
  rep.trial_id = trial_id;
  rep.system = "baseline";
  rep.state_names = {"NoInt", "Entry", "Const", "Exit"};
  rep.class_names = rep.state_names;
  rep.truth = truth_transitions(trial);
  rep.config = eval_snapshot(cfg, single);
  rep.config["model_hash"] = network_hash(upstream);

  std::vector<int> decisions;
  std::vector<double> times;
  constexpr std::size_t kBatch = 64;
  const std::size_t w = single.window;
  for (std::size_t b = 0; b < seqs.size(); b += kBatch) {
    const std::size_t count = std::min(kBatch, seqs.size() - b);
    Tensor x({count, 1, w});
    for (std::size_t i = 0; i < count; ++i) {
      std::copy(seqs[b + i].data.data.begin(), seqs[b + i].data.data.end(),
                x.data.begin() + static_cast<std::ptrdiff_t>(i * w));
    }
    const auto pred = argmax_rows(infer(upstream, x));
    decisions.insert(decisions.end(), pred.begin(), pred.end());
  }
  for (const auto& s : seqs) times.push_back(s.end_time);

  rep.transitions = baseline_commit(decisions, times, 0, cfg.baseline_persistence);
  std::size_t next = 0;
  int state = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    DecisionRecord d;
    d.end_index = seqs[i].end_index;
    d.end_time = seqs[i].end_time;
    d.raw_class = decisions[i];
    d.outcome = Outcome::Kind::Hold;
    while (next < rep.transitions.size() && rep.transitions[next].time <= d.end_time) {
      state = rep.transitions[next].to;
      ++next;
      d.outcome = Outcome::Kind::Transition;
    }
    d.state_after = state;
    rep.trace.push_back(d);
  }
  // Transition points are read off the first state change; later flicker is ignored.
  auto [delays, spurious] =
      match_transitions(rep.truth, rep.transitions, cfg.matching_horizon, cfg.match_policy);
  rep.delays = std::move(delays);
  rep.false_detections = spurious;
  return rep;
}

std::vector<BudgetCheck> check_delay_budget(const SimulationReport& report, const EvalConfig& cfg) {
  std::vector<BudgetCheck> out;
  for (const auto& d : report.delays) {
    BudgetCheck c;
    c.from = d.from;
    c.to = d.to;
    c.delay = d.delay;
    c.pass = d.delay.has_value() && *d.delay <= cfg.max_delay;
    out.push_back(c);
  }
  return out;
}

bool budget_passes(const std::vector<BudgetCheck>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const BudgetCheck& c) { return c.pass; });
}

bool transitions_respect_fsm(const FsmDefinition& fsm,
                             std::span<const CommittedTransition> transitions) {
  int state = fsm.initial;
  for (const auto& t : transitions) {
    if (t.from != state || t.event < 0) return false;
    if (!fsm.is_active(state, t.event)) return false;
    const auto next = fsm.next_state(state, t.event);
    if (!next || *next != t.to) return false;
    state = t.to;
  }
  return true;
}

namespace {

std::string outcome_name(Outcome::Kind k) {
  switch (k) {
    case Outcome::Kind::Hold: return "hold";
    case Outcome::Kind::Transition: return "transition";
    case Outcome::Kind::Rejected: return "rejected";
  }
  return "?";
}

std::string name_or_index(const std::vector<std::string>& names, int i) {
  if (i >= 0 && static_cast<std::size_t>(i) < names.size()) return names[static_cast<std::size_t>(i)];
  return std::to_string(i);
}

}  // namespace

nlohmann::json to_json(const SimulationReport& r) {
  using nlohmann::json;
  json j;
  j["trial"] = r.trial_id;
  j["system"] = r.system;
  j["config"] = r.config;
  json trans = json::array();
  for (const auto& t : r.transitions) {
    trans.push_back({{"from", name_or_index(r.state_names, t.from)},
                     {"to", name_or_index(r.state_names, t.to)},
                     {"time", t.time}});
  }
  j["transitions"] = trans;
  json delays = json::array();
  for (const auto& d : r.delays) {
    json e = {{"from", name_or_index(r.state_names, d.from)},
              {"to", name_or_index(r.state_names, d.to)},
              {"true_time", d.true_time}};
    e["detected_time"] = d.detected_time ? json(*d.detected_time) : json(nullptr);
    e["delay"] = d.delay ? json(*d.delay) : json(nullptr);
    delays.push_back(e);
  }
  j["delays"] = delays;
  const auto mean = r.mean_abs_delay();
  j["mean_abs_delay"] = mean ? json(*mean) : json(nullptr);
  j["false_detections"] = r.false_detections;
  json incidents = json::array();
  for (const auto& inc : r.incidents) {
    incidents.push_back({{"decision", inc.decision_index},
                         {"time", inc.end_time},
                         {"state", name_or_index(r.state_names, inc.current_state)},
                         {"proposed", name_or_index(r.class_names, inc.proposed_class)},
                         {"reason", reason_name(inc.reason)},
                         {"severity", inc.severity == Severity::Warning ? "warning" : "info"}});
  }
  j["incidents"] = incidents;
  j["dropped_incidents"] = r.dropped_incidents;
  json trace = json::array();
  for (const auto& d : r.trace) {
    json e = {{"end_index", d.end_index},
              {"time", d.end_time},
              {"class", name_or_index(r.class_names, d.raw_class)},
              {"outcome", outcome_name(d.outcome)},
              {"state", name_or_index(r.state_names, d.state_after)}};
    if (d.reason) e["reason"] = reason_name(*d.reason);
    trace.push_back(e);
  }
  j["trace"] = trace;
  return j;
}

std::string delay_table(std::span<const SimulationReport> reports, const std::string& title) {
  std::ostringstream os;
  os << title << '\n';
  if (reports.empty()) return os.str();
  const auto& names = reports.front().state_names;
  std::size_t label_width = 10;
  std::vector<std::string> labels;
  for (const auto& d : reports.front().delays) {
    labels.push_back(name_or_index(names, d.from) + "->" + name_or_index(names, d.to));
    label_width = std::max(label_width, labels.back().size());
  }
  const int lw = static_cast<int>(label_width);
  os << std::left << std::setw(lw) << "transition";
  for (const auto& r : reports) os << std::right << std::setw(10) << r.trial_id;
  os << '\n' << std::fixed << std::setprecision(3);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    os << std::left << std::setw(lw) << labels[k];
    for (const auto& r : reports) {
      os << std::right << std::setw(10);
      if (k < r.delays.size() && r.delays[k].delay) {
        os << *r.delays[k].delay;
      } else {
        os << "missed";
      }
    }
    os << '\n';
  }
  os << std::left << std::setw(lw) << "mean |d|";
  for (const auto& r : reports) {
    const auto m = r.mean_abs_delay();
    os << std::right << std::setw(10);
    if (m) {
      os << *m;
    } else {
      os << "-";
    }
  }
  os << '\n';
  return os.str();
}

ConfusionMatrix evaluate_classification(const EncoderClassifier& model, const LabeledDataset& data,
                                        std::vector<std::string> class_names) {
  const Evaluation ev = evaluate_sequences(model, data);
  return ConfusionMatrix::from(data.labels, ev.predictions, std::move(class_names));
}

std::vector<SimulationReport> simulate_trials(const EncoderClassifier& model,
                                              const FsmDefinition& fsm,
                                              const std::vector<TrialRecording>& trials,
                                              const std::vector<std::string>& ids,
                                              const EvalConfig& cfg,
                                              const WindowingConfig& windowing, unsigned jobs) {
  if (ids.size() != trials.size()) throw ContractError("simulate: one id per trial required");
  std::vector<SimulationReport> out(trials.size());
  std::vector<std::exception_ptr> errors(trials.size());
  const unsigned workers =
      std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(trials.size())));
  auto work = [&](unsigned w) {
    for (std::size_t i = w; i < trials.size(); i += workers) {
      try {
        out[i] = simulate_deployment(model, fsm, trials[i], cfg, windowing, ids[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace mpic
