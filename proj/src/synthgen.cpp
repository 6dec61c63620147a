#include "mpic/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace mpic {

void GenParams::validate() const {
  if (!(plateau > baseline)) throw ContractError("gen: plateau must exceed baseline");
  if (noise_sigma < 0.0) throw ContractError("gen: noise sigma must be >= 0");
  if (ripple_amplitude < 0.0) throw ContractError("gen: ripple amplitude must be >= 0");
  if (!(sample_rate > 0.0)) throw ContractError("gen: sample rate must be > 0");
  if (!(ripple_rise > 0.0 && ripple_rise <= 1.0)) {
    throw ContractError("gen: ripple rise fraction must be in (0, 1]");
  }
  if (duration_jitter < 0.0 || duration_jitter >= 1.0) {
    throw ContractError("gen: duration jitter must be in [0, 1)");
  }
  if (noint_samples == 0 || entry_samples == 0 || exit_samples == 0) {
    throw ContractError("gen: state durations must be positive");
  }
  const double worst = (1.0 + duration_jitter) *
                       static_cast<double>(noint_samples + entry_samples + exit_samples);
  if (worst + 1.0 >= static_cast<double>(length)) {
    throw ContractError("gen: state durations leave no room for constant milling");
  }
}

TrialRecording generate_trial(const GenParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> jitter(-params.duration_jitter, params.duration_jitter);
  auto jittered = [&](std::size_t nominal) {
    const double d = static_cast<double>(nominal) * (1.0 + jitter(rng));
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(d)));
  };
  const std::size_t noint = jittered(params.noint_samples);
  const std::size_t entry = jittered(params.entry_samples);
  const std::size_t exit = jittered(params.exit_samples);
  const std::size_t n = params.length;

  TrialRecording trial;
  trial.params = params;
  trial.transitions = {noint, noint + entry, n - exit};
  trial.samples.resize(n);
  trial.labels.resize(n);

  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  const double phase = phase_dist(rng);
  std::normal_distribution<double> noise(0.0, params.noise_sigma > 0.0 ? params.noise_sigma : 1.0);
  const double mu0 = params.baseline;
  const double mu1 = params.plateau;
  const double omega = 2.0 * std::numbers::pi * params.ripple_hz / params.sample_rate;
  const auto [t1, t2, t3] = trial.transitions;

  for (std::size_t i = 0; i < n; ++i) {
    double level = mu0;
    double envelope = 0.0;
    int state = 0;
    if (i >= t3) {
      const double p = static_cast<double>(i - t3) / static_cast<double>(n - t3);
      level = mu1 - (mu1 - mu0) * p;
      envelope = params.ripple_amplitude * (1.0 - p);
      state = 3;
    } else if (i >= t2) {
      level = mu1;
      envelope = params.ripple_amplitude;
      state = 2;
    } else if (i >= t1) {
      const double p = static_cast<double>(i - t1) / static_cast<double>(t2 - t1);
      level = mu0 + (mu1 - mu0) * p;
      envelope = params.ripple_amplitude * std::min(1.0, p / params.ripple_rise);
      state = 1;
    }
    double v = level;
    if (envelope > 0.0) v += envelope * std::sin(omega * static_cast<double>(i) + phase);
    if (params.noise_sigma > 0.0) v += noise(rng);
    trial.samples[i] = v;
    trial.labels[i] = state;
  }
  return trial;
}

SignalRecord to_signal_record(const TrialRecording& trial) {
  SignalRecord rec;
  rec.sample_rate = trial.params.sample_rate;
  rec.samples = trial.samples;
  rec.labels = trial.labels;
  std::ostringstream c;
  c << "seed=" << trial.params.seed << " transitions=" << trial.transitions[0] << ','
    << trial.transitions[1] << ',' << trial.transitions[2];
  rec.comments.push_back(c.str());
  return rec;
}

TrialRecording from_signal_record(const SignalRecord& rec) {
  if (rec.labels.size() != rec.samples.size() || rec.samples.empty()) {
    throw ContractError("recording has no ground-truth label column");
  }
  TrialRecording trial;
  trial.samples = rec.samples;
  trial.labels = rec.labels;
  trial.params.sample_rate = rec.sample_rate;
  trial.params.length = rec.samples.size();
  if (rec.labels.front() != 0) throw ContractError("recording does not start in NoInt");
  int expected = 0;
  for (std::size_t i = 0; i < rec.labels.size(); ++i) {
    const int l = rec.labels[i];
    if (l == expected) continue;
    if (l != expected + 1 || l > 3) {
      throw ContractError("labels must follow NoInt -> Entry -> Const -> Exit (index " +
                          std::to_string(i) + ")");
    }
    trial.transitions[static_cast<std::size_t>(expected)] = i;
    expected = l;
  }
  if (expected != 3) throw ContractError("recording does not reach the Exit state");
  return trial;
}

ExtractionReport extract_steady_samples(const std::vector<TrialRecording>& trials,
                                        const SteadyExtraction& opts) {
  if (opts.window == 0 || opts.step == 0) throw ContractError("extract: window and step must be > 0");
  struct Candidate {
    std::size_t trial, start;
  };
  std::array<std::vector<Candidate>, kStateCount> per_class;
  ExtractionReport rep;
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const TrialRecording& tr = trials[t];
    for (int s = 0; s < kStateCount; ++s) {
      const std::size_t seg_begin = tr.state_start(s);
      const std::size_t seg_end = tr.state_end(s);
      if (seg_end <= seg_begin) continue;
      // Trial boundaries are not transition points; only interior edges get a margin.
      const std::size_t lo = seg_begin + (s > 0 ? opts.margin : 0);
      const std::size_t hi_end = seg_end - std::min(seg_end, s < 3 ? opts.margin : 0);
      if (hi_end < lo + opts.window) {
        rep.warnings.push_back("trial " + std::to_string(t) + " state " + std::to_string(s) +
                               ": segment of " + std::to_string(seg_end - seg_begin) +
                               " samples too short for window plus margin");
        continue;
      }
      for (std::size_t st = lo; st + opts.window <= hi_end; st += opts.step) {
        per_class[s].push_back({t, st});
      }
    }
  }
  std::size_t take = SIZE_MAX;
  for (const auto& c : per_class) {
    if (!c.empty()) take = std::min(take, c.size());
  }
  if (opts.max_per_class > 0) take = std::min(take, opts.max_per_class);

  std::mt19937_64 rng(opts.seed);
  rep.dataset.span = opts.window;
  rep.dataset.classes = kStateCount;
  for (int s = 0; s < kStateCount; ++s) {
    auto& c = per_class[s];
    if (c.empty()) continue;
    std::shuffle(c.begin(), c.end(), rng);
    for (std::size_t i = 0; i < take; ++i) {
      const auto& tr = trials[c[i].trial];
      rep.dataset.add({tr.samples.data() + c[i].start, opts.window}, s);
    }
  }
  return rep;
}

int sequence_label(const TrialRecording& trial, std::size_t end_index, std::size_t window) {
  const std::size_t first = end_index + 1 >= window ? end_index + 1 - window : 0;
  for (int k = 0; k < 3; ++k) {
    const std::size_t tp = trial.transitions[static_cast<std::size_t>(k)];
    if (tp >= first && tp <= end_index) return event_class_into(k + 1);
  }
  return trial.labels.at(end_index);
}

namespace {

// Largest-remainder split of the per-trial total in the natural case.
std::array<std::size_t, kClassCount> class_quota(
    const std::array<std::vector<std::size_t>, kClassCount>& ends, const SequenceExtraction& opts) {
  std::array<std::size_t, kClassCount> quota;
  quota.fill(opts.per_class_per_trial);
  if (opts.prior == ClassPrior::Balanced) return quota;
  std::size_t all = 0;
  for (const auto& v : ends) all += v.size();
  const std::size_t total = kClassCount * opts.per_class_per_trial;
  std::array<double, kClassCount> rem{};
  std::size_t given = 0;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    const double exact = static_cast<double>(total) * static_cast<double>(ends[c].size()) /
                         static_cast<double>(all);
    quota[c] = static_cast<std::size_t>(exact);
    rem[c] = exact - static_cast<double>(quota[c]);
    given += quota[c];
  }
  std::array<std::size_t, kClassCount> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; given < total; ++i, ++given) ++quota[order[i]];
  return quota;
}

}  // namespace

LabeledDataset extract_sequence_samples(const std::vector<TrialRecording>& trials,
                                        const SequenceExtraction& opts) {
  if (!(opts.boundary_fraction >= 0.0 && opts.boundary_fraction <= 1.0)) {
    throw ContractError("extract: boundary fraction must be in [0, 1]");
  }
  const std::size_t span = opts.window * opts.sequence;
  LabeledDataset ds;
  ds.span = span;
  ds.classes = kClassCount;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const TrialRecording& tr = trials[t];
    if (tr.samples.size() < span) {
      throw ContractError("extract: trial " + std::to_string(t) + " is shorter than the span");
    }
    std::array<std::vector<std::size_t>, kClassCount> ends;
    std::vector<int> label(tr.samples.size(), -1);
    for (std::size_t e = span - 1; e < tr.samples.size(); ++e) {
      label[e] = sequence_label(tr, e, opts.window);
      ends[static_cast<std::size_t>(label[e])].push_back(e);
    }
    auto near = [&](std::size_t e) {
      const bool after = e + opts.window < label.size() && label[e + opts.window] != label[e];
      const bool before = e >= span - 1 + opts.window && label[e - opts.window] != label[e];
      return after || before;
    };
    const std::array<std::size_t, kClassCount> quota = class_quota(ends, opts);
    for (int c = 0; c < kClassCount; ++c) {
      auto& v = ends[static_cast<std::size_t>(c)];
      std::shuffle(v.begin(), v.end(), rng);
      const std::size_t n = std::min(v.size(), quota[static_cast<std::size_t>(c)]);
      if (c < kStateCount && opts.boundary_fraction > 0.0) {
        // Near ends first, up to the requested share; the shuffle order is kept within each group.
        auto mid = std::stable_partition(v.begin(), v.end(), near);
        const auto n_near = static_cast<std::size_t>(mid - v.begin());
        const auto want = std::min(
            n_near, static_cast<std::size_t>(std::ceil(opts.boundary_fraction * static_cast<double>(n))));
        std::rotate(v.begin() + static_cast<long>(want), mid, v.end());
      }
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t e = v[i];
        ds.add({tr.samples.data() + (e + 1 - span), span}, c,
               "trial=" + std::to_string(t) + " end=" + std::to_string(e));
      }
    }
  }
  return ds;
}

}  // namespace mpic
