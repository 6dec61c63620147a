#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "mpic/synthgen.hpp"

using namespace mpic;

namespace {

GenParams quiet() {
  GenParams p;
  p.noise_sigma = 0.0;
  p.ripple_amplitude = 0.0;
  return p;
}

// Label rule written out independently of the library: any transition point
// inside [end - w + 1, end] wins, earliest transition first.
int expected_label(const TrialRecording& t, std::size_t end, std::size_t w) {
  const long lo = static_cast<long>(end) - static_cast<long>(w) + 1;
  for (int k = 0; k < 3; ++k) {
    const long tp = static_cast<long>(t.transitions[static_cast<std::size_t>(k)]);
    if (tp >= lo && tp <= static_cast<long>(end)) return 4 + k;
  }
  return t.labels[end];
}

std::size_t parse_end(const std::string& note) {
  const auto pos = note.find("end=");
  return std::stoul(note.substr(pos + 4));
}

std::size_t parse_trial(const std::string& note) {
  const auto pos = note.find("trial=");
  return std::stoul(note.substr(pos + 6));
}

}  // namespace

TEST(GenerateTrial, NoiseFreeClosedForm) {
  const TrialRecording t = generate_trial(quiet());
  ASSERT_EQ(t.samples.size(), 9000u);
  const auto [t1, t2, t3] = t.transitions;
  EXPECT_DOUBLE_EQ(t.samples[t1], 0.2);
  EXPECT_DOUBLE_EQ(t.samples[t2], 1.0);
  EXPECT_DOUBLE_EQ(t.samples[t3], 1.0);
  EXPECT_DOUBLE_EQ(t.samples[0], 0.2);
  EXPECT_DOUBLE_EQ(t.samples[t2 + 100], 1.0);
  // Entry is a straight line between the two levels.
  const double mid = 0.2 + 0.8 * static_cast<double>((t2 - t1) / 2) / static_cast<double>(t2 - t1);
  EXPECT_NEAR(t.samples[t1 + (t2 - t1) / 2], mid, 1e-12);
  // Exit ramps down monotonically.
  for (std::size_t i = t3 + 1; i < t.samples.size(); ++i) EXPECT_LT(t.samples[i], t.samples[i - 1]);
}

TEST(GenerateTrial, LabelsFollowTheFixedOrder) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    GenParams p;
    p.seed = seed;
    const TrialRecording t = generate_trial(p);
    EXPECT_LT(0u, t.transitions[0]);
    EXPECT_LT(t.transitions[0], t.transitions[1]);
    EXPECT_LT(t.transitions[1], t.transitions[2]);
    EXPECT_LT(t.transitions[2], t.samples.size());
    for (std::size_t i = 1; i < t.labels.size(); ++i) {
      const int d = t.labels[i] - t.labels[i - 1];
      ASSERT_TRUE(d == 0 || d == 1) << "seed " << seed << " index " << i;
    }
    EXPECT_EQ(t.labels.front(), 0);
    EXPECT_EQ(t.labels.back(), 3);
  }
}

TEST(GenerateTrial, SameSeedSameRecording) {
  GenParams p;
  p.seed = 77;
  const TrialRecording a = generate_trial(p), b = generate_trial(p);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.transitions, b.transitions);
  p.seed = 78;
  EXPECT_NE(generate_trial(p).samples, a.samples);
}

TEST(GenerateTrial, ConstantMillingMeanIsThePlateau) {
  GenParams p;
  p.seed = 5;
  const TrialRecording t = generate_trial(p);
  const auto b = t.samples.begin();
  const std::size_t n = t.transitions[2] - t.transitions[1];
  const double mean =
      std::accumulate(b + static_cast<long>(t.transitions[1]), b + static_cast<long>(t.transitions[2]), 0.0) /
      static_cast<double>(n);
  EXPECT_LT(std::abs(mean - p.plateau), 3.0 * p.noise_sigma / std::sqrt(static_cast<double>(n)) + 1e-3);
}

TEST(GenerateTrial, StateMeansAreWellSeparated) {
  const GenParams p;
  EXPECT_GT(std::abs(p.plateau - p.baseline), 6.0 * p.noise_sigma);
}

TEST(GenerateTrial, AlwaysFinite) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    GenParams p;
    p.seed = seed;
    for (double v : generate_trial(p).samples) ASSERT_TRUE(std::isfinite(v)) << seed;
  }
}

TEST(GenerateTrial, InvalidParamsAreRejected) {
  GenParams p;
  p.plateau = p.baseline;
  EXPECT_THROW(generate_trial(p), ContractError);
  p = GenParams{};
  p.noise_sigma = -1.0;
  EXPECT_THROW(generate_trial(p), ContractError);
  p = GenParams{};
  p.noint_samples = 8000;
  EXPECT_THROW(generate_trial(p), ContractError);
}

TEST(SignalRecord, TrialRoundTripsThroughCsv) {
  GenParams p;
  p.seed = 3;
  const TrialRecording t = generate_trial(p);
  std::stringstream ss;
  write_signal_csv(ss, to_signal_record(t));
  const TrialRecording back = from_signal_record(read_signal_csv(ss));
  EXPECT_EQ(back.samples, t.samples);
  EXPECT_EQ(back.labels, t.labels);
  EXPECT_EQ(back.transitions, t.transitions);
}

TEST(SignalRecord, UnlabeledRecordingIsNotATrial) {
  SignalRecord r;
  r.sample_rate = 250;
  r.samples = {1, 2, 3};
  EXPECT_THROW(from_signal_record(r), ContractError);
}

TEST(SteadyExtraction, WindowsStayInsideOneStateAwayFromTransitions) {
  std::vector<TrialRecording> trials;
  for (std::uint64_t s = 0; s < 6; ++s) {
    GenParams p;
    p.seed = s;
    trials.push_back(generate_trial(p));
  }
  SteadyExtraction opt;
  opt.margin = 200;
  opt.step = 7;
  opt.max_per_class = 0;
  const auto rep = extract_steady_samples(trials, opt);
  ASSERT_GT(rep.dataset.size(), 0u);
  // Recover each window's position by exact match and check its neighbourhood.
  std::size_t checked = 0;
  for (std::size_t r = 0; r < rep.dataset.size(); ++r) {
    const auto rec = rep.dataset.record(r);
    bool found = false;
    for (const auto& t : trials) {
      for (std::size_t st = 0; st + 400 <= t.samples.size() && !found; ++st) {
        if (!std::equal(rec.begin(), rec.end(), t.samples.begin() + static_cast<long>(st))) continue;
        found = true;
        for (std::size_t i = st; i < st + 400; ++i) ASSERT_EQ(t.labels[i], rep.dataset.labels[r]);
        for (auto tp : t.transitions) {
          const bool clear = st >= tp + 200 || st + 400 + 200 <= tp;
          ASSERT_TRUE(clear) << "window at " << st << " too close to transition " << tp;
        }
      }
      if (found) break;
    }
    ASSERT_TRUE(found);
    ++checked;
  }
  EXPECT_EQ(checked, rep.dataset.size());
}

TEST(SteadyExtraction, TwentyTrialsGiveBalancedFourClassSet) {
  std::vector<TrialRecording> trials;
  for (std::uint64_t s = 0; s < 20; ++s) {
    GenParams p;
    p.seed = 100 + s;
    trials.push_back(generate_trial(p));
  }
  const auto rep = extract_steady_samples(trials, SteadyExtraction{});
  EXPECT_GE(rep.dataset.size(), 2000u);
  const auto h = rep.dataset.histogram();
  ASSERT_EQ(h.size(), 4u);
  for (auto c : h) EXPECT_EQ(c, h[0]);
  EXPECT_GT(h[0], 0u);
}

TEST(SteadyExtraction, AllNoIntTrialGivesOnlyNoInt) {
  TrialRecording t;
  t.samples.assign(3000, 0.2);
  t.labels.assign(3000, 0);
  t.transitions = {3000, 3000, 3000};
  SteadyExtraction opt;
  opt.max_per_class = 0;
  const auto rep = extract_steady_samples({t}, opt);
  ASSERT_GT(rep.dataset.size(), 0u);
  for (int l : rep.dataset.labels) EXPECT_EQ(l, 0);
}

TEST(SteadyExtraction, ShortSegmentWarns) {
  GenParams p;
  p.exit_samples = 450;
  p.seed = 1;
  SteadyExtraction opt;
  opt.margin = 200;
  const auto rep = extract_steady_samples({generate_trial(p)}, opt);
  EXPECT_FALSE(rep.warnings.empty());
}

TEST(SequenceLabel, RuleExamples) {
  GenParams p;
  p.seed = 9;
  const TrialRecording t = generate_trial(p);
  const std::size_t t1 = t.transitions[0];
  EXPECT_EQ(sequence_label(t, t1 + 10, 400), event_class_into(1));
  EXPECT_EQ(sequence_label(t, t1 + 399, 400), event_class_into(1));
  EXPECT_EQ(sequence_label(t, t1 + 400, 400), 1);
  EXPECT_EQ(sequence_label(t, t1 - 1, 400), 0);
  EXPECT_EQ(sequence_label(t, t.transitions[1] + 1000, 400), 2);
}

TEST(SequenceExtraction, LabelsMatchIndependentRule) {
  std::vector<TrialRecording> trials;
  for (std::uint64_t s = 0; s < 30; ++s) {
    GenParams p;
    p.seed = 500 + s;
    trials.push_back(generate_trial(p));
  }
  const LabeledDataset ds = extract_sequence_samples(trials, SequenceExtraction{});
  ASSERT_EQ(ds.notes.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& t = trials[parse_trial(ds.notes[i])];
    const std::size_t end = parse_end(ds.notes[i]);
    ASSERT_EQ(ds.labels[i], expected_label(t, end, 400));
    const auto rec = ds.record(i);
    ASSERT_TRUE(std::equal(rec.begin(), rec.end(), t.samples.begin() + static_cast<long>(end + 1 - 3200)));
  }
  const auto h = ds.histogram();
  ASSERT_EQ(h.size(), 7u);
  for (int c = 4; c < 7; ++c) {
    EXPECT_GE(static_cast<double>(h[static_cast<std::size_t>(c)]), 0.05 * static_cast<double>(ds.size()));
  }
  for (auto c : h) EXPECT_GT(c, 0u);
}

// A state-class span is near a boundary when shifting its end by one window
// either way changes the label.
bool near_boundary(const TrialRecording& t, std::size_t end, std::size_t w) {
  const int here = expected_label(t, end, w);
  if (end + w < t.samples.size() && expected_label(t, end + w, w) != here) return true;
  return end >= w + 3199 && expected_label(t, end - w, w) != here;
}

TEST(SequenceExtraction, BoundaryFractionSelectsHardNegatives) {
  std::vector<TrialRecording> trials;
  for (std::uint64_t s = 0; s < 6; ++s) {
    GenParams p;
    p.seed = 800 + s;
    trials.push_back(generate_trial(p));
  }
  for (double fraction : {0.0, 0.5, 1.0}) {
    SequenceExtraction opts;
    opts.prior = ClassPrior::Balanced;
    opts.boundary_fraction = fraction;
    const LabeledDataset ds = extract_sequence_samples(trials, opts);
    std::array<std::size_t, 4> near{}, total{};
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const int c = ds.labels[i];
      if (c >= 4) continue;
      const auto& t = trials[parse_trial(ds.notes[i])];
      ++total[static_cast<std::size_t>(c)];
      if (near_boundary(t, parse_end(ds.notes[i]), 400)) ++near[static_cast<std::size_t>(c)];
    }
    for (std::size_t c = 0; c < 4; ++c) {
      ASSERT_EQ(total[c], 6u * opts.per_class_per_trial) << "class " << c;
      const double share = static_cast<double>(near[c]) / static_cast<double>(total[c]);
      if (fraction == 1.0) EXPECT_EQ(share, 1.0) << "class " << c;
      if (fraction == 0.5) EXPECT_GE(share, 0.5) << "class " << c;
    }
    // Uniform draws over Const leave most spans far from both of its edges.
    if (fraction == 0.0) {
      EXPECT_LT(static_cast<double>(near[2]) / static_cast<double>(total[2]), 0.5);
    }
  }
}

TEST(SequenceExtraction, NaturalPriorFollowsEndCounts) {
  std::vector<TrialRecording> trials;
  for (std::uint64_t s = 0; s < 30; ++s) {
    GenParams p;
    p.seed = 900 + s;
    trials.push_back(generate_trial(p));
  }
  SequenceExtraction opts;
  opts.prior = ClassPrior::Natural;
  const LabeledDataset ds = extract_sequence_samples(trials, opts);
  EXPECT_EQ(ds.size(), 30u * 7u * opts.per_class_per_trial);

  // Per trial, each class gets its share of all possible span ends, rounded.
  std::vector<std::array<std::size_t, 7>> got(trials.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ++got[parse_trial(ds.notes[i])][static_cast<std::size_t>(ds.labels[i])];
  }
  for (std::size_t t = 0; t < trials.size(); ++t) {
    std::array<double, 7> ends{};
    for (std::size_t e = 3199; e < trials[t].samples.size(); ++e) {
      ends[static_cast<std::size_t>(expected_label(trials[t], e, 400))] += 1.0;
    }
    const double all = static_cast<double>(trials[t].samples.size() - 3199);
    for (std::size_t c = 0; c < 7; ++c) {
      const double want = 7.0 * static_cast<double>(opts.per_class_per_trial) * ends[c] / all;
      EXPECT_NEAR(static_cast<double>(got[t][c]), want, 1.0) << "trial " << t << " class " << c;
    }
  }
  const auto h = ds.histogram();
  for (std::size_t c = 0; c < 7; ++c) EXPECT_GT(h[c], 0u);
  for (std::size_t c = 4; c < 7; ++c) {
    EXPECT_GE(static_cast<double>(h[c]), 0.05 * static_cast<double>(ds.size()));
  }
}

TEST(SequenceExtraction, BoundaryFractionOutOfRange) {
  SequenceExtraction opts;
  opts.boundary_fraction = 1.5;
  EXPECT_THROW(extract_sequence_samples({generate_trial(GenParams{})}, opts), ContractError);
}

TEST(SequenceExtraction, TrialShorterThanSpanIsAnError) {
  TrialRecording t;
  t.samples.assign(1000, 0.0);
  t.labels.assign(1000, 0);
  t.transitions = {10, 20, 30};
  EXPECT_THROW(extract_sequence_samples({t}, SequenceExtraction{}), ContractError);
}
