#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "mpic/stream.hpp"
#include "support.hpp"

using namespace mpic;

namespace {

WindowingConfig small_config(std::size_t w, std::size_t n, std::size_t stride) {
  WindowingConfig c;
  c.window = w;
  c.overlap = 0;
  c.sequence = n;
  c.stride = stride;
  return c;
}

std::vector<double> ramp(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i) * 0.5 - 3.0;
  return v;
}

std::vector<WindowSequence> push_in_chunks(const WindowingConfig& cfg, const std::vector<double>& s,
                                           std::mt19937_64& rng, std::size_t max_chunk) {
  Partitioner p(cfg);
  std::vector<WindowSequence> out;
  std::uniform_int_distribution<std::size_t> chunk(1, max_chunk);
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t c = std::min(chunk(rng), s.size() - i);
    auto got = p.push(std::span<const double>(s).subspan(i, c));
    out.insert(out.end(), got.begin(), got.end());
    i += c;
  }
  return out;
}

}  // namespace

TEST(Windowing, DefaultsAndValidation) {
  const WindowingConfig c;
  EXPECT_EQ(c.window, 400u);
  EXPECT_EQ(c.overlap, 25u);
  EXPECT_EQ(c.sequence, 8u);
  EXPECT_EQ(c.stride, 375u);
  EXPECT_EQ(c.span(), 3200u);
  EXPECT_NO_THROW(c.validate());
  WindowingConfig bad = c;
  bad.overlap = 400;
  EXPECT_THROW(bad.validate(), ContractError);
  bad = c;
  bad.stride = 0;
  EXPECT_THROW(bad.validate(), ContractError);
  bad = c;
  bad.sample_rate = 0.0;
  EXPECT_THROW(bad.validate(), ContractError);
}

TEST(Partitioner, NoEmissionBeforeFullBuffer) {
  Partitioner p(WindowingConfig{});
  EXPECT_TRUE(p.push(std::vector<double>(3199, 1.0)).empty());
}

TEST(Partitioner, FirstFullBufferEmitsOnce) {
  Partitioner p(WindowingConfig{});
  const auto out = p.push(std::vector<double>(3200, 1.0));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].end_index, 3199u);
  EXPECT_DOUBLE_EQ(out[0].end_time, 3199.0 / 250.0);
  EXPECT_EQ(out[0].data.shape, (std::vector<std::size_t>{8, 1, 400}));
}

TEST(Partitioner, NineThousandSamplesAtDefaultStride) {
  Partitioner p(WindowingConfig{});
  EXPECT_EQ(p.push(std::vector<double>(9000, 0.0)).size(), 16u);
  EXPECT_EQ(window_count(9000, WindowingConfig{}), 16u);
}

TEST(Partitioner, WindowsAreContiguousSlicesOfTheStream) {
  const WindowingConfig cfg = small_config(4, 3, 5);
  const auto s = ramp(40);
  Partitioner p(cfg);
  const auto out = p.push(s);
  ASSERT_FALSE(out.empty());
  for (const auto& seq : out) {
    const std::size_t first = seq.end_index + 1 - cfg.span();
    for (std::size_t k = 0; k < cfg.span(); ++k) EXPECT_EQ(seq.data.data[k], s[first + k]);
  }
}

TEST(Partitioner, EmitsAsSoonAsLastSampleArrives) {
  const WindowingConfig cfg = small_config(3, 2, 4);
  Partitioner p(cfg);
  const auto s = ramp(30);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto out = p.push(std::span<const double>(s).subspan(i, 1));
    for (const auto& seq : out) EXPECT_EQ(seq.end_index, i);
  }
}

TEST(Partitioner, ChunkingDoesNotChangeEmissions) {
  std::mt19937_64 rng(21);
  const WindowingConfig cfg = small_config(5, 3, 2);
  const auto s = ramp(200);
  Partitioner whole(cfg);
  const auto reference = whole.push(s);
  for (int trial = 0; trial < 20; ++trial) {
    EXPECT_EQ(push_in_chunks(cfg, s, rng, 17), reference);
  }
}

TEST(Partitioner, ResetStartsOver) {
  const WindowingConfig cfg = small_config(2, 2, 1);
  Partitioner p(cfg);
  p.push(ramp(10));
  p.reset();
  EXPECT_EQ(p.consumed(), 0u);
  EXPECT_TRUE(p.push(ramp(3)).empty());
}

TEST(WindowCount, ClosedFormMatchesCounter) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> w(1, 20), n(1, 6), h(1, 30), len(0, 600);
  for (int i = 0; i < 300; ++i) {
    const WindowingConfig cfg = small_config(w(rng), n(rng), h(rng));
    const std::size_t L = len(rng);
    EXPECT_EQ(window_count(L, cfg), mpic::testing::reference_emissions(L, cfg.span(), cfg.stride));
  }
  EXPECT_EQ(window_count(0, WindowingConfig{}), 0u);
  EXPECT_EQ(window_count(3200, WindowingConfig{}), 1u);
}

TEST(Denoise, NoneIsIdentity) {
  const auto s = ramp(11);
  EXPECT_EQ(denoise(s, {}), s);
}

TEST(Denoise, MovingAverageReplicatesEdges) {
  const std::vector<double> s{0, 3, 0};
  const auto out = denoise(s, {FilterKind::MovingAverage, 3});
  ASSERT_EQ(out.size(), 3u);
  for (double v : out) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Denoise, MedianRemovesImpulse) {
  const std::vector<double> s{0, 9, 0, 0};
  const auto out = denoise(s, {FilterKind::Median, 3});
  EXPECT_LT(*std::max_element(out.begin(), out.end()), 9.0);
}

TEST(Denoise, RejectsWidthBeyondLength) {
  const std::vector<double> s{1, 2};
  EXPECT_THROW(denoise(s, {FilterKind::MovingAverage, 3}), ContractError);
}

TEST(Denoise, RejectsEvenMedianWidth) {
  const std::vector<double> s{1, 2, 3, 4};
  EXPECT_THROW(denoise(s, {FilterKind::Median, 2}), ContractError);
}

TEST(FilterKind, NamesRoundTrip) {
  for (auto k : {FilterKind::None, FilterKind::MovingAverage, FilterKind::Median}) {
    EXPECT_EQ(parse_filter_kind(filter_kind_name(k)), k);
  }
  EXPECT_THROW(parse_filter_kind("kalman"), ContractError);
}

TEST(SignalCsv, RoundTripIsBitExact) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd(0.5, 0.3);
  SignalRecord rec;
  rec.sample_rate = 250.0;
  for (int i = 0; i < 500; ++i) {
    rec.samples.push_back(nd(rng));
    rec.labels.push_back(i / 125);
  }
  rec.comments = {"seed=3"};
  std::stringstream ss;
  write_signal_csv(ss, rec);
  EXPECT_EQ(read_signal_csv(ss), rec);
}

TEST(SignalCsv, UnlabeledRecording) {
  std::istringstream is("# fs=100\n1.5\n-2\n3e-3\n");
  const SignalRecord r = read_signal_csv(is);
  EXPECT_DOUBLE_EQ(r.sample_rate, 100.0);
  EXPECT_EQ(r.samples, (std::vector<double>{1.5, -2.0, 3e-3}));
  EXPECT_TRUE(r.labels.empty());
}

TEST(SignalCsv, MalformedLineReportsLineNumber) {
  std::istringstream is("# fs=250\n1.0\n2.0\nabc\n");
  try {
    read_signal_csv(is);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(SignalCsv, MissingHeaderIsRejected) {
  std::istringstream is("1.0\n2.0\n");
  EXPECT_THROW(read_signal_csv(is), ParseError);
}

TEST(SignalCsv, MixedLabelColumnIsRejected) {
  std::istringstream is("# fs=250\n1.0,0\n2.0\n");
  EXPECT_THROW(read_signal_csv(is), ParseError);
}
