#include "mpic/stream.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace mpic {

void WindowingConfig::validate() const {
  if (channels != 1) throw ContractError("windowing: only k = 1 is supported");
  if (window < 1) throw ContractError("windowing: window length must be >= 1");
  if (overlap >= window) throw ContractError("windowing: overlap must be < window length");
  if (sequence < 1) throw ContractError("windowing: sequence length must be >= 1");
  if (stride < 1) throw ContractError("windowing: stride must be >= 1");
  if (!(sample_rate > 0.0)) throw ContractError("windowing: sample rate must be > 0");
}

WindowingConfig WindowingConfig::with_default_stride(std::size_t window, std::size_t overlap,
                                                     std::size_t sequence,
                                                     double sample_rate) {
  WindowingConfig c;
  c.window = window;
  c.overlap = overlap;
  c.sequence = sequence;
  c.sample_rate = sample_rate;
  c.stride = window > overlap ? window - overlap : 1;
  c.validate();
  return c;
}

Partitioner::Partitioner(WindowingConfig config) : config_(config) {
  config_.validate();
  ring_.assign(config_.span(), 0.0);
}

void Partitioner::reset() {
  std::fill(ring_.begin(), ring_.end(), 0.0);
  head_ = 0;
  consumed_ = 0;
}

WindowSequence Partitioner::snapshot() const {
  const std::size_t span = ring_.size();
  WindowSequence seq;
  seq.data = Tensor({config_.sequence, config_.channels, config_.window});
  // head_ points at the oldest sample once the buffer is full.
  for (std::size_t i = 0; i < span; ++i) seq.data.data[i] = ring_[(head_ + i) % span];
  seq.end_index = consumed_ - 1;
  seq.end_time = static_cast<double>(seq.end_index) / config_.sample_rate;
  return seq;
}

std::vector<WindowSequence> Partitioner::push(std::span<const double> samples) {
  std::vector<WindowSequence> out;
  const std::size_t span = ring_.size();
  for (double v : samples) {
    ring_[head_] = v;
    head_ = (head_ + 1) % span;
    ++consumed_;
    if (consumed_ >= span && (consumed_ - span) % config_.stride == 0) {
      out.push_back(snapshot());
    }
  }
  return out;
}

std::uint64_t window_count(std::uint64_t length, const WindowingConfig& config) {
  const std::uint64_t span = config.span();
  if (length < span) return 0;
  return 1 + (length - span) / config.stride;
}

// ---------------------------------------------------------------- denoise

FilterKind parse_filter_kind(const std::string& name) {
  if (name == "none") return FilterKind::None;
  if (name == "moving-average") return FilterKind::MovingAverage;
  if (name == "median") return FilterKind::Median;
  throw ContractError("unknown filter kind '" + name + "'");
}

std::string filter_kind_name(FilterKind kind) {
  switch (kind) {
    case FilterKind::None: return "none";
    case FilterKind::MovingAverage: return "moving-average";
    case FilterKind::Median: return "median";
  }
  return "none";
}

std::vector<double> denoise(std::span<const double> signal, const FilterSpec& filter) {
  if (filter.kind == FilterKind::None) return {signal.begin(), signal.end()};
  if (filter.width < 1) throw ContractError("denoise: width must be >= 1");
  if (filter.width % 2 == 0) throw ContractError("denoise: width must be odd");
  if (filter.width > signal.size()) {
    throw ContractError("denoise: width " + std::to_string(filter.width) +
                        " exceeds signal length " + std::to_string(signal.size()));
  }
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(signal.size());
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(filter.width / 2);
  auto sample = [&](std::ptrdiff_t i) { return signal[std::clamp<std::ptrdiff_t>(i, 0, n - 1)]; };

  std::vector<double> out(signal.size());
  std::vector<double> buf(filter.width);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    for (std::ptrdiff_t a = -half; a <= half; ++a) buf[a + half] = sample(i + a);
    if (filter.kind == FilterKind::MovingAverage) {
      double s = 0.0;
      for (double v : buf) s += v;
      out[i] = s / static_cast<double>(filter.width);
    } else {
      std::nth_element(buf.begin(), buf.begin() + half, buf.end());
      out[i] = buf[half];
    }
  }
  return out;
}

// ---------------------------------------------------------------- signal CSV

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view text, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError("malformed number '" + std::string(text) + "'", line);
  }
  return v;
}

int parse_int(std::string_view text, std::size_t line) {
  int v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError("malformed label '" + std::string(text) + "'", line);
  }
  return v;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

void write_signal_csv(std::ostream& os, const SignalRecord& rec) {
  if (!rec.labels.empty() && rec.labels.size() != rec.samples.size()) {
    throw ContractError("signal csv: label column length differs from sample count");
  }
  os << "# fs=" << format_double(rec.sample_rate) << '\n';
  for (const auto& c : rec.comments) os << "# " << c << '\n';
  for (std::size_t i = 0; i < rec.samples.size(); ++i) {
    os << format_double(rec.samples[i]);
    if (!rec.labels.empty()) os << ',' << rec.labels[i];
    os << '\n';
  }
}

SignalRecord read_signal_csv(std::istream& is) {
  SignalRecord rec;
  std::string raw;
  std::size_t line = 0;
  if (!std::getline(is, raw)) throw ParseError("empty file, expected '# fs=<Hz>' header", 1);
  ++line;
  std::string_view header = trim_cr(raw);
  constexpr std::string_view prefix = "# fs=";
  if (header.substr(0, prefix.size()) != prefix) {
    throw ParseError("expected '# fs=<Hz>' header", line);
  }
  rec.sample_rate = parse_double(header.substr(prefix.size()), line);
  if (!(rec.sample_rate > 0.0)) throw ParseError("sample rate must be > 0", line);

  bool labelled = false;
  bool first_row = true;
  while (std::getline(is, raw)) {
    ++line;
    std::string_view s = trim_cr(raw);
    if (s.empty()) throw ParseError("empty line", line);
    if (s.front() == '#') {
      if (!first_row) throw ParseError("comment line after data rows", line);
      std::string_view c = s.substr(1);
      if (!c.empty() && c.front() == ' ') c.remove_prefix(1);
      rec.comments.emplace_back(c);
      continue;
    }
    const auto comma = s.find(',');
    if (first_row) labelled = comma != std::string_view::npos;
    first_row = false;
    if ((comma != std::string_view::npos) != labelled) {
      throw ParseError("column count differs from first data row", line);
    }
    if (labelled) {
      if (s.find(',', comma + 1) != std::string_view::npos) {
        throw ParseError("more than two columns", line);
      }
      rec.samples.push_back(parse_double(s.substr(0, comma), line));
      rec.labels.push_back(parse_int(s.substr(comma + 1), line));
    } else {
      rec.samples.push_back(parse_double(s, line));
    }
  }
  return rec;
}

void save_signal_csv(const std::filesystem::path& path, const SignalRecord& rec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_signal_csv(os, rec);
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

SignalRecord load_signal_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return read_signal_csv(is);
  } catch (const ParseError& e) {
    throw ParseError(e.detail(), e.line(), path.string());
  }
}

}  // namespace mpic
