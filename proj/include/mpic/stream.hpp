#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpic/tensor.hpp"

namespace mpic {

/// Sliding-window parameters. Defaults follow the milling deployment:
/// 400-sample windows overlapping by 25, eight windows per sequence, 250 Hz.
struct WindowingConfig {
  std::size_t channels = 1;       // k
  std::size_t window = 400;       // w
  std::size_t overlap = 25;       // lambda
  std::size_t sequence = 8;       // n
  std::size_t stride = 375;       // H, decision stride in samples
  double sample_rate = 250.0;     // fs

  std::size_t span() const { return sequence * window; }
  /// Throws ContractError when an invariant does not hold.
  void validate() const;

  /// Config whose stride is w - lambda.
  static WindowingConfig with_default_stride(std::size_t window, std::size_t overlap,
                                             std::size_t sequence, double sample_rate);
};

/// n contiguous windows of k x w samples ending at `end_index`.
struct WindowSequence {
  Tensor data;                  // [n x k x w]
  std::uint64_t end_index = 0;  // absolute index of the last sample
  double end_time = 0.0;        // end_index / fs, seconds

  bool operator==(const WindowSequence&) const = default;
};

/// Rolling n*w buffer over a single-channel stream. Emits a sequence when the
/// buffer first fills and then every `stride` samples.
class Partitioner {
 public:
  explicit Partitioner(WindowingConfig config);

  /// Consumes samples in order; sequences are emitted as soon as their last
  /// sample arrives.
  std::vector<WindowSequence> push(std::span<const double> samples);

  std::uint64_t consumed() const { return consumed_; }
  const WindowingConfig& config() const { return config_; }
  void reset();

 private:
  WindowSequence snapshot() const;

  WindowingConfig config_;
  std::vector<double> ring_;
  std::size_t head_ = 0;  // next write position
  std::uint64_t consumed_ = 0;
};

/// Number of sequences a Partitioner emits over a stream of `length` samples.
std::uint64_t window_count(std::uint64_t length, const WindowingConfig& config);

// ---------------------------------------------------------------- denoise

enum class FilterKind { None, MovingAverage, Median };

struct FilterSpec {
  FilterKind kind = FilterKind::None;
  std::size_t width = 1;
};

FilterKind parse_filter_kind(const std::string& name);
std::string filter_kind_name(FilterKind kind);

/// Centered filter with edge replication; output length equals input length.
std::vector<double> denoise(std::span<const double> signal, const FilterSpec& filter);

// ---------------------------------------------------------------- signal CSV

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line, const std::string& source = {})
      : std::runtime_error((source.empty() ? "" : source + ":") + "line " +
                           std::to_string(line) + ": " + what),
        detail_(what),
        line_(line) {}
  std::size_t line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string detail_;
  std::size_t line_;
};

/// Single-channel recording, optionally with a ground-truth state per sample.
struct SignalRecord {
  double sample_rate = 0.0;
  std::vector<double> samples;
  std::vector<int> labels;  // empty or same length as samples
  std::vector<std::string> comments;  // extra '#' lines after the header

  bool operator==(const SignalRecord&) const = default;
};

/// `# fs=<Hz>` header, optional further `#` lines, then `value[,label]` rows.
void write_signal_csv(std::ostream& os, const SignalRecord& rec);
SignalRecord read_signal_csv(std::istream& is);
void save_signal_csv(const std::filesystem::path& path, const SignalRecord& rec);
SignalRecord load_signal_csv(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace mpic
