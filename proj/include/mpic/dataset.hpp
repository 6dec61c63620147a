#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mpic {

/// Label used for records awaiting review (exported incidents).
inline constexpr int kUnlabeled = -1;

/// Fixed-length labelled samples, stored flat: record i occupies
/// values[i*span, (i+1)*span).
struct LabeledDataset {
  std::size_t span = 0;
  std::size_t classes = 0;
  std::vector<double> values;
  std::vector<int> labels;
  std::vector<std::string> notes;  // optional per-record annotation, same length or empty

  std::size_t size() const { return labels.size(); }
  std::span<const double> record(std::size_t i) const {
    return {values.data() + i * span, span};
  }
  void add(std::span<const double> samples, int label, std::string note = {});
  /// Per-class record counts (unlabeled records excluded).
  std::vector<std::size_t> histogram() const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;

  bool operator==(const LabeledDataset&) const = default;
};

/// Text format: `# mpic-dataset span=<S> classes=<Q>` header, then one
/// `label,v0,...,v<S-1>` row per record. A `# note: <text>` line annotates the
/// following record.
void write_dataset(std::ostream& os, const LabeledDataset& ds);
LabeledDataset read_dataset(std::istream& is, bool allow_unlabeled = false);
void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::filesystem::path& path, bool allow_unlabeled = false);

}  // namespace mpic
