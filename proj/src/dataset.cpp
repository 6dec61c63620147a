#include "mpic/dataset.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "mpic/stream.hpp"

namespace mpic {

void LabeledDataset::add(std::span<const double> samples, int label, std::string note) {
  if (samples.size() != span) {
    throw ContractError("dataset: record has " + std::to_string(samples.size()) +
                        " samples, span is " + std::to_string(span));
  }
  if (label != kUnlabeled && (label < 0 || static_cast<std::size_t>(label) >= classes)) {
    throw ContractError("dataset: label " + std::to_string(label) + " outside [0, " +
                        std::to_string(classes) + ")");
  }
  if (notes.size() != labels.size()) notes.resize(labels.size());
  values.insert(values.end(), samples.begin(), samples.end());
  labels.push_back(label);
  notes.push_back(std::move(note));
}

std::vector<std::size_t> LabeledDataset::histogram() const {
  std::vector<std::size_t> h(classes, 0);
  for (int l : labels) {
    if (l >= 0) ++h[static_cast<std::size_t>(l)];
  }
  return h;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.span = span;
  out.classes = classes;
  out.values.reserve(indices.size() * span);
  for (std::size_t i : indices) {
    auto r = record(i);
    out.values.insert(out.values.end(), r.begin(), r.end());
    out.labels.push_back(labels.at(i));
    out.notes.push_back(i < notes.size() ? notes[i] : std::string{});
  }
  return out;
}

void write_dataset(std::ostream& os, const LabeledDataset& ds) {
  os << "# mpic-dataset span=" << ds.span << " classes=" << ds.classes << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (i < ds.notes.size() && !ds.notes[i].empty()) os << "# note: " << ds.notes[i] << '\n';
    os << ds.labels[i];
    for (double v : ds.record(i)) os << ',' << format_double(v);
    os << '\n';
  }
}

namespace {

template <class T>
T parse_field(std::string_view text, std::size_t line, const char* what) {
  T v{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError(std::string("malformed ") + what + " '" + std::string(text) + "'", line);
  }
  return v;
}

std::size_t header_value(std::string_view header, std::string_view key, std::size_t line) {
  const auto pos = header.find(key);
  if (pos == std::string_view::npos) {
    throw ParseError("dataset header lacks '" + std::string(key) + "'", line);
  }
  std::string_view rest = header.substr(pos + key.size());
  rest = rest.substr(0, rest.find(' '));
  return parse_field<std::size_t>(rest, line, "header value");
}

}  // namespace

LabeledDataset read_dataset(std::istream& is, bool allow_unlabeled) {
  LabeledDataset ds;
  std::string raw;
  std::size_t line = 1;
  if (!std::getline(is, raw)) throw ParseError("empty dataset file", line);
  std::string_view header = raw;
  if (header.rfind("# mpic-dataset ", 0) != 0) {
    throw ParseError("expected '# mpic-dataset span=<S> classes=<Q>' header", line);
  }
  ds.span = header_value(header, "span=", line);
  ds.classes = header_value(header, "classes=", line);
  if (ds.span == 0 || ds.classes == 0) throw ParseError("span and classes must be > 0", line);

  std::string pending_note;
  std::vector<double> row;
  row.reserve(ds.span);
  while (std::getline(is, raw)) {
    ++line;
    std::string_view s = raw;
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    if (s.empty()) throw ParseError("empty line", line);
    if (s.front() == '#') {
      constexpr std::string_view note = "# note: ";
      if (s.rfind(note, 0) == 0) pending_note = std::string(s.substr(note.size()));
      continue;
    }
    std::size_t comma = s.find(',');
    if (comma == std::string_view::npos) throw ParseError("record has no samples", line);
    const int label = parse_field<int>(s.substr(0, comma), line, "label");
    if (label == kUnlabeled && !allow_unlabeled) {
      throw ParseError("unlabeled record; assign a class index before training", line);
    }
    if (label != kUnlabeled && (label < 0 || static_cast<std::size_t>(label) >= ds.classes)) {
      throw ParseError("label " + std::to_string(label) + " out of range", line);
    }
    row.clear();
    std::string_view rest = s.substr(comma + 1);
    while (true) {
      const auto next = rest.find(',');
      row.push_back(parse_field<double>(rest.substr(0, next), line, "sample"));
      if (next == std::string_view::npos) break;
      rest = rest.substr(next + 1);
    }
    if (row.size() != ds.span) {
      throw ParseError("record has " + std::to_string(row.size()) + " samples, expected " +
                           std::to_string(ds.span),
                       line);
    }
    ds.add(row, label, std::move(pending_note));
    pending_note.clear();
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_dataset(os, ds);
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

LabeledDataset load_dataset(const std::filesystem::path& path, bool allow_unlabeled) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return read_dataset(is, allow_unlabeled);
  } catch (const ParseError& e) {
    throw ParseError(e.detail(), e.line(), path.string());
  }
}

}  // namespace mpic
