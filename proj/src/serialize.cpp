#include "mpic/serialize.hpp"

#include <bit>
#include <cstring>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace mpic {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

void put_array(std::ostream& os, const std::vector<double>& values) {
  put_u64(os, values.size());
  for (double v : values) put_u64(os, std::bit_cast<std::uint64_t>(v));
}

std::uint64_t get_bytes(std::istream& is, int n, const char* what) {
  unsigned char b[8] = {};
  is.read(reinterpret_cast<char*>(b), n);
  if (is.gcount() != n) throw FormatError(std::string("model file truncated reading ") + what);
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  return static_cast<std::uint32_t>(get_bytes(is, 4, what));
}

std::vector<double> get_array(std::istream& is, std::size_t expected) {
  const std::uint64_t n = get_bytes(is, 8, "array length");
  if (n != expected) {
    throw FormatError("model file array holds " + std::to_string(n) + " values, expected " +
                      std::to_string(expected));
  }
  std::vector<double> out(n);
  for (auto& v : out) v = std::bit_cast<double>(get_bytes(is, 8, "array value"));
  return out;
}

}  // namespace

void write_header(std::ostream& os, std::uint32_t record_count) {
  os.write(kModelMagic, 4);
  put_u32(os, kModelFormatVersion);
  put_u32(os, record_count);
}

std::uint32_t read_header(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kModelMagic, 4) != 0) {
    throw FormatError("not a model file (bad magic)");
  }
  const std::uint32_t version = get_u32(is, "version");
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }
  return get_u32(is, "layer count");
}

void write_layer_record(std::ostream& os, const Layer& l) {
  put_u32(os, static_cast<std::uint32_t>(l.kind));
  std::vector<std::uint32_t> extents;
  std::vector<const std::vector<double>*> arrays;
  switch (l.kind) {
    case LayerKind::Conv1D:
      extents = {static_cast<std::uint32_t>(l.in), static_cast<std::uint32_t>(l.out),
                 static_cast<std::uint32_t>(l.width)};
      arrays = {&l.weight};
      break;
    case LayerKind::MaxPool1D:
      extents = {static_cast<std::uint32_t>(l.width)};
      break;
    case LayerKind::ReLU:
      break;
    case LayerKind::BatchNorm1D:
      extents = {static_cast<std::uint32_t>(l.in)};
      arrays = {&l.weight, &l.bias, &l.running_mean, &l.running_var};
      break;
    case LayerKind::Linear:
      extents = {static_cast<std::uint32_t>(l.in), static_cast<std::uint32_t>(l.out)};
      arrays = {&l.weight, &l.bias};
      break;
  }
  put_u32(os, static_cast<std::uint32_t>(extents.size()));
  for (auto e : extents) put_u32(os, e);
  put_u32(os, static_cast<std::uint32_t>(arrays.size()));
  for (const auto* a : arrays) put_array(os, *a);
}

void write_boundary_record(std::ostream& os, std::vector<std::uint32_t> flags) {
  put_u32(os, kStageBoundaryTag);
  put_u32(os, static_cast<std::uint32_t>(flags.size()));
  for (auto f : flags) put_u32(os, f);
  put_u32(os, 0);
}

bool read_layer_record(std::istream& is, Layer& layer,
                       std::vector<std::uint32_t>& boundary_flags) {
  const std::uint32_t tag = get_u32(is, "kind tag");
  const std::uint32_t n_ext = get_u32(is, "extent count");
  if (n_ext > 8) throw FormatError("implausible extent count " + std::to_string(n_ext));
  std::vector<std::uint32_t> ext(n_ext);
  for (auto& e : ext) e = get_u32(is, "extent");
  const std::uint32_t n_arrays = get_u32(is, "array count");

  auto expect = [&](std::size_t extents, std::size_t arrays) {
    if (ext.size() != extents || n_arrays != arrays) {
      throw FormatError("malformed record for kind tag " + std::to_string(tag));
    }
  };

  switch (tag) {
    case kStageBoundaryTag:
      expect(ext.size(), 0);
      boundary_flags = ext;
      return false;
    case static_cast<std::uint32_t>(LayerKind::Conv1D):
      expect(3, 1);
      if (ext[2] != kConvWidth) throw FormatError("unsupported conv width");
      layer = make_conv1d(ext[0], ext[1]);
      layer.weight = get_array(is, layer.weight.size());
      return true;
    case static_cast<std::uint32_t>(LayerKind::MaxPool1D):
      expect(1, 0);
      if (ext[0] != kPoolWidth) throw FormatError("unsupported pool width");
      layer = make_maxpool1d();
      return true;
    case static_cast<std::uint32_t>(LayerKind::ReLU):
      expect(0, 0);
      layer = make_relu();
      return true;
    case static_cast<std::uint32_t>(LayerKind::BatchNorm1D):
      expect(1, 4);
      layer = make_batchnorm1d(ext[0]);
      layer.weight = get_array(is, ext[0]);
      layer.bias = get_array(is, ext[0]);
      layer.running_mean = get_array(is, ext[0]);
      layer.running_var = get_array(is, ext[0]);
      return true;
    case static_cast<std::uint32_t>(LayerKind::Linear):
      expect(2, 2);
      layer = make_linear(ext[0], ext[1]);
      layer.weight = get_array(is, layer.weight.size());
      layer.bias = get_array(is, layer.bias.size());
      return true;
    default:
      throw FormatError("unknown layer kind tag " + std::to_string(tag));
  }
}

void write_network(std::ostream& os, const Network& net) {
  write_header(os, static_cast<std::uint32_t>(net.layers.size()));
  for (const Layer& l : net.layers) write_layer_record(os, l);
}

Network read_network(std::istream& is) {
  const std::uint32_t count = read_header(is);
  Network net;
  std::vector<std::uint32_t> flags;
  for (std::uint32_t i = 0; i < count; ++i) {
    Layer l;
    if (!read_layer_record(is, l, flags)) {
      throw FormatError("stage boundary inside a single network file");
    }
    net.layers.push_back(std::move(l));
  }
  return net;
}

std::vector<std::uint8_t> to_bytes(const Network& net) {
  std::ostringstream os(std::ios::binary);
  write_network(os, net);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace mpic
