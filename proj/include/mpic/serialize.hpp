#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpic/network.hpp"

namespace mpic {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kModelMagic[4] = {'S', 'W', 'N', 'N'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Kind tag that separates the two stages inside a model container.
inline constexpr std::uint32_t kStageBoundaryTag = 0xFF;

/// Header, then one record per layer. See docs/model_format.md.
void write_network(std::ostream& os, const Network& net);
Network read_network(std::istream& is);

// Record-level helpers, shared with the encoder-classifier container.
void write_header(std::ostream& os, std::uint32_t record_count);
std::uint32_t read_header(std::istream& is);
void write_layer_record(std::ostream& os, const Layer& layer);
/// Reads one record. Returns false and sets `boundary_flags` for a stage boundary.
bool read_layer_record(std::istream& is, Layer& layer, std::vector<std::uint32_t>& boundary_flags);
void write_boundary_record(std::ostream& os, std::vector<std::uint32_t> flags);

std::vector<std::uint8_t> to_bytes(const Network& net);

/// 64-bit FNV-1a over a byte buffer, printed as 16 hex digits by hash_hex.
std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes);
std::string hash_hex(std::uint64_t h);

}  // namespace mpic
