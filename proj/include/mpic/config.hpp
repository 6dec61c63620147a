#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpic/evalsim.hpp"
#include "mpic/model.hpp"
#include "mpic/stream.hpp"
#include "mpic/synthgen.hpp"

namespace mpic {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run needs. Serialized as nested JSON sections whose keys
/// mirror the field names below.
struct RunConfig {
  WindowingConfig windowing;
  TrainingConfig training;
  GenParams gen;
  SteadyExtraction steady;
  SequenceExtraction sequences;
  EvalConfig eval;

  /// Empty means the built-in milling machine.
  std::string fsm_path;
  /// Trials generated by `gen`; the last `test_trials` are held out.
  std::size_t trials = 30;
  std::size_t test_trials = 6;
  /// Held-out trials replayed by `simulate` and `compare`.
  std::size_t simulation_trials = 5;
  /// Acceptance thresholds checked by `eval` and `simulate`.
  double min_macro_f1 = 0.90;
  double min_class_f1 = 0.80;
  double max_mean_delay = 0.5;

  std::string data_dir = "data";
  std::string out_dir = "runs";

  /// Seeds every stochastic component from one value.
  void reseed(std::uint64_t seed);
  /// Throws ConfigError.
  void validate() const;
  FsmDefinition fsm() const;
};

nlohmann::json to_json(const RunConfig& cfg);

/// Reads a (possibly partial) document over the defaults. Unknown keys and
/// wrongly typed values are ConfigErrors.
RunConfig run_config_from_json(const nlohmann::json& doc);

/// Applies `a.b.c=value` to the document; the value is parsed as JSON when
/// possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// defaults <- file <- overrides.
RunConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

}  // namespace mpic
