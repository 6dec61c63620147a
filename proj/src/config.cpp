#include "mpic/config.hpp"

#include <fstream>
#include <sstream>

namespace mpic {

NLOHMANN_JSON_SERIALIZE_ENUM(FilterKind, {{FilterKind::None, "none"},
                                          {FilterKind::MovingAverage, "moving_average"},
                                          {FilterKind::Median, "median"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ClassPrior, {{ClassPrior::Balanced, "balanced"},
                                          {ClassPrior::Natural, "natural"}})
NLOHMANN_JSON_SERIALIZE_ENUM(MatchPolicy, {{MatchPolicy::First, "first"},
                                           {MatchPolicy::Nearest, "nearest"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WindowingConfig, channels, window, overlap,
                                                sequence, stride, sample_rate)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdamConfig, learning_rate, beta1, beta2, epsilon)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainingConfig, adam, batch_size, pretrain_epochs,
                                                end_to_end_epochs, seed, train_fraction,
                                                freeze_upstream, normalize_scores, keep_best)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GenParams, length, sample_rate, baseline, plateau,
                                                noise_sigma, ripple_amplitude, ripple_hz,
                                                ripple_rise, noint_samples, entry_samples,
                                                exit_samples, duration_jitter, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SteadyExtraction, window, margin, step,
                                                max_per_class, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SequenceExtraction, window, sequence,
                                                per_class_per_trial, boundary_fraction, prior, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FilterSpec, kind, width)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalConfig, max_delay, stride, matching_horizon,
                                                baseline_persistence, match_policy, filter)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, windowing, training, gen, steady,
                                                sequences, eval, fsm_path, trials, test_trials,
                                                simulation_trials, min_macro_f1, min_class_f1,
                                                max_mean_delay, data_dir, out_dir)

namespace {

// Every key of `doc` must exist in `shape`, recursively.
void check_keys(const nlohmann::json& doc, const nlohmann::json& shape, const std::string& where) {
  if (!doc.is_object()) return;
  if (!shape.is_object()) throw ConfigError("config: '" + where + "' is not a section");
  for (const auto& [key, value] : doc.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!shape.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    if (value.is_object()) check_keys(value, shape.at(key), path);
  }
}

}  // namespace

void RunConfig::reseed(std::uint64_t seed) {
  gen.seed = seed;
  training.seed = seed;
  steady.seed = seed;
  sequences.seed = seed;
}

void RunConfig::validate() const {
  try {
    windowing.validate();
    training.validate();
    gen.validate();
    eval.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (windowing.channels != 1) throw ConfigError("config: only single-channel signals are supported");
  if (steady.window != windowing.window || sequences.window != windowing.window ||
      sequences.sequence != windowing.sequence) {
    throw ConfigError("config: extraction window sizes must match the windowing section");
  }
  if (windowing.sample_rate != gen.sample_rate) {
    throw ConfigError("config: windowing.sample_rate and gen.sample_rate differ");
  }
  if (test_trials > trials) throw ConfigError("config: test_trials exceeds trials");
  if (simulation_trials > test_trials) {
    throw ConfigError("config: simulation_trials must come from the held-out trials");
  }
  if (!fsm_path.empty() && !std::filesystem::exists(fsm_path)) {
    throw ConfigError("config: FSM file '" + fsm_path + "' does not exist");
  }
}

FsmDefinition RunConfig::fsm() const { return fsm_path.empty() ? milling_fsm() : load_fsm(fsm_path); }

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j = cfg;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config: document must be a JSON object");
  const RunConfig defaults;
  check_keys(doc, to_json(defaults), "");
  nlohmann::json merged = to_json(defaults);
  merged.merge_patch(doc);
  try {
    return merged.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  nlohmann::json* node = &doc;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) {
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    path.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    nlohmann::json& next = (*node)[path[i]];
    if (next.is_null()) next = nlohmann::json::object();
    if (!next.is_object()) throw ConfigError("override '" + key + "': '" + path[i] + "' is not a section");
    node = &next;
  }
  (*node)[path.back()] = value;
}

RunConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!file.empty()) {
    std::ifstream is(file);
    if (!is) throw ConfigError("cannot open config '" + file.string() + "'");
    doc = nlohmann::json::parse(is, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("config '" + file.string() + "' is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig cfg = run_config_from_json(doc);
  cfg.validate();
  return cfg;
}

}  // namespace mpic
