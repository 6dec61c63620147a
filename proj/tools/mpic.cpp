// Command-line front end: gen, pretrain, train, eval, simulate, compare,
// fsm-check and export-incidents.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mpic/pipeline.hpp"
#include "mpic/serialize.hpp"

using namespace mpic;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3, kThreshold = 4 };

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
  std::string out;
  std::string data;
  std::string model;
  std::string upstream;
  std::string fsm;
  bool check = false;
};

struct Run {
  RunConfig cfg;
  json snapshot;
  fs::path out;
  fs::path data;
};

Run resolve(const Options& o) {
  std::vector<std::string> overrides = o.set;
  if (!o.fsm.empty()) overrides.push_back("fsm_path=\"" + o.fsm + "\"");
  Run r;
  r.cfg = resolve_config(o.config, overrides);
  if (o.seed) r.cfg.reseed(*o.seed);
  r.out = o.out.empty() ? fs::path(r.cfg.out_dir) : fs::path(o.out);
  r.data = o.data.empty() ? fs::path(r.cfg.data_dir) : fs::path(o.data);
  r.snapshot = to_json(r.cfg);
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string config_comment(const json& snapshot) { return "config=" + snapshot.dump(); }

// ------------------------------------------------------------------ data

struct TrialFile {
  std::string file;
  std::uint64_t seed;
  std::string split;
};

struct Manifest {
  std::vector<TrialFile> trials;
};

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw DataError("missing dataset manifest '" + path.string() + "' (run `mpic gen` first)");
  const json j = json::parse(is, nullptr, false);
  if (j.is_discarded() || !j.contains("trials")) throw DataError("malformed manifest '" + path.string() + "'");
  Manifest m;
  for (const auto& t : j.at("trials")) {
    m.trials.push_back({t.at("file").get<std::string>(), t.at("seed").get<std::uint64_t>(),
                        t.at("split").get<std::string>()});
  }
  return m;
}

std::vector<TrialRecording> load_trials(const fs::path& dir, const Manifest& m, const std::string& split,
                                        std::vector<std::string>* ids = nullptr) {
  std::vector<TrialRecording> out;
  for (const auto& t : m.trials) {
    if (t.split != split) continue;
    const fs::path path = dir / t.file;
    if (!fs::exists(path)) throw DataError("trial file '" + path.string() + "' listed in the manifest is missing");
    TrialRecording rec = from_signal_record(load_signal_csv(path));
    rec.params.seed = t.seed;
    out.push_back(std::move(rec));
    if (ids) ids->push_back(fs::path(t.file).stem().string());
  }
  return out;
}

fs::path model_path(const Options& o, const Run& r) {
  return o.model.empty() ? r.out / "model.swnn" : fs::path(o.model);
}

fs::path upstream_path(const Options& o, const Run& r) {
  return o.upstream.empty() ? r.out / "upstream.swnn" : fs::path(o.upstream);
}

EncoderClassifier require_model(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("model file '" + path.string() + "' does not exist");
  return load_model(path);
}

void check_class_map(const FsmDefinition& fsm, const EncoderClassifier& model) {
  const std::size_t outputs = model.downstream.layers.back().out;
  if (fsm.class_count() != outputs) {
    throw ConfigError("FSM class_map has " + std::to_string(fsm.class_count()) +
                      " classes but the model outputs " + std::to_string(outputs));
  }
}

ProgressFn printer() {
  return [](const EpochRecord& r) {
    std::cout << r.stage << " epoch " << r.epoch << " " << r.split << " loss " << r.loss << " accuracy "
              << r.accuracy << std::endl;
  };
}

// ------------------------------------------------------------------ commands

int cmd_gen(const Options& o) {
  const Run r = resolve(o);
  fs::create_directories(r.out);
  json listing = json::array();
  const std::size_t n_train = r.cfg.trials - r.cfg.test_trials;
  for (std::size_t i = 0; i < r.cfg.trials; ++i) {
    const TrialRecording t = make_trials(r.cfg.gen, i, 1).front();
    std::ostringstream name;
    name << "trial_" << std::setw(3) << std::setfill('0') << i << ".csv";
    SignalRecord rec = to_signal_record(t);
    rec.comments.push_back(config_comment(r.snapshot));
    save_signal_csv(r.out / name.str(), rec);
    listing.push_back({{"file", name.str()},
                       {"seed", t.params.seed},
                       {"split", i < n_train ? "train" : "test"},
                       {"transitions", t.transitions}});
  }
  write_json(r.out / "manifest.json", {{"config", r.snapshot}, {"trials", listing}});
  std::cout << "wrote " << r.cfg.trials << " trials and manifest.json to " << r.out.string() << "\n";
  return kOk;
}

int cmd_pretrain(const Options& o) {
  const Run r = resolve(o);
  const auto train = load_trials(r.data, read_manifest(r.data), "train");
  if (train.empty()) throw DataError("manifest has no training trials");
  const ExtractionReport steady = extract_steady_samples(train, r.cfg.steady);
  for (const auto& w : steady.warnings) std::cerr << "warning: " << w << "\n";
  const PretrainResult pre = pretrain_upstream(steady.dataset, r.cfg.training, printer());
  fs::create_directories(r.out);
  save_network(upstream_path(o, r), pre.upstream);
  std::ofstream csv(r.out / "pretrain_report.csv");
  write_report_csv(csv, pre.report, {config_comment(r.snapshot)});
  write_json(r.out / "pretrain.json", {{"config", r.snapshot},
                                       {"windows", steady.dataset.size()},
                                       {"upstream_hash", network_hash(pre.upstream)}});
  std::cout << "upstream written to " << upstream_path(o, r).string() << "\n";
  return kOk;
}

json metrics_json(const ConfusionMatrix& cm, const MetricsSummary& m) {
  json per = json::array();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& k = m.per_class[c];
    per.push_back({{"class", cm.classes[c]},
                   {"precision", k.precision},
                   {"recall", k.recall},
                   {"f1", k.f1},
                   {"support", k.support},
                   {"excluded", k.excluded}});
  }
  return {{"per_class", per},
          {"macro_precision", m.macro_precision},
          {"macro_recall", m.macro_recall},
          {"macro_f1", m.macro_f1},
          {"confusion", cm.counts}};
}

bool meets_f1(const RunConfig& cfg, const MetricsSummary& m) {
  bool ok = m.macro_f1 >= cfg.min_macro_f1;
  for (const auto& c : m.per_class) ok = ok && (c.excluded || c.f1 >= cfg.min_class_f1);
  return ok;
}

// Held-out metrics, written next to the other artifacts.
MetricsSummary evaluate_into(const Run& r, const EncoderClassifier& model, const fs::path& prefix) {
  const FsmDefinition fsm = r.cfg.fsm();
  check_class_map(fsm, model);
  const auto test = load_trials(r.data, read_manifest(r.data), "test");
  if (test.empty()) throw DataError("manifest has no test trials; nothing to evaluate");
  const LabeledDataset spans = held_out_sequences(r.cfg, test);
  if (spans.size() == 0) throw DataError("test trials produced no spans");
  const ConfusionMatrix cm = evaluate_classification(model, spans, class_names(fsm));
  const MetricsSummary m = precision_recall_f1(cm);
  const std::string table = metrics_table(cm, m);
  std::cout << table;
  fs::create_directories(prefix.parent_path());
  std::ofstream csv(prefix.string() + "_confusion.csv");
  csv << "# " << config_comment(r.snapshot) << "\n";
  write_confusion_csv(csv, cm);
  write_text(prefix.string() + "_metrics.txt", table);
  json j = metrics_json(cm, m);
  j["config"] = r.snapshot;
  j["model_hash"] = model_hash(model);
  j["spans"] = spans.size();
  write_json(prefix.string() + "_metrics.json", j);
  return m;
}

int cmd_train(const Options& o) {
  const Run r = resolve(o);
  const Manifest man = read_manifest(r.data);
  const auto train = load_trials(r.data, man, "train");
  if (train.empty()) throw DataError("manifest has no training trials");
  Network upstream;
  if (!o.upstream.empty()) {
    if (!fs::exists(o.upstream)) throw DataError("upstream file '" + o.upstream + "' does not exist");
    upstream = load_network(o.upstream);
  } else {
    const ExtractionReport steady = extract_steady_samples(train, r.cfg.steady);
    for (const auto& w : steady.warnings) std::cerr << "warning: " << w << "\n";
    const PretrainResult pre = pretrain_upstream(steady.dataset, r.cfg.training, printer());
    upstream = pre.upstream;
    fs::create_directories(r.out);
    save_network(upstream_path(o, r), upstream);
    std::ofstream csv(r.out / "pretrain_report.csv");
    write_report_csv(csv, pre.report, {config_comment(r.snapshot)});
  }
  const LabeledDataset seqs = extract_sequence_samples(train, r.cfg.sequences);
  const TrainResult res = train_end_to_end(seqs, upstream, r.cfg.training, printer());
  fs::create_directories(r.out);
  save_model(model_path(o, r), res.model);
  std::ofstream csv(r.out / "train_report.csv");
  write_report_csv(csv, res.report, {config_comment(r.snapshot)});

  const MetricsSummary m = evaluate_into(r, res.model, r.out / "heldout");
  write_json(r.out / "model.json", {{"config", r.snapshot},
                                    {"model_hash", model_hash(res.model)},
                                    {"best_epoch", res.best_epoch},
                                    {"sequences", seqs.size()},
                                    {"heldout_macro_f1", m.macro_f1}});
  std::cout << "model written to " << model_path(o, r).string() << " (held-out macro-F1 " << m.macro_f1
            << ")\n";
  return o.check && !meets_f1(r.cfg, m) ? kThreshold : kOk;
}

int cmd_eval(const Options& o) {
  const Run r = resolve(o);
  const EncoderClassifier model = require_model(model_path(o, r));
  const MetricsSummary m = evaluate_into(r, model, r.out / "eval");
  return o.check && !meets_f1(r.cfg, m) ? kThreshold : kOk;
}

std::vector<TrialRecording> simulation_set(const Run& r, std::vector<std::string>& ids) {
  auto test = load_trials(r.data, read_manifest(r.data), "test", &ids);
  if (test.empty()) throw DataError("manifest has no test trials to simulate");
  const std::size_t n = std::min(test.size(), r.cfg.simulation_trials);
  test.resize(n);
  ids.resize(n);
  return test;
}

double pooled_mean(const std::vector<SimulationReport>& reports) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& rep : reports) {
    for (const auto& d : rep.delays) {
      if (!d.delay) continue;
      sum += std::abs(*d.delay);
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

void write_reports(const fs::path& dir, const std::vector<SimulationReport>& reports) {
  for (const auto& rep : reports) write_json(dir / (rep.system + "_" + rep.trial_id + ".json"), to_json(rep));
}

int cmd_simulate(const Options& o) {
  const Run r = resolve(o);
  const EncoderClassifier model = require_model(model_path(o, r));
  const FsmDefinition fsm = r.cfg.fsm();
  check_class_map(fsm, model);
  std::vector<std::string> ids;
  const auto trials = simulation_set(r, ids);
  const auto reports = simulate_trials(model, fsm, trials, ids, r.cfg.eval, r.cfg.windowing, o.jobs);
  write_reports(r.out / "simulation", reports);
  const std::string table = delay_table(reports, "Proposed system, delay (s)");
  std::cout << table;
  write_text(r.out / "simulation" / "delays.txt", "# " + config_comment(r.snapshot) + "\n" + table);

  bool ok = pooled_mean(reports) <= r.cfg.max_mean_delay;
  for (const auto& rep : reports) {
    ok = ok && rep.state_path(fsm.initial).size() == fsm.states.size() &&
         budget_passes(check_delay_budget(rep, r.cfg.eval));
  }
  return o.check && !ok ? kThreshold : kOk;
}

int cmd_compare(const Options& o) {
  const Run r = resolve(o);
  const EncoderClassifier model = require_model(model_path(o, r));
  const fs::path up = upstream_path(o, r);
  if (!fs::exists(up)) throw DataError("baseline network '" + up.string() + "' does not exist");
  const Network baseline = load_network(up);
  const FsmDefinition fsm = r.cfg.fsm();
  check_class_map(fsm, model);
  std::vector<std::string> ids;
  const auto trials = simulation_set(r, ids);
  const auto proposed = simulate_trials(model, fsm, trials, ids, r.cfg.eval, r.cfg.windowing, o.jobs);
  std::vector<SimulationReport> base;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    base.push_back(run_baseline(baseline, trials[i], r.cfg.eval, r.cfg.windowing, ids[i]));
  }
  write_reports(r.out / "compare", proposed);
  write_reports(r.out / "compare", base);
  const double pm = pooled_mean(proposed), bm = pooled_mean(base);
  std::ostringstream text;
  text << delay_table(proposed, "Proposed system, delay (s)") << "\n"
       << delay_table(base, "Baseline CNN, delay (s)") << "\n"
       << "mean |delay|: proposed " << std::fixed << std::setprecision(3) << pm << " s, baseline " << bm
       << " s; " << (pm <= bm ? "proposed" : "baseline") << " system is lower\n";
  std::cout << text.str();
  write_text(r.out / "compare" / "summary.txt", "# " + config_comment(r.snapshot) + "\n" + text.str());
  write_json(r.out / "compare" / "summary.json",
             {{"config", r.snapshot}, {"proposed_mean_abs_delay", pm}, {"baseline_mean_abs_delay", bm}});
  return o.check && pm > bm ? kThreshold : kOk;
}

int cmd_fsm_check(const Options& o) {
  const FsmDefinition fsm = o.fsm.empty() ? milling_fsm() : load_fsm(o.fsm);
  std::cout << "FSM ok: " << fsm.states.size() << " states, " << fsm.events.size() << " events, "
            << fsm.transitions.size() << " transitions, initial " << fsm.states[static_cast<std::size_t>(fsm.initial)]
            << "\n";
  for (const auto& [key, to] : fsm.transitions) {
    std::cout << "  " << fsm.states[static_cast<std::size_t>(key.first)] << " --"
              << fsm.events[static_cast<std::size_t>(key.second)] << "--> "
              << fsm.states[static_cast<std::size_t>(to)] << "\n";
  }
  return kOk;
}

int cmd_export_incidents(const Options& o) {
  const Run r = resolve(o);
  const EncoderClassifier model = require_model(model_path(o, r));
  const FsmDefinition fsm = r.cfg.fsm();
  check_class_map(fsm, model);
  std::vector<std::string> ids;
  const auto trials = simulation_set(r, ids);
  WindowingConfig w = r.cfg.windowing;
  w.stride = r.cfg.eval.stride;
  fs::create_directories(r.out / "incidents");
  std::size_t total = 0;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    Coordinator coord(fsm);
    Partitioner part(w);
    for (const auto& seq : part.push(denoise(trials[i].samples, r.cfg.eval.filter))) {
      const Tensor scores = classify_sequence(model, seq.data);
      const int decision = static_cast<int>(
          std::max_element(scores.data.begin(), scores.data.end()) - scores.data.begin());
      coord.step(decision, seq.end_time, std::make_shared<const WindowSequence>(seq));
    }
    std::ofstream os(r.out / "incidents" / (ids[i] + ".csv"));
    export_incidents(coord, w.span(), os);
    total += coord.incidents().size();
  }
  std::cout << "exported " << total << " incidents from " << trials.size() << " trials to "
            << (r.out / "incidents").string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-stage interaction classifier: data generation, training and deployment simulation"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--set", o.set, "Override a config value, e.g. --set training.end_to_end_epochs=4");
  app.add_option("--seed", o.seed, "Seed for every stochastic component");
  app.add_option("--jobs", o.jobs, "Worker threads for trial simulation")->check(CLI::PositiveNumber);
  app.add_option("--out", o.out, "Output directory (defaults to out_dir)");
  app.add_option("--data", o.data, "Directory with manifest.json and trials (defaults to data_dir)");
  app.add_option("--fsm", o.fsm, "FSM definition file (defaults to fsm_path or the built-in machine)");

  auto* gen = app.add_subcommand("gen", "Generate synthetic trials and a manifest");
  auto* pretrain = app.add_subcommand("pretrain", "Train the window classifier on steady-state windows");
  auto* train = app.add_subcommand("train", "Train the full classifier end to end");
  auto* eval = app.add_subcommand("eval", "Held-out classification metrics");
  auto* simulate = app.add_subcommand("simulate", "Streaming deployment simulation");
  auto* compare = app.add_subcommand("compare", "Deployment simulation against the baseline CNN");
  auto* fsm_check = app.add_subcommand("fsm-check", "Validate an FSM definition file");
  auto* incidents = app.add_subcommand("export-incidents", "Write rejected decisions as unlabeled records");

  for (auto* sub : {train, eval, simulate, compare, incidents}) {
    sub->add_option("--model", o.model, "Model file (defaults to <out>/model.swnn)");
  }
  for (auto* sub : {pretrain, train, compare}) {
    sub->add_option("--upstream", o.upstream, "Pretrained window classifier (defaults to <out>/upstream.swnn)");
  }
  for (auto* sub : {train, eval, simulate, compare}) {
    sub->add_flag("--check", o.check, "Exit with status 4 when an acceptance threshold is missed");
  }
  fsm_check->add_option("file", o.fsm, "FSM definition file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen(o);
    if (*pretrain) return cmd_pretrain(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*simulate) return cmd_simulate(o);
    if (*compare) return cmd_compare(o);
    if (*fsm_check) return cmd_fsm_check(o);
    if (*incidents) return cmd_export_incidents(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const FsmError& e) {
    std::cerr << "FSM error: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
