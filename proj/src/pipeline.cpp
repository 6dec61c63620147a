#include "mpic/pipeline.hpp"

namespace mpic {

std::vector<TrialRecording> make_trials(const GenParams& gen, std::size_t first, std::size_t count) {
  std::vector<TrialRecording> out;
  out.reserve(count);
  for (std::size_t i = first; i < first + count; ++i) {
    GenParams p = gen;
    p.seed = gen.seed + i;
    out.push_back(generate_trial(p));
  }
  return out;
}

TrialSplit make_split(const RunConfig& cfg) {
  const std::size_t n_train = cfg.trials - cfg.test_trials;
  return {make_trials(cfg.gen, 0, n_train), make_trials(cfg.gen, n_train, cfg.test_trials)};
}

TrainedSystem train_system(const RunConfig& cfg, const std::vector<TrialRecording>& train,
                           const ProgressFn& progress) {
  TrainedSystem sys;
  ExtractionReport steady = extract_steady_samples(train, cfg.steady);
  sys.warnings = steady.warnings;
  sys.steady_samples = steady.dataset.size();
  PretrainResult pre = pretrain_upstream(steady.dataset, cfg.training, progress);
  sys.pretrained = pre.upstream;
  sys.pretrain_report = std::move(pre.report);

  const LabeledDataset seqs = extract_sequence_samples(train, cfg.sequences);
  sys.sequence_samples = seqs.size();
  TrainResult res = train_end_to_end(seqs, sys.pretrained, cfg.training, progress);
  sys.model = std::move(res.model);
  sys.train_report = std::move(res.report);
  return sys;
}

LabeledDataset held_out_sequences(const RunConfig& cfg, const std::vector<TrialRecording>& test) {
  SequenceExtraction opts = cfg.sequences;
  opts.seed = cfg.sequences.seed ^ 0x5eedULL;
  return extract_sequence_samples(test, opts);
}

std::vector<std::string> class_names(const FsmDefinition& fsm) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < fsm.class_count(); ++c) names.push_back(fsm.class_name(static_cast<int>(c)));
  return names;
}

}  // namespace mpic
