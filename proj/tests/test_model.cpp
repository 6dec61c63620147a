#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>

#include "mpic/model.hpp"
#include "mpic/serialize.hpp"
#include "mpic/synthgen.hpp"
#include "support.hpp"

using namespace mpic;
using mpic::testing::random_tensor;

namespace {

struct Row {
  LayerKind kind;
  std::size_t in, out, reported_count;
};

void expect_rows(const Network& net, const std::vector<Row>& rows) {
  ASSERT_EQ(net.layers.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Layer& l = net.layers[i];
    EXPECT_EQ(l.kind, rows[i].kind) << "row " << i + 1;
    if (rows[i].in) EXPECT_EQ(l.in, rows[i].in) << "row " << i + 1;
    if (rows[i].out) EXPECT_EQ(l.out, rows[i].out) << "row " << i + 1;
    EXPECT_EQ(count_parameters(l, CountConvention::Reported), rows[i].reported_count) << "row " << i + 1;
  }
}

// Small 4-class window set with a few records per class, shifted apart so a
// couple of epochs suffice.
LabeledDataset tiny_windows(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  LabeledDataset ds;
  ds.span = kWindowLength;
  ds.classes = 4;
  std::vector<double> w(kWindowLength);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (int c = 0; c < 4; ++c) {
      for (auto& v : w) v = 0.3 * c + noise(rng);
      ds.add(w, c);
    }
  }
  return ds;
}

LabeledDataset tiny_sequences(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  LabeledDataset ds;
  ds.span = kWindowLength * kSequenceLength;
  ds.classes = 7;
  std::vector<double> w(ds.span);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (int c = 0; c < 7; ++c) {
      for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] = 0.1 * c * static_cast<double>(k / kWindowLength) + noise(rng);
      }
      ds.add(w, c);
    }
  }
  return ds;
}

TrainingConfig quick_config() {
  TrainingConfig cfg;
  cfg.pretrain_epochs = 1;
  cfg.end_to_end_epochs = 1;
  cfg.batch_size = 8;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST(Architecture, UpstreamRowsMatchTheTable) {
  using K = LayerKind;
  expect_rows(build_upstream(), {{K::Conv1D, 1, 5, 15},      {K::MaxPool1D, 0, 0, 0},
                                 {K::ReLU, 0, 0, 0},         {K::BatchNorm1D, 5, 5, 15},
                                 {K::Conv1D, 5, 25, 375},    {K::MaxPool1D, 0, 0, 0},
                                 {K::ReLU, 0, 0, 0},         {K::BatchNorm1D, 25, 25, 75},
                                 {K::Conv1D, 25, 50, 3750},  {K::MaxPool1D, 0, 0, 0},
                                 {K::ReLU, 0, 0, 0},         {K::BatchNorm1D, 50, 50, 150},
                                 {K::Linear, 2500, 200, 500200}, {K::Linear, 200, 10, 2010},
                                 {K::Linear, 10, 4, 44}});
  EXPECT_EQ(count_parameters(build_upstream(), CountConvention::Reported), 506634u);
}

TEST(Architecture, DownstreamRowsMatchTheTable) {
  using K = LayerKind;
  expect_rows(build_downstream(), {{K::Conv1D, 4, 8, 96},     {K::BatchNorm1D, 8, 8, 24},
                                   {K::Conv1D, 8, 16, 384},   {K::BatchNorm1D, 16, 16, 48},
                                   {K::Linear, 128, 64, 8256}, {K::Linear, 64, 7, 455}});
  EXPECT_EQ(count_parameters(build_downstream(), CountConvention::Reported), 9263u);
}

TEST(Architecture, LearnableConventionDropsOneValuePerChannel) {
  EXPECT_EQ(count_parameters(build_upstream(), CountConvention::Learnable), 506634u - 80u);
  EXPECT_EQ(count_parameters(build_downstream(), CountConvention::Learnable), 9263u - 24u);
}

TEST(Architecture, ShapesThroughTheStack) {
  const Network up = build_upstream();
  EXPECT_EQ(output_shape(up, {1, 1, 400}), (std::vector<std::size_t>{1, 4}));
  std::vector<std::size_t> shape{1, 1, 400};
  std::vector<std::size_t> lengths;
  for (const Layer& l : up.layers) {
    Network one;
    one.layers = {l};
    shape = output_shape(one, shape);
    if (l.kind == LayerKind::MaxPool1D) lengths.push_back(shape[2]);
  }
  EXPECT_EQ(lengths, (std::vector<std::size_t>{200, 100, 50}));
  EXPECT_EQ(output_shape(build_downstream(), {1, 4, 8}), (std::vector<std::size_t>{1, 7}));
}

TEST(EncoderClassifier, OutputIsSevenScores) {
  const EncoderClassifier m = make_encoder_classifier(1);
  std::mt19937_64 rng(2);
  const Tensor out = classify_sequence(m, random_tensor({8, 1, 400}, rng));
  ASSERT_EQ(out.size(), 7u);
  const Tensor p = softmax_rows(out.reshaped({1, 7}));
  double s = 0.0;
  for (double v : p.data) s += v;
  EXPECT_NEAR(s, 1.0, 1e-9);
  EXPECT_THROW(classify_sequence(m, Tensor({7, 1, 400})), ContractError);
}

TEST(EncoderClassifier, UpstreamWeightsAreShared) {
  const EncoderClassifier m = make_encoder_classifier(3);
  std::mt19937_64 rng(4);
  const Tensor seq = random_tensor({8, 1, 400}, rng);
  const Tensor scores = encode_windows(m, seq);
  for (std::size_t i = 0; i < 8; ++i) {
    Tensor one({1, 1, 400});
    std::copy_n(seq.data.begin() + static_cast<long>(i * 400), 400, one.data.begin());
    const Tensor alone = infer(m.upstream, one);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(scores.at(i, c), alone.at(0, c));
  }
}

TEST(EncoderClassifier, RepeatedWindowGivesConstantTrajectory) {
  const EncoderClassifier m = make_encoder_classifier(3);
  std::mt19937_64 rng(6);
  const Tensor w = random_tensor({1, 1, 400}, rng);
  Tensor seq({8, 1, 400});
  for (std::size_t i = 0; i < 8; ++i) std::copy(w.data.begin(), w.data.end(), seq.data.begin() + static_cast<long>(i * 400));
  const Tensor scores = encode_windows(m, seq);
  for (std::size_t i = 1; i < 8; ++i) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(scores.at(i, c), scores.at(0, c));
  }
}

TEST(EncoderClassifier, WindowOrderMatters) {
  const EncoderClassifier m = make_encoder_classifier(8);
  std::mt19937_64 rng(9);
  bool differs = false;
  for (int trial = 0; trial < 10 && !differs; ++trial) {
    const Tensor seq = random_tensor({8, 1, 400}, rng);
    Tensor rev = seq;
    for (std::size_t i = 0; i < 8; ++i) {
      std::copy_n(seq.data.begin() + static_cast<long>(i * 400), 400,
                  rev.data.begin() + static_cast<long>((7 - i) * 400));
    }
    differs = classify_sequence(m, seq) != classify_sequence(m, rev);
  }
  EXPECT_TRUE(differs);
}

TEST(EncoderClassifier, BatchMatchesSingleSequences) {
  const EncoderClassifier m = make_encoder_classifier(10);
  std::mt19937_64 rng(11);
  const Tensor flat = random_tensor({3, 8, 400}, rng);
  const Tensor batch = classify_batch(m, flat.data, 3);
  for (std::size_t b = 0; b < 3; ++b) {
    Tensor one({8, 1, 400});
    std::copy_n(flat.data.begin() + static_cast<long>(b * 3200), 3200, one.data.begin());
    const Tensor single = classify_sequence(m, one);
    for (std::size_t c = 0; c < 7; ++c) EXPECT_EQ(batch.at(b, c), single.data[c]);
  }
}

TEST(ModelFile, RoundTripIsBitExact) {
  EncoderClassifier m = make_encoder_classifier(12, false);
  std::mt19937_64 rng(13);
  for (auto& l : m.upstream.layers) {
    for (auto& v : l.running_mean) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  }
  std::stringstream ss;
  write_model(ss, m);
  const EncoderClassifier back = read_model(ss);
  EXPECT_EQ(back, m);
  EXPECT_EQ(model_bytes(back), model_bytes(m));
  EXPECT_EQ(model_hash(back), model_hash(m));
  const Tensor seq = random_tensor({8, 1, 400}, rng);
  EXPECT_EQ(classify_sequence(back, seq), classify_sequence(m, seq));
}

TEST(ModelFile, HeaderIsCheckedOnLoad) {
  std::stringstream ss;
  write_model(ss, make_encoder_classifier(1));
  std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "SWNN");
  std::string bad = bytes;
  bad[0] = 'X';
  std::istringstream bad_magic(bad);
  EXPECT_THROW(read_model(bad_magic), FormatError);
  std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_model(truncated), FormatError);
}

TEST(ModelFile, NetworkFileIsNotAModel) {
  std::stringstream ss;
  write_network(ss, build_upstream());
  EXPECT_THROW(read_model(ss), FormatError);
}

TEST(ModelFile, SaveAndLoadFromDisk) {
  const auto dir = std::filesystem::temp_directory_path() / "mpic_model_test";
  std::filesystem::create_directories(dir);
  const EncoderClassifier m = make_encoder_classifier(14);
  save_model(dir / "m.swnn", m);
  EXPECT_EQ(load_model(dir / "m.swnn"), m);
  save_network(dir / "u.swnn", m.upstream);
  EXPECT_EQ(load_network(dir / "u.swnn"), m.upstream);
  EXPECT_THROW(load_model(dir / "missing.swnn"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST(Training, PretrainIsDeterministicAndReportsEpochs) {
  const LabeledDataset ds = tiny_windows(10, 1);
  const TrainingConfig cfg = quick_config();
  const PretrainResult a = pretrain_upstream(ds, cfg);
  const PretrainResult b = pretrain_upstream(ds, cfg);
  EXPECT_EQ(network_hash(a.upstream), network_hash(b.upstream));
  ASSERT_EQ(a.report.records.size(), 2u);
  EXPECT_EQ(a.report.records[0].split, "train");
  ASSERT_NE(a.report.final_validation(), nullptr);
  EXPECT_TRUE(std::isfinite(a.report.final_validation()->loss));
}

TEST(Training, PretrainNeedsEveryClass) {
  LabeledDataset ds;
  ds.span = kWindowLength;
  ds.classes = 4;
  std::vector<double> w(kWindowLength, 0.1);
  for (int i = 0; i < 20; ++i) ds.add(w, 0);
  EXPECT_THROW(pretrain_upstream(ds, quick_config()), ContractError);
}

TEST(Training, EndToEndIsDeterministic) {
  const TrainingConfig cfg = quick_config();
  const PretrainResult pre = pretrain_upstream(tiny_windows(6, 2), cfg);
  const LabeledDataset seqs = tiny_sequences(4, 3);
  const TrainResult a = train_end_to_end(seqs, pre.upstream, cfg);
  const TrainResult b = train_end_to_end(seqs, pre.upstream, cfg);
  EXPECT_EQ(model_hash(a.model), model_hash(b.model));
  EXPECT_NE(network_hash(a.model.upstream), network_hash(pre.upstream));
}

TEST(Training, FrozenUpstreamStaysFixed) {
  TrainingConfig cfg = quick_config();
  const PretrainResult pre = pretrain_upstream(tiny_windows(6, 2), cfg);
  cfg.freeze_upstream = true;
  const TrainResult r = train_end_to_end(tiny_sequences(4, 3), pre.upstream, cfg);
  EXPECT_EQ(r.model.upstream, pre.upstream);
}

TEST(Training, LossDecreasesOnSeparableWindows) {
  TrainingConfig cfg = quick_config();
  cfg.pretrain_epochs = 6;
  const PretrainResult r = pretrain_upstream(tiny_windows(20, 7), cfg);
  const auto& recs = r.report.records;
  EXPECT_LT(recs[recs.size() - 2].loss, recs[0].loss);
  EXPECT_GT(r.report.final_validation()->accuracy, 0.5);
}

TEST(Training, OverflowAbortsAsDivergence) {
  TrainingConfig cfg = quick_config();
  cfg.adam.learning_rate = 1e200;
  cfg.pretrain_epochs = 3;
  EXPECT_THROW(pretrain_upstream(tiny_windows(8, 1), cfg), DivergenceError);
}

TEST(Training, NonFiniteDatasetIsAContractError) {
  LabeledDataset ds = tiny_windows(4, 1);
  ds.values[5] = std::nan("");
  EXPECT_THROW(pretrain_upstream(ds, quick_config()), ContractError);
}

TEST(Training, ReportCsvLayout) {
  TrainingReport rep;
  rep.records.push_back({"pretrain", 1, "train", 0.5, 0.75});
  std::ostringstream os;
  write_report_csv(os, rep, {"seed=1"});
  EXPECT_NE(os.str().find("stage,epoch,split,loss,accuracy"), std::string::npos);
  EXPECT_NE(os.str().find("pretrain,1,train,0.5,0.75"), std::string::npos);
}

TEST(Training, SplitIsDeterministicAndDisjoint) {
  const auto [a_tr, a_va] = split_indices(100, 0.8, 9);
  const auto [b_tr, b_va] = split_indices(100, 0.8, 9);
  EXPECT_EQ(a_tr, b_tr);
  EXPECT_EQ(a_va, b_va);
  EXPECT_EQ(a_tr.size(), 80u);
  std::vector<std::size_t> all = a_tr;
  all.insert(all.end(), a_va.begin(), a_va.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
}
