#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ftamod/checkpoint.hpp"
#include "ftamod/corpus.hpp"
#include "ftamod/dataset.hpp"
#include "ftamod/inspect.hpp"
#include "ftamod/train.hpp"

using namespace ftamod;
namespace fs = std::filesystem;

namespace {

InputConfig small_input() {
  InputConfig in;
  in.image.size = 16;
  return in;
}

ArchitectureConfig small_arch(AttentionVariant v) {
  ArchitectureConfig a;
  a.height = a.width = 16;
  a.conv_channels = {4, 2};
  a.dense_width = 8;
  a.variant = v;
  a.seed = 5;
  return a;
}

TrainConfig small_train(std::size_t epochs) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.batch_size = 8;
  t.seed = 5;
  return t;
}

const Corpus& mini_corpus() {
  static const Corpus c = [] {
    CorpusSpec s;
    s.modes = {ModulationMode::Bpsk, ModulationMode::AmDsb, ModulationMode::Gfsk};
    s.snr_grid_db = {0, 10};
    s.per_class_per_snr = {6, 3, 4};
    s.seed = 11;
    return synth_corpus(s);
  }();
  return c;
}

const SpectrogramSet& split_set(Split s) {
  static std::map<Split, SpectrogramSet> sets;
  auto it = sets.find(s);
  if (it == sets.end()) it = sets.emplace(s, make_spectrogram_set(mini_corpus(), s, small_input())).first;
  return it->second;
}

std::vector<std::tuple<double, double, double>> losses(const TrainHistory& h) {
  std::vector<std::tuple<double, double, double>> v;
  for (const auto& e : h.epochs) v.emplace_back(e.train_loss, e.val_loss, e.lr);
  return v;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ftamod_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Schedule, StrictlyImprovingNeverDecaysOrStops) {
  auto s = PlateauSchedule::from(TrainConfig{});
  for (int e = 0; e < 200; ++e) {
    EXPECT_FALSE(s.observe(10.0 - 0.01 * e));
    EXPECT_EQ(s.learning_rate, 5e-4);
  }
}

TEST(Schedule, FlatLossDecaysAtPatienceAndStopsLater) {
  auto s = PlateauSchedule::from(TrainConfig{});
  EXPECT_FALSE(s.observe(1.0));
  std::vector<double> lr;
  int stopped_at = 0;
  for (int e = 1; e <= 100; ++e) {
    const bool stop = s.observe(1.0);
    lr.push_back(s.learning_rate);
    if (stop) {
      stopped_at = e;
      break;
    }
  }
  EXPECT_EQ(stopped_at, 25);
  for (int e = 0; e < 14; ++e) EXPECT_EQ(lr[e], 5e-4);
  EXPECT_DOUBLE_EQ(lr[14], 5e-5);
  EXPECT_DOUBLE_EQ(lr[24], 5e-5);
}

TEST(Schedule, ImprovementBelowMinDeltaDoesNotCount) {
  auto s = PlateauSchedule::from(TrainConfig{});
  s.observe(1.0);
  for (int e = 1; e <= 24; ++e) EXPECT_FALSE(s.observe(1.0 - 0.5e-4 * e / 24.0));
  EXPECT_TRUE(s.observe(1.0 - 0.9e-4));
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  t.stop_patience = t.plateau_patience;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.plateau_factor = 1.0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
}

TEST(Dataset, ThreadCountDoesNotChangeImages) {
  const auto a = make_spectrogram_set(mini_corpus(), Split::Test, small_input(), 1);
  const auto b = make_spectrogram_set(mini_corpus(), Split::Test, small_input(), 3);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.snr_db, b.snr_db);
  EXPECT_EQ(a.size(), mini_corpus().count(Split::Test));
}

TEST(Dataset, CacheRoundTrip) {
  const auto dir = scratch("cache");
  const auto a = make_spectrogram_set(mini_corpus(), Split::Val, small_input(), 1, dir);
  ASSERT_FALSE(fs::is_empty(dir));
  const auto b = make_spectrogram_set(mini_corpus(), Split::Val, small_input(), 1, dir);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  auto other = small_input();
  other.image.size = 8;
  EXPECT_EQ(make_spectrogram_set(mini_corpus(), Split::Val, other, 1, dir).image_size, 8u);
  fs::remove_all(dir);
}

TEST(Train, OverfitsASingleExample) {
  CorpusSpec s;
  s.modes = {ModulationMode::Bpsk, ModulationMode::Gfsk, ModulationMode::Pam4, ModulationMode::AmDsb};
  s.snr_grid_db = {10};
  s.per_class_per_snr = {1, 1, 1};
  s.seed = 3;
  InputConfig in;
  in.image.size = 32;
  const auto one = make_spectrogram_set(synth_corpus(s), Split::Train, in).subset(std::vector<std::size_t>{0});
  ArchitectureConfig a;
  a.height = a.width = 32;
  a.conv_channels = {16, 8};
  a.dense_width = 32;
  TrainConfig t;
  t.max_epochs = 50;
  const auto r = train<float>(one, one, a, t);
  ASSERT_EQ(r.history.epochs.size(), 50u);
  EXPECT_LT(r.history.best().train_loss, 0.01);
}

TEST(Train, HistoryInvariantsAndDeterminism) {
  TrainConfig t = small_train(12);
  t.plateau_patience = 2;
  t.stop_patience = 4;
  t.initial_lr = 3e-3;
  const auto a = small_arch(AttentionVariant::CamFam);
  std::size_t callbacks = 0;
  const auto r1 = train<double>(split_set(Split::Train), split_set(Split::Val), a, t, [&](const EpochRecord&) { ++callbacks; });
  const auto r2 = train<double>(split_set(Split::Train), split_set(Split::Val), a, t);
  EXPECT_EQ(callbacks, r1.history.epochs.size());
  EXPECT_EQ(losses(r1.history), losses(r2.history));
  EXPECT_EQ(r1.history.best_epoch, r2.history.best_epoch);
  const auto p1 = r1.model.parameters(), p2 = r2.model.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) {
    EXPECT_TRUE(std::equal(p1[i].tensor.values().begin(), p1[i].tensor.values().end(), p2[i].tensor.values().begin()));
  }

  const auto& h = r1.history.epochs;
  std::size_t argmin = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i].val_loss < h[argmin].val_loss) argmin = i;
    if (i > 0) {
      EXPECT_LE(h[i].lr, h[i - 1].lr);
      if (h[i].lr < h[i - 1].lr) {
        EXPECT_DOUBLE_EQ(h[i].lr, h[i - 1].lr * t.plateau_factor);
      }
    }
  }
  EXPECT_EQ(r1.history.best_epoch, argmin + 1);
  EXPECT_GE(h.size(), r1.history.best_epoch);
  if (r1.history.stopped_early) {
    EXPECT_LE(h.size() - r1.history.best_epoch, t.stop_patience);
  }
  // The returned model is the best-epoch model.
  EXPECT_NEAR(mean_loss(r1.model, split_set(Split::Val), 8), r1.history.best().val_loss, 1e-12);
}

TEST(Train, RejectsBadInputs) {
  const auto& tr = split_set(Split::Train);
  EXPECT_THROW(train<double>(tr, SpectrogramSet{}, small_arch(AttentionVariant::None), small_train(1)), std::invalid_argument);
  auto a = small_arch(AttentionVariant::None);
  a.n_classes = 2;
  EXPECT_THROW(train<double>(tr, tr, a, small_train(1)), std::invalid_argument);
}

TEST(Report, PerfectPredictionsGiveADiagonal) {
  const std::vector<std::size_t> labels{0, 1, 2, 2, 1, 0, 0};
  const std::vector<int> snrs{0, 0, 0, 10, 10, 10, 10};
  const auto r = make_report(labels, labels, snrs, 3);
  EXPECT_EQ(r.accuracy, 1.0);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      if (i != j) {
        EXPECT_EQ(r.confusion[i][j], 0u);
      }
    }
  }
  EXPECT_EQ(r.confusion[0][0], 3u);
}

TEST(Report, RowSumsTraceAndWeightedMean) {
  const std::vector<std::size_t> labels{0, 1, 2, 2, 1, 0, 0, 2, 1};
  const std::vector<std::size_t> preds{0, 2, 2, 1, 1, 0, 1, 2, 0};
  const std::vector<int> snrs{-4, -4, -4, 8, 8, 8, 8, -4, 8};
  const auto r = make_report(labels, preds, snrs, 3);
  std::size_t trace = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t row = 0;
    for (auto c : r.confusion[i]) row += c;
    EXPECT_EQ(row, static_cast<std::size_t>(std::count(labels.begin(), labels.end(), i)));
    trace += r.confusion[i][i];
  }
  EXPECT_EQ(r.accuracy, double(trace) / double(labels.size()));
  ASSERT_EQ(r.per_snr.size(), 2u);
  EXPECT_EQ(r.per_snr[0].snr_db, -4);
  double weighted = 0.0;
  std::size_t n = 0;
  for (const auto& s : r.per_snr) weighted += s.accuracy * double(s.n), n += s.n;
  EXPECT_EQ(n, labels.size());
  EXPECT_NEAR(weighted / double(n), r.accuracy, 1e-12);
  EXPECT_THROW(make_report(labels, std::vector<std::size_t>{0}, snrs, 3), std::invalid_argument);
}

TEST(Evaluate, RepeatableAndMatchesClassCount) {
  const auto m = Model<double>::build(small_arch(AttentionVariant::Fta));
  const auto& te = split_set(Split::Test);
  const auto a = evaluate(m, te, 5), b = evaluate(m, te, 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.total, te.size());
  auto wrong = small_arch(AttentionVariant::Fta);
  wrong.n_classes = 4;
  EXPECT_THROW(evaluate(Model<double>::build(wrong), te), std::invalid_argument);
}

TEST(Ablate, SingleVariantEqualsDirectRun) {
  const auto& tr = split_set(Split::Train);
  const auto& va = split_set(Split::Val);
  const auto& te = split_set(Split::Test);
  const auto a = small_arch(AttentionVariant::Fta);
  const auto t = small_train(3);
  std::vector<AblationRun> runs;
  const auto rows = ablate<double>(tr, va, te, {AttentionVariant::None}, a, t, {}, &runs);
  auto direct_arch = a;
  direct_arch.variant = AttentionVariant::None;
  const auto direct = evaluate(train<double>(tr, va, direct_arch, t).model, te, t.batch_size);
  ASSERT_EQ(rows.size(), 3u);  // all, 0 dB, 10 dB
  EXPECT_EQ(rows[0].snr, "all");
  EXPECT_EQ(rows[0].accuracy, direct.accuracy);
  EXPECT_EQ(rows[1].snr, "0");
  EXPECT_EQ(rows[1].accuracy, direct.per_snr[0].accuracy);
  ASSERT_EQ(runs.size(), 1u);
  EXPECT_EQ(runs[0].report, direct);
  EXPECT_THROW(ablate<double>(tr, va, te, {}, a, t), std::invalid_argument);
}

TEST(Checkpoint, SaveLoadEvaluateIdentity) {
  const auto dir = scratch("ckpt");
  TrainConfig t = small_train(2);
  const auto r = train<float>(split_set(Split::Train), split_set(Split::Val), small_arch(AttentionVariant::Fta), t);
  write_checkpoint(dir / "m.ftac", make_checkpoint(r.model, small_input(), r.optimizer_state));
  const auto ck = read_checkpoint(dir / "m.ftac");
  EXPECT_EQ(ck.arch.variant, AttentionVariant::Fta);
  EXPECT_EQ(ck.arch.conv_channels, (std::vector<std::size_t>{4, 2}));
  EXPECT_EQ(ck.input.image.size, 16u);
  EXPECT_EQ(ck.optimizer_state, r.optimizer_state);
  const auto m = ck.model();
  const auto pa = m.parameters(), pb = r.model.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(), pb[i].tensor.values().begin()));
  }
  EXPECT_EQ(evaluate(m, split_set(Split::Test)), evaluate(r.model, split_set(Split::Test)));

  write_checkpoint(dir / "again.ftac", ck);
  EXPECT_EQ(read_file(dir / "m.ftac"), read_file(dir / "again.ftac"));
  fs::remove_all(dir);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto m = Model<float>::build(small_arch(AttentionVariant::Cbam));
  std::ostringstream os;
  write_checkpoint(os, make_checkpoint(m, small_input()));
  auto bytes = os.str();
  EXPECT_EQ(bytes.substr(0, 4), "FTAC");
  {
    std::istringstream in(bytes.substr(0, bytes.size() / 2));
    EXPECT_THROW(read_checkpoint(in), std::runtime_error);
  }
  bytes[0] = 'X';
  std::istringstream in(bytes);
  EXPECT_THROW(read_checkpoint(in), std::runtime_error);
}

TEST(Checkpoint, DescriptorCarriesArchitectureAndInput) {
  const auto text = describe(small_arch(AttentionVariant::CamTam), small_input());
  EXPECT_NE(text.find("variant=cam-tam"), std::string::npos);
  ArchitectureConfig a;
  InputConfig in;
  parse_descriptor(text, a, in);
  EXPECT_EQ(a.variant, AttentionVariant::CamTam);
  EXPECT_EQ(a.height, 16u);
  EXPECT_EQ(in.stft.frame_length, 40u);
  EXPECT_EQ(in.image.size, 16u);
}

TEST(Inspect, MapsInUnitIntervalAndOutputMatchesHook) {
  const auto dir = scratch("inspect");
  const auto m = Model<float>::build(small_arch(AttentionVariant::Fta));
  const auto img = split_set(Split::Test).image(2);
  const auto res = inspect_maps(m, img, 1, dir);
  EXPECT_FALSE(res.passthrough);
  for (const char* name : {"F", "Mc", "Fc", "Mf", "Ff", "Mt", "Ft", "Fprime"}) {
    EXPECT_TRUE(fs::exists(dir / (std::string(name) + ".pgm"))) << name;
    EXPECT_TRUE(fs::exists(dir / (std::string(name) + ".csv"))) << name;
  }
  for (const auto* t : {&res.trace.mc, &res.trace.mf, &res.trace.mt}) {
    for (auto v : t->values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }

  Tensor<float> x({1, 16, 16, 3});
  std::copy(img.begin(), img.end(), x.values().begin());
  Tensor<float> hooked;
  m.forward(nullptr, x, [&](std::size_t layer, const AttentionTrace<float>& tr) {
    if (layer == 1) hooked = tr.output;
  });
  std::ifstream csv(dir / "Fprime.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "h,w,c,value");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    std::istringstream ls(line);
    std::size_t h, w, c;
    char comma;
    double v;
    ls >> h >> comma >> w >> comma >> c >> comma >> v;
    EXPECT_NEAR(v, hooked.at(0, h, w, c), 1e-6);
    ++rows;
  }
  EXPECT_EQ(rows, hooked.size());
  EXPECT_THROW(inspect_maps(m, img, 2, dir), std::out_of_range);
  fs::remove_all(dir);
}

TEST(Inspect, VariantNoneEmitsOnlyF) {
  const auto dir = scratch("inspect_none");
  const auto m = Model<float>::build(small_arch(AttentionVariant::None));
  const auto res = inspect_maps(m, split_set(Split::Test).image(0), 0, dir);
  EXPECT_TRUE(res.passthrough);
  EXPECT_EQ(res.maps, (std::vector<std::string>{"F"}));
  fs::remove_all(dir);
}

TEST(Csv, HeadersAndSixSignificantDigits) {
  const auto dir = scratch("csv");
  EXPECT_EQ(fmt6(0.123456789), "0.123457");
  EXPECT_EQ(fmt6(5e-4), "0.0005");
  TrainHistory h;
  h.epochs.push_back({1, 2.0 / 3.0, 0.5, 5e-4, 0.0});
  write_history_csv(dir / "history.csv", h);
  EXPECT_EQ(read_file(dir / "history.csv"), "epoch,train_loss,val_loss,lr\n1,0.666667,0.5,0.0005\n");
  const std::vector<std::size_t> labels{3, 1}, preds{3, 3};
  const std::vector<int> snrs{10, 10};
  const auto r = make_report(labels, preds, snrs, kNumModes);
  write_per_snr_csv(dir / "per_snr.csv", r);
  EXPECT_EQ(read_file(dir / "per_snr.csv"), "snr_db,accuracy,n\n10,0.5,2\n");
  write_confusion_csv(dir / "confusion.csv", r);
  std::ifstream c(dir / "confusion.csv");
  std::string header;
  std::getline(c, header);
  EXPECT_EQ(header, "true\\pred,8PSK,AM-DSB,AM-SSB,BPSK,CPFSK,GFSK,PAM4,QAM16,QAM64,QPSK,WBFM");
  std::size_t lines = 0;
  for (std::string l; std::getline(c, l);) ++lines;
  EXPECT_EQ(lines, 11u);
  write_ablation_csv(dir / "ablation.csv", {{AttentionVariant::Fta, "all", 0.75, 4}});
  EXPECT_EQ(read_file(dir / "ablation.csv"), "variant,snr,accuracy\nfta,all,0.75\n");
  fs::remove_all(dir);
}
