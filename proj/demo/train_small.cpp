// Library walk-through: synthesize a small corpus, train an FTA model for a
// few epochs, then print per-SNR accuracy and the confusion matrix.

#include <cstdio>

#include "ftamod/corpus.hpp"
#include "ftamod/dataset.hpp"
#include "ftamod/train.hpp"

int main() {
  using namespace ftamod;

  CorpusSpec spec;
  spec.modes = {ModulationMode::Bpsk, ModulationMode::Qpsk, ModulationMode::Gfsk, ModulationMode::AmDsb};
  spec.snr_grid_db = {0, 10};
  spec.per_class_per_snr = {100, 20, 25};
  const Corpus corpus = synth_corpus(spec);

  InputConfig in;
  in.image.size = 32;
  const auto train_set = make_spectrogram_set(corpus, Split::Train, in);
  const auto val_set = make_spectrogram_set(corpus, Split::Val, in);
  const auto test_set = make_spectrogram_set(corpus, Split::Test, in);

  ArchitectureConfig arch;
  arch.height = arch.width = in.image.size;
  arch.conv_channels = {16, 8};
  arch.dense_width = 32;
  arch.variant = AttentionVariant::Fta;

  TrainConfig cfg;
  cfg.max_epochs = 15;
  cfg.initial_lr = 2e-3;
  cfg.batch_size = 32;

  const auto result = train<float>(train_set, val_set, arch, cfg, [](const EpochRecord& e) {
    std::printf("epoch %2zu  train %.4f  val %.4f  lr %g\n", e.epoch, e.train_loss, e.val_loss, e.lr);
  });

  const auto report = evaluate(result.model, test_set);
  std::printf("test accuracy %.3f (%zu/%zu)\n", report.accuracy, report.correct, report.total);
  for (const auto& s : report.per_snr) std::printf("  %3d dB  %.3f  n=%zu\n", s.snr_db, s.accuracy, s.n);

  std::printf("confusion (rows true, columns predicted), used classes only:\n");
  for (auto m : spec.modes) {
    std::printf("  %-7s", std::string(to_string(m)).c_str());
    for (auto p : spec.modes) std::printf(" %4zu", report.confusion[class_index(m)][class_index(p)]);
    std::printf("\n");
  }
}
