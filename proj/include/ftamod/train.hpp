#pragma once

// Training with plateau learning-rate decay and early stopping, evaluation
// reports, and the attention-variant ablation harness.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftamod/dataset.hpp"
#include "ftamod/model.hpp"
#include "ftamod/modulation.hpp"
#include "ftamod/optim.hpp"

namespace ftamod {

struct TrainConfig {
  double initial_lr = 5e-4;
  double plateau_factor = 0.1;
  std::size_t plateau_patience = 15;
  std::size_t stop_patience = 25;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 500;
  double min_delta = 1e-4;  // val-loss decrease that counts as improvement
  std::uint64_t seed = 1;

  void validate() const {
    if (!(initial_lr > 0.0)) throw std::invalid_argument("train config: learning rate must be positive");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw std::invalid_argument("train config: plateau factor must be in (0,1)");
    if (stop_patience <= plateau_patience) {
      throw std::invalid_argument("train config: stop patience must exceed plateau patience");
    }
    if (batch_size == 0) throw std::invalid_argument("train config: batch size must be positive");
    if (max_epochs == 0) throw std::invalid_argument("train config: max epochs must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // rate used during this epoch
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // epoch with the smallest validation loss
  bool stopped_early = false;

  const EpochRecord& best() const { return epochs.at(best_epoch - 1); }
};

/// Reduce-on-plateau and early stopping over the validation loss. An epoch
/// counts as improvement only when it beats the best so far by min_delta.
struct PlateauSchedule {
  double learning_rate = 5e-4;
  double factor = 0.1;
  std::size_t plateau_patience = 15;
  std::size_t stop_patience = 25;
  double min_delta = 1e-4;

  double best = std::numeric_limits<double>::infinity();
  std::size_t stop_wait = 0;
  std::size_t plateau_wait = 0;

  static PlateauSchedule from(const TrainConfig& cfg) {
    return {cfg.initial_lr, cfg.plateau_factor, cfg.plateau_patience, cfg.stop_patience, cfg.min_delta};
  }

  /// Records one epoch's validation loss; returns true when training should stop.
  bool observe(double val_loss) {
    if (val_loss < best - min_delta) {
      best = val_loss;
      stop_wait = plateau_wait = 0;
      return false;
    }
    ++stop_wait;
    if (++plateau_wait >= plateau_patience) {
      learning_rate *= factor;
      plateau_wait = 0;
    }
    return stop_wait >= stop_patience;
  }
};

template <typename T>
struct TrainResult {
  Model<T> model;  // parameters from the best-validation epoch
  TrainHistory history;
  std::vector<std::vector<T>> optimizer_state;  // at the best epoch
};

/// Epoch permutation; a function of (seed, epoch) only, so every variant
/// trained with one seed sees the same data order.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(binio::splitmix64(seed ^ binio::splitmix64(epoch)));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

/// Mean cross-entropy over a whole set, no recording.
template <typename T>
double mean_loss(const Model<T>& model, const SpectrogramSet& set, std::size_t batch_size = 64) {
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) idx.push_back(i);
    const auto x = batch_images<T>(set, idx);
    std::vector<std::size_t> lab;
    for (auto i : idx) lab.push_back(set.labels[i]);
    const auto r = model.loss(nullptr, x, one_hot<T>(lab, model.config().n_classes));
    total += static_cast<double>(r.loss[0]) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(set.size());
}

template <typename T = float>
TrainResult<T> train(const SpectrogramSet& train_set, const SpectrogramSet& val_set, const ArchitectureConfig& arch,
                     const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training split");
  if (val_set.size() == 0) throw std::invalid_argument("train: empty validation split");
  for (auto l : train_set.labels) {
    if (l >= arch.n_classes) throw std::invalid_argument("train: label exceeds the model's class count");
  }
  auto model = Model<T>::build(arch);
  auto params = model.parameter_tensors();
  RmsProp<T> opt(cfg.initial_lr, 0.9, 1e-7);

  TrainResult<T> result{model.clone(), {}, {}};
  double best_val = std::numeric_limits<double>::infinity();
  auto schedule = PlateauSchedule::from(cfg);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = epoch_order(train_set.size(), cfg.seed, epoch);
    double loss_sum = 0.0;
    Graph<T> tape;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::vector<std::size_t> lab;
      for (auto i : idx) lab.push_back(train_set.labels[i]);
      tape.clear();
      model.zero_grad();
      try {
        const auto r = model.loss(&tape, batch_images<T>(train_set, idx), one_hot<T>(lab, arch.n_classes));
        tape.backward(r.loss);
        loss_sum += static_cast<double>(r.loss[0]) * static_cast<double>(idx.size());
      } catch (const std::domain_error& e) {
        throw std::runtime_error("train: non-finite value at epoch " + std::to_string(epoch) + ", batch starting " +
                                 std::to_string(start) + ": " + e.what());
      }
      opt.step(params);
    }
    tape.clear();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.val_loss = mean_loss(model, val_set, cfg.batch_size);
    rec.lr = opt.learning_rate;
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
    }

    if (rec.val_loss < best_val) {
      best_val = rec.val_loss;
      result.history.best_epoch = epoch;
      result.model.copy_values_from(model);
      result.optimizer_state = opt.state();
    }
    const bool stop = schedule.observe(rec.val_loss);
    opt.learning_rate = schedule.learning_rate;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stop) {
      result.history.stopped_early = true;
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

struct SnrAccuracy {
  int snr_db = 0;
  double accuracy = 0.0;
  std::size_t n = 0;

  bool operator==(const SnrAccuracy&) const = default;
};

struct EvalReport {
  std::size_t n_classes = 0;
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::vector<SnrAccuracy> per_snr;             // ascending SNR
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]

  bool operator==(const EvalReport&) const = default;
};

inline EvalReport make_report(std::span<const std::size_t> labels, std::span<const std::size_t> predictions,
                              std::span<const int> snrs, std::size_t n_classes) {
  if (labels.size() != predictions.size() || labels.size() != snrs.size()) {
    throw std::invalid_argument("make_report: length mismatch");
  }
  EvalReport r;
  r.n_classes = n_classes;
  r.total = labels.size();
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::map<int, std::pair<std::size_t, std::size_t>> by_snr;  // correct, n
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes || predictions[i] >= n_classes) {
      throw std::invalid_argument("make_report: class index exceeds the model's class count");
    }
    ++r.confusion[labels[i]][predictions[i]];
    auto& cell = by_snr[snrs[i]];
    ++cell.second;
    if (labels[i] == predictions[i]) {
      ++r.correct;
      ++cell.first;
    }
  }
  r.accuracy = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  for (const auto& [snr, cell] : by_snr) {
    r.per_snr.push_back({snr, static_cast<double>(cell.first) / static_cast<double>(cell.second), cell.second});
  }
  return r;
}

/// Arg-max class per example (first index on ties).
template <typename T>
std::vector<std::size_t> predict(const Model<T>& model, const SpectrogramSet& set, std::size_t batch_size = 64) {
  std::vector<std::size_t> out;
  out.reserve(set.size());
  std::vector<std::size_t> idx;
  const std::size_t M = model.config().n_classes;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) idx.push_back(i);
    const auto probs = model.forward(nullptr, batch_images<T>(set, idx));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const T* row = probs.data() + b * M;
      out.push_back(static_cast<std::size_t>(std::max_element(row, row + M) - row));
    }
  }
  return out;
}

template <typename T>
EvalReport evaluate(const Model<T>& model, const SpectrogramSet& test_set, std::size_t batch_size = 64) {
  const std::size_t M = model.config().n_classes;
  for (auto l : test_set.labels) {
    if (l >= M) {
      throw std::invalid_argument("evaluate: corpus class index " + std::to_string(l) + " exceeds the model's " +
                                  std::to_string(M) + " classes");
    }
  }
  const auto pred = predict(model, test_set, batch_size);
  return make_report(test_set.labels, pred, test_set.snr_db, M);
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  AttentionVariant variant = AttentionVariant::None;
  std::string snr;  // "all" or the SNR in dB
  double accuracy = 0.0;
  std::size_t n = 0;
};

struct AblationRun {
  AttentionVariant variant;
  TrainHistory history;
  EvalReport report;
};

/// Trains every variant with the same seed and data order and tabulates
/// test accuracy overall and for each requested SNR (all SNRs if empty).
template <typename T = float>
std::vector<AblationRow> ablate(const SpectrogramSet& train_set, const SpectrogramSet& val_set,
                                const SpectrogramSet& test_set, const std::vector<AttentionVariant>& variants,
                                ArchitectureConfig arch, const TrainConfig& cfg, std::vector<int> snrs = {},
                                std::vector<AblationRun>* runs = nullptr) {
  if (variants.empty()) throw std::invalid_argument("ablate: no variants requested");
  if (snrs.empty()) snrs = test_set.snr_values();
  std::vector<AblationRow> rows;
  for (auto v : variants) {
    arch.variant = v;
    auto res = train<T>(train_set, val_set, arch, cfg);
    auto rep = evaluate(res.model, test_set, cfg.batch_size);
    rows.push_back({v, "all", rep.accuracy, rep.total});
    for (int s : snrs) {
      auto it = std::find_if(rep.per_snr.begin(), rep.per_snr.end(), [s](const SnrAccuracy& a) { return a.snr_db == s; });
      if (it != rep.per_snr.end()) rows.push_back({v, std::to_string(s), it->accuracy, it->n});
    }
    if (runs) runs->push_back({v, res.history, rep});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV output (6 significant digits)

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

namespace detail {
inline std::ofstream open_csv(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
  return out;
}
}  // namespace detail

inline void write_history_csv(const std::filesystem::path& p, const TrainHistory& h) {
  auto out = detail::open_csv(p);
  out << "epoch,train_loss,val_loss,lr\n";
  for (const auto& e : h.epochs) {
    out << e.epoch << ',' << fmt6(e.train_loss) << ',' << fmt6(e.val_loss) << ',' << fmt6(e.lr) << '\n';
  }
}

inline void write_per_snr_csv(const std::filesystem::path& p, const EvalReport& r) {
  auto out = detail::open_csv(p);
  out << "snr_db,accuracy,n\n";
  for (const auto& s : r.per_snr) out << s.snr_db << ',' << fmt6(s.accuracy) << ',' << s.n << '\n';
}

inline std::string class_label(std::size_t i) {
  return i < kNumModes ? std::string(to_string(mode_from_index(i))) : "class" + std::to_string(i);
}

inline void write_confusion_csv(const std::filesystem::path& p, const EvalReport& r) {
  auto out = detail::open_csv(p);
  out << "true\\pred";
  for (std::size_t j = 0; j < r.n_classes; ++j) out << ',' << class_label(j);
  out << '\n';
  for (std::size_t i = 0; i < r.n_classes; ++i) {
    out << class_label(i);
    for (std::size_t j = 0; j < r.n_classes; ++j) out << ',' << r.confusion[i][j];
    out << '\n';
  }
}

inline void write_ablation_csv(const std::filesystem::path& p, const std::vector<AblationRow>& rows) {
  auto out = detail::open_csv(p);
  out << "variant,snr,accuracy\n";
  for (const auto& r : rows) out << to_string(r.variant) << ',' << r.snr << ',' << fmt6(r.accuracy) << '\n';
}

}  // namespace ftamod
