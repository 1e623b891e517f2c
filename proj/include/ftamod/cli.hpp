#pragma once

// Command-line front end: synth | spectro | train | eval | ablate | inspect | import.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ftamod/checkpoint.hpp"
#include "ftamod/corpus.hpp"
#include "ftamod/dataset.hpp"
#include "ftamod/inspect.hpp"
#include "ftamod/modulation.hpp"
#include "ftamod/spectro.hpp"
#include "ftamod/train.hpp"

namespace ftamod::cli {

inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;
inline constexpr int kRuntimeError = 2;

namespace detail {

inline std::vector<std::string> all_mode_tags() { return {kModeTags.begin(), kModeTags.end()}; }

inline std::vector<double> default_snr_grid() { return CorpusSpec{}.snr_grid_db; }

inline std::vector<std::string> all_variant_tags() {
  std::vector<std::string> v;
  for (auto x : kAllVariants) v.emplace_back(to_string(x));
  return v;
}

// Options shared by train and ablate.
struct ModelOptions {
  std::size_t image_size = 100;
  std::size_t frame_length = 40;
  std::size_t frame_shift = 2;
  std::string window = "hamming";
  bool colormap = false;
  std::vector<std::size_t> conv_channels{64, 32, 12, 8};
  std::size_t dense_width = 128;
  std::size_t cam_reduction = 4;
  std::size_t n_classes = kNumModes;
  double lr = 5e-4;
  double plateau_factor = 0.1;
  std::size_t plateau_patience = 15;
  std::size_t stop_patience = 25;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 500;
  double min_delta = 1e-4;

  void add_to(CLI::App* app) {
    app->add_option("--image-size", image_size, "Spectrogram image side length")->check(CLI::PositiveNumber);
    app->add_option("--frame-length", frame_length, "STFT frame length L")->check(CLI::PositiveNumber);
    app->add_option("--frame-shift", frame_shift, "STFT frame shift K")->check(CLI::PositiveNumber);
    app->add_option("--window", window, "STFT window")->check(CLI::IsMember({"hamming", "rectangular"}));
    app->add_flag("--colormap", colormap, "Use the 3-segment colormap instead of gray replication");
    app->add_option("--conv-channels", conv_channels, "Kernels per conv layer")->delimiter(',');
    app->add_option("--dense-width", dense_width, "Hidden dense layer width")->check(CLI::PositiveNumber);
    app->add_option("--cam-reduction", cam_reduction, "Channel-attention MLP reduction ratio")->check(CLI::PositiveNumber);
    app->add_option("--n-classes", n_classes, "Output classes")->check(CLI::Range(2, 255));
    app->add_option("--lr", lr, "Initial learning rate");
    app->add_option("--plateau-factor", plateau_factor, "Learning-rate decay factor on plateau");
    app->add_option("--plateau-patience", plateau_patience, "Epochs without improvement before decay");
    app->add_option("--stop-patience", stop_patience, "Epochs without improvement before stopping");
    app->add_option("--batch-size", batch_size, "Minibatch size")->check(CLI::PositiveNumber);
    app->add_option("--max-epochs", max_epochs, "Epoch limit")->check(CLI::PositiveNumber);
    app->add_option("--min-delta", min_delta, "Validation-loss decrease counted as improvement");
  }

  InputConfig input() const {
    InputConfig in;
    in.stft.frame_length = frame_length;
    in.stft.frame_shift = frame_shift;
    in.stft.window = parse_window(window);
    in.stft.validate();
    in.image.size = image_size;
    in.image.colormap = colormap;
    return in;
  }

  ArchitectureConfig arch(AttentionVariant v, std::uint64_t seed) const {
    ArchitectureConfig a;
    a.height = a.width = image_size;
    a.channels = 3;
    a.conv_channels = conv_channels;
    a.dense_width = dense_width;
    a.n_classes = n_classes;
    a.variant = v;
    a.cam_reduction = cam_reduction;
    a.seed = seed;
    a.validate();
    return a;
  }

  TrainConfig train(std::uint64_t seed) const {
    TrainConfig t;
    t.initial_lr = lr;
    t.plateau_factor = plateau_factor;
    t.plateau_patience = plateau_patience;
    t.stop_patience = stop_patience;
    t.batch_size = batch_size;
    t.max_epochs = max_epochs;
    t.min_delta = min_delta;
    t.seed = seed;
    t.validate();
    return t;
  }
};

// Config echo for one subcommand. Unset optional values are left out so the
// echo parses back to the same defaults.
inline std::string effective_config(const CLI::App& sub) {
  std::istringstream in(sub.config_to_str(true, false));
  std::string text = "[" + sub.get_name() + "]\n", line;
  while (std::getline(in, line)) {
    if (line.ends_with("=\"\"")) continue;
    text += line + "\n";
  }
  return text;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

inline std::vector<ModulationMode> parse_modes(const std::vector<std::string>& tags) {
  std::vector<ModulationMode> m;
  for (const auto& t : tags) m.push_back(parse_mode(t));
  return m;
}

}  // namespace detail

/// Parses argv and runs the selected subcommand. Every run echoes its
/// effective configuration (CLI11 config syntax, accepted back by --config)
/// to `out` and to an `effective_config` file next to its artifacts.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Modulation recognition with frequency-time attention over STFT spectrograms", "ftamod"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "Read options from a config file ([subcommand] sections of key=value)");

  std::uint64_t seed = 1;
  unsigned threads = 1;
  auto add_common = [&](CLI::App* sub) {
    sub->fallthrough();
    sub->footer("Options may also be read from a file with --config FILE (see ftamod --help).");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--threads", threads, "Worker threads for data preparation")->check(CLI::Range(1u, 256u));
  };

  // synth
  auto* synth = app.add_subcommand("synth", "Synthesize a labeled FTAD corpus");
  std::vector<std::string> modes = detail::all_mode_tags();
  std::vector<double> snrs = detail::default_snr_grid();
  std::vector<std::size_t> counts{700, 100, 200};
  std::size_t length = 128;
  std::filesystem::path synth_out;
  ChannelProfile profile;
  double silence_prob = 0.2;
  add_common(synth);
  synth->add_option("--modes", modes, "Modulation tags")
      ->delimiter(',')
      ->check(CLI::Validator(
          [](std::string& tag) {
            try {
              (void)parse_mode(tag);
              return std::string();
            } catch (const std::exception& e) {
              return std::string(e.what());
            }
          },
          "MODE"));
  synth->add_option("--snrs", snrs, "SNR grid in dB")->delimiter(',');
  synth->add_option("--counts", counts, "Records per (mode, SNR): train,val,test")->delimiter(',')->expected(3);
  synth->add_option("--len", length, "Samples per signal")->check(CLI::PositiveNumber);
  synth->add_option("--silence-prob", silence_prob, "Probability of a silent segment in analog sources")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--max-cfo", profile.max_cfo_fraction, "Max carrier offset (fraction of sample rate)");
  synth->add_option("--max-sro-ppm", profile.max_sro_ppm, "Max sampling-rate offset (ppm)");
  synth->add_option("--multipath-taps", profile.multipath_taps, "Multipath taps (0 or 1: none)");
  synth->add_option("--out", synth_out, "Output corpus path")->required();

  // spectro
  auto* spectro = app.add_subcommand("spectro", "Render one record's spectrogram as 16-bit PGM");
  std::filesystem::path spectro_in, spectro_out;
  std::size_t spectro_index = 0;
  bool spectro_power = false;
  detail::ModelOptions spectro_opts;
  add_common(spectro);
  spectro->add_option("--in", spectro_in, "Input corpus")->required()->check(CLI::ExistingFile);
  spectro->add_option("--index", spectro_index, "Record index");
  spectro->add_option("--frame-length", spectro_opts.frame_length, "STFT frame length L")->check(CLI::PositiveNumber);
  spectro->add_option("--frame-shift", spectro_opts.frame_shift, "STFT frame shift K")->check(CLI::PositiveNumber);
  spectro->add_option("--window", spectro_opts.window, "STFT window")->check(CLI::IsMember({"hamming", "rectangular"}));
  spectro->add_option("--image-size", spectro_opts.image_size, "Image side length")->check(CLI::PositiveNumber);
  spectro->add_flag("--power", spectro_power, "Write the normalized log-power grid before resizing");
  spectro->add_option("--out", spectro_out, "Output PGM path")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on a corpus");
  std::filesystem::path train_data, train_out;
  std::string variant = "fta";
  bool per_snr = false;
  detail::ModelOptions train_opts;
  add_common(train_cmd);
  train_cmd->add_option("--data", train_data, "Corpus (FTAD)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--variant", variant, "Attention variant")->check(CLI::IsMember(detail::all_variant_tags()));
  train_cmd->add_flag("--per-snr", per_snr, "Train one model per SNR (run/snr_<dB>/)");
  train_opts.add_to(train_cmd);
  train_cmd->add_option("--out", train_out, "Run directory")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus test split");
  std::filesystem::path eval_ckpt, eval_data, eval_out = ".";
  std::vector<int> eval_snrs;
  std::size_t eval_batch = 64;
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint (FTAC)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_data, "Corpus (FTAD)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--snr", eval_snrs, "Restrict to these SNRs")->delimiter(',')->default_str("");
  eval_cmd->add_option("--batch-size", eval_batch, "Inference batch size")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", eval_out, "Output directory");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare attention variants");
  std::filesystem::path ablate_data, ablate_out;
  std::vector<std::string> variants = detail::all_variant_tags();
  std::vector<int> ablate_snrs;
  detail::ModelOptions ablate_opts;
  add_common(ablate_cmd);
  ablate_cmd->add_option("--data", ablate_data, "Corpus (FTAD)")->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--variants", variants, "Variants to compare")->delimiter(',')->check(
      CLI::IsMember(detail::all_variant_tags()));
  ablate_cmd->add_option("--snrs", ablate_snrs, "SNRs to tabulate (default: all)")->delimiter(',')->default_str("");
  ablate_opts.add_to(ablate_cmd);
  ablate_cmd->add_option("--out", ablate_out, "Output directory")->required();

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "Dump attention feature maps for one record");
  std::filesystem::path insp_ckpt, insp_data, insp_out;
  std::size_t insp_index = 0, insp_layer = 0;
  add_common(inspect_cmd);
  inspect_cmd->add_option("--checkpoint", insp_ckpt, "Checkpoint (FTAC)")->required()->check(CLI::ExistingFile);
  inspect_cmd->add_option("--data", insp_data, "Corpus (FTAD)")->required()->check(CLI::ExistingFile);
  inspect_cmd->add_option("--index", insp_index, "Record index");
  inspect_cmd->add_option("--layer", insp_layer, "Conv layer index");
  inspect_cmd->add_option("--out", insp_out, "Output directory")->required();

  // import
  auto* import_cmd = app.add_subcommand("import", "Validate a converted corpus and its class mapping");
  std::filesystem::path imp_in, imp_map, imp_out;
  std::vector<std::size_t> imp_counts;
  add_common(import_cmd);
  import_cmd->add_option("--in", imp_in, "Converted corpus (FTAD)")->required()->check(CLI::ExistingFile);
  import_cmd->add_option("--class-map", imp_map, "index,tag cross-check file")->check(CLI::ExistingFile);
  import_cmd->add_option("--expect-counts", imp_counts, "Required train,val,test per (mode, SNR)")
      ->delimiter(',')
      ->expected(3)
      ->always_capture_default(false)
      ->default_str("");
  import_cmd->add_option("--out", imp_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string effective = detail::effective_config(*sub);
  out << effective;

  try {
    if (sub == synth) {
      CorpusSpec spec;
      spec.modes = detail::parse_modes(modes);
      spec.snr_grid_db = snrs;
      spec.per_class_per_snr = {counts[0], counts[1], counts[2]};
      spec.signal_length = length;
      spec.seed = seed;
      spec.synth.silence_prob = silence_prob;
      spec.channel = profile;
      const auto corpus = synth_corpus(spec, threads);
      write_ftad(synth_out, corpus);
      detail::write_text(synth_out.string() + ".effective_config", effective);
      out << "wrote " << corpus.records.size() << " records (" << corpus.count(Split::Train) << " train, "
          << corpus.count(Split::Val) << " val, " << corpus.count(Split::Test) << " test) to " << synth_out.string()
          << "\n";
    } else if (sub == spectro) {
      const auto corpus = read_ftad(spectro_in);
      if (spectro_index >= corpus.records.size()) {
        throw std::out_of_range("record index " + std::to_string(spectro_index) + " out of range (" +
                                std::to_string(corpus.records.size()) + " records)");
      }
      const auto in = spectro_opts.input();
      const auto sp = spectrogram(to_signal(corpus.records[spectro_index]), in.stft, in.image);
      if (spectro_power) {
        write_pgm16(spectro_out, log_normalize(sp.power), sp.rows, sp.cols);
      } else {
        write_pgm16(spectro_out, image_channel(sp), sp.image_size, sp.image_size);
      }
      detail::write_text(spectro_out.string() + ".effective_config", effective);
      out << "wrote " << spectro_out.string() << "\n";
    } else if (sub == train_cmd) {
      const auto corpus = read_ftad(train_data);
      const auto in = train_opts.input();
      const auto arch = train_opts.arch(parse_variant(variant), seed);
      const auto tcfg = train_opts.train(seed);
      std::filesystem::create_directories(train_out);
      detail::write_text(train_out / "effective_config", effective);
      const auto cache = cache_dir_from_env();
      const auto tr_all = make_spectrogram_set(corpus, Split::Train, in, threads, cache);
      const auto va_all = make_spectrogram_set(corpus, Split::Val, in, threads, cache);
      auto run_one = [&](const SpectrogramSet& tr, const SpectrogramSet& va, const std::filesystem::path& dir) {
        std::filesystem::create_directories(dir);
        auto res = train<float>(tr, va, arch, tcfg, [&](const EpochRecord& e) {
          out << "epoch " << e.epoch << " train_loss " << fmt6(e.train_loss) << " val_loss " << fmt6(e.val_loss)
              << " lr " << fmt6(e.lr) << "\n";
        });
        write_checkpoint(dir / "model.ftac", make_checkpoint(res.model, in, res.optimizer_state));
        write_history_csv(dir / "history.csv", res.history);
        out << "best epoch " << res.history.best_epoch << " val_loss " << fmt6(res.history.best().val_loss) << " -> "
            << (dir / "model.ftac").string() << "\n";
      };
      if (per_snr) {
        for (int s : tr_all.snr_values()) {
          out << "SNR " << s << " dB\n";
          run_one(tr_all.with_snr(s), va_all.with_snr(s), train_out / ("snr_" + std::to_string(s)));
        }
      } else {
        run_one(tr_all, va_all, train_out);
      }
    } else if (sub == eval_cmd) {
      const auto ck = read_checkpoint(eval_ckpt);
      const auto corpus = read_ftad(eval_data);
      auto test = make_spectrogram_set(corpus, Split::Test, ck.input, threads, cache_dir_from_env());
      if (!eval_snrs.empty()) {
        std::set<int> keep(eval_snrs.begin(), eval_snrs.end());
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < test.size(); ++i) {
          if (keep.contains(test.snr_db[i])) idx.push_back(i);
        }
        test = test.subset(idx);
      }
      if (test.size() == 0) throw std::runtime_error("no test records to evaluate");
      const auto rep = evaluate(ck.model(), test, eval_batch);
      std::filesystem::create_directories(eval_out);
      write_per_snr_csv(eval_out / "per_snr.csv", rep);
      write_confusion_csv(eval_out / "confusion.csv", rep);
      detail::write_text(eval_out / "effective_config", effective);
      out << "accuracy " << fmt6(rep.accuracy) << " (" << rep.correct << "/" << rep.total << ")\n";
    } else if (sub == ablate_cmd) {
      const auto corpus = read_ftad(ablate_data);
      const auto in = ablate_opts.input();
      const auto cache = cache_dir_from_env();
      const auto tr = make_spectrogram_set(corpus, Split::Train, in, threads, cache);
      const auto va = make_spectrogram_set(corpus, Split::Val, in, threads, cache);
      const auto te = make_spectrogram_set(corpus, Split::Test, in, threads, cache);
      std::vector<AttentionVariant> vs;
      for (const auto& v : variants) vs.push_back(parse_variant(v));
      std::filesystem::create_directories(ablate_out);
      detail::write_text(ablate_out / "effective_config", effective);
      const auto rows =
          ablate<float>(tr, va, te, vs, ablate_opts.arch(AttentionVariant::None, seed), ablate_opts.train(seed), ablate_snrs);
      write_ablation_csv(ablate_out / "ablation.csv", rows);
      for (const auto& r : rows) out << to_string(r.variant) << " snr=" << r.snr << " accuracy " << fmt6(r.accuracy) << "\n";
    } else if (sub == inspect_cmd) {
      const auto ck = read_checkpoint(insp_ckpt);
      const auto corpus = read_ftad(insp_data);
      if (insp_index >= corpus.records.size()) throw std::out_of_range("record index out of range");
      const auto sp = spectrogram(to_signal(corpus.records[insp_index]), ck.input.stft, ck.input.image);
      const std::vector<float> img(sp.image.begin(), sp.image.end());
      const auto res = inspect_maps(ck.model(), img, insp_layer, insp_out);
      detail::write_text(insp_out / "effective_config", effective);
      if (res.passthrough) out << "variant none has no attention maps; only F was written\n";
      for (const auto& m : res.maps) out << "wrote " << (insp_out / (m + ".pgm")).string() << "\n";
    } else if (sub == import_cmd) {
      const auto corpus = read_ftad(imp_in);
      if (!imp_map.empty()) {
        std::ifstream mf(imp_map);
        std::string line;
        std::size_t n = 0;
        while (std::getline(mf, line)) {
          if (line.empty() || line[0] == '#' || line.rfind("index", 0) == 0) continue;
          const auto comma = line.find(',');
          if (comma == std::string::npos) throw std::runtime_error("class map line without ',': " + line);
          const auto idx = std::stoull(line.substr(0, comma));
          const auto tag = line.substr(comma + 1);
          if (idx >= kNumModes || class_index(parse_mode(tag)) != idx) {
            throw std::runtime_error("class map disagrees with the canonical order at '" + line + "'");
          }
          ++n;
        }
        if (n != kNumModes) throw std::runtime_error("class map lists " + std::to_string(n) + " classes, expected 11");
      }
      std::map<std::tuple<int, int, int>, std::size_t> cells;  // split, mode, snr
      for (const auto& r : corpus.records) ++cells[{static_cast<int>(r.split), static_cast<int>(r.mode), r.snr_db}];
      std::filesystem::create_directories(imp_out);
      {
        std::ofstream s(imp_out / "summary.csv", std::ios::trunc);
        s << "split,mode,snr_db,count\n";
        for (const auto& [k, n] : cells) {
          s << kSplitNames[std::get<0>(k)] << ',' << to_string(mode_from_index(std::get<1>(k))) << ',' << std::get<2>(k)
            << ',' << n << '\n';
        }
      }
      detail::write_text(imp_out / "effective_config", effective);
      if (!imp_counts.empty()) {
        std::set<std::pair<int, int>> mode_snr;
        for (const auto& [k, n] : cells) mode_snr.insert({std::get<1>(k), std::get<2>(k)});
        for (const auto& [m, s] : mode_snr) {
          for (int sp = 0; sp < 3; ++sp) {
            auto it = cells.find({sp, m, s});
            const std::size_t got = it == cells.end() ? 0 : it->second;
            if (got != imp_counts[static_cast<std::size_t>(sp)]) {
              throw std::runtime_error("cell (" + std::string(to_string(mode_from_index(static_cast<std::size_t>(m)))) +
                                       ", " + std::to_string(s) + " dB, " + std::string(kSplitNames[static_cast<std::size_t>(sp)]) +
                                       ") holds " + std::to_string(got) + " records, expected " +
                                       std::to_string(imp_counts[static_cast<std::size_t>(sp)]));
            }
          }
        }
      }
      out << "validated " << corpus.records.size() << " records, " << corpus.n_modes << " modes, " << corpus.n_snrs
          << " SNRs\n";
    }
  } catch (const std::exception& e) {
    err << "ftamod " << sub->get_name() << ": " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace ftamod::cli
