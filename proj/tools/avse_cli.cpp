// Command-line front-end: corpus synthesis, training, enhancement,
// evaluation, spectrogram export and gradient checking.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "avse/corpus.hpp"
#include "avse/eval.hpp"
#include "avse/features.hpp"
#include "avse/model_gradcheck.hpp"
#include "avse/train.hpp"

namespace fs = std::filesystem;
using namespace avse;

namespace {

// Plain key=value config files; '#' starts a comment, blank lines ignored.
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

template <class T>
void take(std::map<std::string, std::string>& kv, const std::string& key, T& out) {
  auto it = kv.find(key);
  if (it == kv.end()) return;
  std::istringstream ss(it->second);
  ss >> out;
  if (ss.fail()) throw std::runtime_error("config: bad value for " + key + ": " + it->second);
  kv.erase(it);
}

void reject_leftovers(const std::map<std::string, std::string>& kv) {
  if (kv.empty()) return;
  std::string keys;
  for (const auto& [k, v] : kv) keys += (keys.empty() ? "" : ", ") + k;
  throw std::runtime_error("config: unknown keys: " + keys);
}

CorpusSpec corpus_spec_from(const std::string& config_path, std::uint64_t seed) {
  CorpusSpec spec;
  spec.seed = seed;
  if (config_path.empty()) return spec;
  auto kv = read_config(config_path);
  take(kv, "n_train", spec.n_train);
  take(kv, "n_test", spec.n_test);
  take(kv, "dur_min_s", spec.dur_min_s);
  take(kv, "dur_max_s", spec.dur_max_s);
  take(kv, "train_snr_min", spec.train_snr_min);
  take(kv, "train_snr_max", spec.train_snr_max);
  if (auto it = kv.find("test_snrs"); it != kv.end()) {
    spec.test_snrs.clear();
    std::istringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) spec.test_snrs.push_back(std::stoi(tok));
    kv.erase(it);
  }
  reject_leftovers(kv);
  return spec;
}

TrainConfig train_config_from(const std::string& config_path, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  if (config_path.empty()) return cfg;
  auto kv = read_config(config_path);
  take(kv, "learning_rate", cfg.learning_rate);
  take(kv, "adam_beta1", cfg.adam_beta1);
  take(kv, "adam_beta2", cfg.adam_beta2);
  take(kv, "adam_eps", cfg.adam_eps);
  take(kv, "batch_size", cfg.batch_size);
  take(kv, "bptt_steps", cfg.bptt_steps);
  take(kv, "val_fraction", cfg.val_fraction);
  take(kv, "patience_epochs", cfg.patience_epochs);
  take(kv, "min_rel_improvement", cfg.min_rel_improvement);
  take(kv, "max_epochs", cfg.max_epochs);
  take(kv, "clip_norm", cfg.clip_norm);
  int verbose = cfg.verbose ? 1 : 0;
  take(kv, "verbose", verbose);
  cfg.verbose = verbose != 0;
  reject_leftovers(kv);
  return cfg;
}

int cmd_synth(const std::string& out_dir, const std::string& config_path, std::uint64_t seed) {
  const CorpusSpec spec = corpus_spec_from(config_path, seed);
  const DatasetManifest manifest = build_corpus(spec, out_dir);
  std::printf("wrote %zu records to %s\n", manifest.records.size(),
              (fs::path(out_dir) / "manifest.tsv").string().c_str());
  return 0;
}

int cmd_train(const std::string& model_name, const std::string& manifest_path,
              const std::string& out_dir, const std::string& config_path, std::uint64_t seed) {
  const ModelKind kind = model_kind_from_name(model_name);
  TrainConfig cfg = train_config_from(config_path, seed);

  const std::vector<Utterance> train_utts = load_dataset(manifest_path, "train");
  std::printf("loaded %zu training utterances\n", train_utts.size());
  const ModelConfig mcfg = ModelConfig::standard(kind);
  const FeaturePipeline pipe = fit_pipeline(train_utts, mcfg.pca_dim);
  const bool bimodal = kind == ModelKind::bimodal_bilstm;
  const FeatDataset all = featurize_all(train_utts, pipe, bimodal);

  const auto [tr_idx, va_idx] =
      split_train_val(static_cast<int>(all.size()), cfg.val_fraction, cfg.seed);
  FeatDataset tr, va;
  for (int i : tr_idx) tr.push_back(all[static_cast<std::size_t>(i)]);
  for (int i : va_idx) va.push_back(all[static_cast<std::size_t>(i)]);

  Checkpoint ckpt(mcfg);
  ckpt.model.init(cfg.seed);
  ckpt.pca = pipe.pca;
  ckpt.input_std = pipe.input_std;
  ckpt.target_std = pipe.target_std;

  const TrainReport report = train_model(ckpt.model, tr, va, cfg);

  fs::create_directories(out_dir);
  const std::string ckpt_path = (fs::path(out_dir) / (model_name + ".ckpt")).string();
  save_checkpoint(ckpt, ckpt_path);
  write_report_csv(report, (fs::path(out_dir) / "train_report.csv").string());
  write_report_summary(report, (fs::path(out_dir) / "train_summary.txt").string());
  std::printf("best val MSE %.6f at epoch %d (%s); checkpoint: %s\n", report.best_val,
              report.best_epoch, report.stop_reason.c_str(), ckpt_path.c_str());
  return 0;
}

int cmd_enhance(const std::string& ckpt_path, const std::string& in_wav,
                const std::string& out_wav, const std::string& lips_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const AudioSignal corrupted = read_wav(in_wav);
  std::vector<std::uint8_t> lips;
  bool have_lips = false;
  if (!lips_path.empty()) {
    int frames = 0;
    lips = read_lips(lips_path, &frames);
    have_lips = true;
  }
  const EnhanceResult res = enhance(ckpt, corrupted, have_lips ? &lips : nullptr);
  write_wav(out_wav, res.audio);
  std::printf("wrote %zu samples to %s\n", res.audio.samples.size(), out_wav.c_str());
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& manifest_path,
                 const std::string& out_dir) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const EvalResult res = evaluate(ckpt, manifest_path);
  fs::create_directories(out_dir);
  const std::string rows = (fs::path(out_dir) / "metrics_utterances.csv").string();
  const std::string cells = (fs::path(out_dir) / "metrics_aggregate.csv").string();
  write_eval_csv(res, rows, cells);
  for (const auto& c : res.cells)
    if (c.snr_label == "all")
      std::printf("%-8s n=%3d  mse %.4f  lsd %.2f dB  segsnr %.2f -> %.2f dB\n",
                  c.noise_kind.c_str(), c.count, c.mse_logspec, c.lsd_db, c.segsnr_in_db,
                  c.segsnr_out_db);
  std::printf("wrote %s and %s\n", rows.c_str(), cells.c_str());
  return 0;
}

int cmd_spectrogram(const std::string& in_wav, const std::string& out_pgm) {
  const AudioSignal sig = read_wav(in_wav);
  export_spectrogram(stft(sig).log_power, out_pgm);
  std::printf("wrote %s\n", out_pgm.c_str());
  return 0;
}

int cmd_gradcheck(const std::string& model_name, std::uint64_t seed) {
  const ModelKind kind = model_kind_from_name(model_name);
  const double err = run_model_gradient_check(ModelConfig::reduced(kind), seed);
  std::printf("max relative error: %.3e\n", err);
  return err < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual speech enhancement toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string config_path, out_path, model_name, manifest_path, ckpt_path, lips_path;
  std::string in_file, out_file;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic audio-visual corpus");
  synth->add_option("--out", out_path, "Output directory")->required();
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--config", config_path, "key=value corpus settings");

  auto* train = app.add_subcommand("train", "Train a model on a corpus");
  train->add_option("--model", model_name, "single_dnn|single_bilstm|bimodal")->required();
  train->add_option("--manifest", manifest_path, "Corpus manifest path")->required();
  train->add_option("--out", out_path, "Output directory")->required();
  train->add_option("--seed", seed, "Random seed");
  train->add_option("--config", config_path, "key=value training settings");

  auto* enh = app.add_subcommand("enhance", "Enhance a corrupted WAV file");
  enh->add_option("--checkpoint", ckpt_path, "Trained checkpoint")->required();
  enh->add_option("--lips", lips_path, "Lip-frame file (bimodal models)");
  enh->add_option("input", in_file, "Corrupted 16 kHz mono WAV")->required();
  enh->add_option("output", out_file, "Enhanced WAV to write")->required();

  auto* eval = app.add_subcommand("evaluate", "Run metrics over a manifest's test split");
  eval->add_option("--checkpoint", ckpt_path, "Trained checkpoint")->required();
  eval->add_option("--manifest", manifest_path, "Corpus manifest path")->required();
  eval->add_option("--out", out_path, "Output directory for CSVs")->required();

  auto* spec = app.add_subcommand("spectrogram", "Export a WAV's spectrogram as PGM");
  spec->add_option("input", in_file, "16 kHz mono WAV")->required();
  spec->add_option("output", out_file, "PGM file to write")->required();

  auto* grad = app.add_subcommand("gradcheck", "Verify model gradients at 64-bit precision");
  grad->add_option("--model", model_name, "single_dnn|single_bilstm|bimodal")->required();
  grad->add_option("--seed", seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n%s", e.what(), app.help().c_str());
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(out_path, config_path, seed);
    if (train->parsed()) return cmd_train(model_name, manifest_path, out_path, config_path, seed);
    if (enh->parsed()) return cmd_enhance(ckpt_path, in_file, out_file, lips_path);
    if (eval->parsed()) return cmd_evaluate(ckpt_path, manifest_path, out_path);
    if (spec->parsed()) return cmd_spectrogram(in_file, out_file);
    if (grad->parsed()) return cmd_gradcheck(model_name, seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
