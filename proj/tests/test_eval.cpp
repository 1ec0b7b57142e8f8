#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "avse/corpus.hpp"
#include "avse/eval.hpp"
#include "avse/features.hpp"

using namespace avse;
namespace fs = std::filesystem;

namespace {

Standardizer unit_std(int dim) {
  Standardizer s;
  s.mean.assign(static_cast<std::size_t>(dim), 0.0);
  s.std.assign(static_cast<std::size_t>(dim), 1.0);
  return s;
}

struct TestCorpus {
  fs::path dir;
  DatasetManifest manifest;
  FeaturePipeline pipe;
  std::vector<Utterance> train;

  explicit TestCorpus(const std::string& name, int n_train, int n_test, int pca_dim) {
    dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    CorpusSpec spec;
    spec.n_train = n_train;
    spec.n_test = n_test;
    spec.dur_min_s = 0.8;
    spec.dur_max_s = 1.0;
    spec.seed = 2024;
    manifest = build_corpus(spec, dir.string());
    train = load_dataset((dir / "manifest.tsv").string(), "train");
    pipe = fit_pipeline(train, pca_dim);
  }
  ~TestCorpus() { fs::remove_all(dir); }
  std::string manifest_path() const { return (dir / "manifest.tsv").string(); }
};

Checkpoint make_checkpoint(ModelKind kind, const FeaturePipeline& pipe, std::uint64_t seed) {
  ModelConfig cfg = ModelConfig::standard(kind);
  cfg.pca_dim = pipe.pca.out_dim();
  Checkpoint ckpt(cfg);
  ckpt.model.init(seed);
  ckpt.pca = pipe.pca;
  ckpt.input_std = pipe.input_std;
  ckpt.target_std = pipe.target_std;
  return ckpt;
}

}  // namespace

TEST_CASE("metric_mse: zero at equality, scales with the target standardizer") {
  Tensor a({3, kBins}), b({3, kBins});
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = 0.1f * static_cast<float>(i % 7);
  b.data = a.data;
  Standardizer s = unit_std(kBins);
  CHECK(metric_mse(a, b, s) == doctest::Approx(0.0));

  for (float& v : b.data) v += 0.3f;  // constant log-power offset
  CHECK(metric_mse(a, b, s) == doctest::Approx(0.09).epsilon(1e-5));
  for (double& v : s.std) v = 2.0;  // standardized diff halves -> MSE quarters
  CHECK(metric_mse(a, b, s) == doctest::Approx(0.0225).epsilon(1e-5));
}

TEST_CASE("metric_lsd: constant offset c gives (10/ln10)*|c| dB") {
  Tensor a({4, kBins}), b({4, kBins});
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = std::sin(0.01 * static_cast<double>(i));
  b.data = a.data;
  CHECK(metric_lsd(a, b) == doctest::Approx(0.0));
  for (float& v : b.data) v -= 0.2f;
  CHECK(metric_lsd(a, b) == doctest::Approx(10.0 / std::log(10.0) * 0.2).epsilon(1e-4));
}

TEST_CASE("metrics truncate to the shorter utterance") {
  Tensor a({5, kBins}), b({3, kBins});
  for (float& v : a.data) v = 1.0f;
  for (float& v : b.data) v = 1.0f;
  CHECK(metric_lsd(a, b) == doctest::Approx(0.0));
  CHECK(metric_mse(a, b, unit_std(kBins)) == doctest::Approx(0.0));
}

TEST_CASE("metric_segsnr: exact hand values and clamping") {
  // identical signals: every segment saturates at the +35 dB clamp
  AudioSignal ref;
  ref.samples.assign(640, 0.1f);
  CHECK(metric_segsnr(ref, ref) == doctest::Approx(35.0));

  // error power equal to reference power: exactly 0 dB
  AudioSignal twice = ref;
  for (float& v : twice.samples) v *= 2.0f;
  CHECK(metric_segsnr(twice, ref) == doctest::Approx(0.0).epsilon(1e-9));

  // huge error clamps at -10 dB
  AudioSignal wild = ref;
  for (float& v : wild.samples) v = 5.0f;
  CHECK(metric_segsnr(wild, ref) == doctest::Approx(-10.0));

  // silent reference segments are skipped
  AudioSignal half_silent;
  half_silent.samples.assign(640, 0.0f);
  for (int i = 0; i < 320; ++i) half_silent.samples[static_cast<std::size_t>(i)] = 0.1f;
  AudioSignal sig = half_silent;
  for (int i = 0; i < 320; ++i) sig.samples[static_cast<std::size_t>(i)] = 0.2f;
  CHECK(metric_segsnr(sig, half_silent) == doctest::Approx(0.0).epsilon(1e-9));

  AudioSignal silence;
  silence.samples.assign(640, 0.0f);
  CHECK_THROWS(metric_segsnr(sig, silence));
}

TEST_CASE("spectrogram export: exact P5 bytes, low frequency at the bottom") {
  Tensor spec({5, kBins});
  for (float& v : spec.data) v = -100.0f;     // far below the -80 dB floor
  for (int t = 0; t < 5; ++t) spec.at2(t, 0) = 0.0f;  // loud DC bin
  const fs::path path = fs::temp_directory_path() / "avse_spec_test.pgm";
  export_spectrogram(spec, path.string());

  std::ifstream is(path, std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  is.get();  // single whitespace byte before the raster
  CHECK(magic == "P5");
  CHECK(w == 5);
  CHECK(h == kBins);
  CHECK(maxval == 255);
  std::vector<unsigned char> px(static_cast<std::size_t>(w) * h);
  is.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  REQUIRE(is.gcount() == static_cast<std::streamsize>(px.size()));
  // bottom row (last in raster order) carries the loud bin 0
  for (int t = 0; t < w; ++t) {
    CHECK(px[static_cast<std::size_t>(h - 1) * w + t] == 255);
    CHECK(px[static_cast<std::size_t>(t)] == 0);  // top row: quietest bin
  }
  REQUIRE(spec.ndim() == 2);
  Tensor bad({2});
  CHECK_THROWS(export_spectrogram(bad, path.string()));
  fs::remove(path);
}

TEST_CASE("enhance: output length, range, determinism") {
  TestCorpus corpus("avse_eval_enh", 6, 1, 40);
  Checkpoint ckpt = make_checkpoint(ModelKind::single_bilstm, corpus.pipe, 11);

  const Utterance& u = corpus.train.front();
  EnhanceResult r1 = enhance(ckpt, u.corrupted);
  const int T = stft_num_frames(u.corrupted.samples.size());
  CHECK(r1.pred_logpow.dim(0) == T);
  CHECK(r1.pred_logpow.dim(1) == kBins);
  CHECK(r1.audio.samples.size() == static_cast<std::size_t>(T - 1) * 160 + 320);
  for (float v : r1.audio.samples) {
    CHECK(std::isfinite(v));
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  EnhanceResult r2 = enhance(ckpt, u.corrupted);
  CHECK(r1.audio.samples == r2.audio.samples);
}

TEST_CASE("enhance: bimodal checkpoints demand lip frames") {
  TestCorpus corpus("avse_eval_bim", 6, 1, 40);
  Checkpoint ckpt = make_checkpoint(ModelKind::bimodal_bilstm, corpus.pipe, 12);
  const Utterance& u = corpus.train.front();
  CHECK_THROWS(enhance(ckpt, u.corrupted));
  CHECK_THROWS(enhance(ckpt, u.corrupted, nullptr));
  EnhanceResult r = enhance(ckpt, u.corrupted, &u.lips);
  CHECK(r.pred_logpow.dim(1) == kBins);
  // wrong lip byte count is rejected
  std::vector<std::uint8_t> short_lips(u.lips.begin(), u.lips.end() - 64 * 64);
  CHECK_THROWS(enhance(ckpt, u.corrupted, &short_lips));
}

TEST_CASE("evaluate: factorial table, aggregate consistency, split handling") {
  TestCorpus corpus("avse_eval_table", 6, 2, 40);
  Checkpoint ckpt = make_checkpoint(ModelKind::single_dnn, corpus.pipe, 13);

  EvalResult res = evaluate(ckpt, corpus.manifest_path());
  CHECK(res.rows.size() == 2u * 3u * 6u);
  CHECK(res.cells.size() == 3u * 6u + 3u);  // per (noise, snr) plus per-noise "all"

  // every aggregate equals the mean of its rows
  for (const EvalCell& c : res.cells) {
    double mse = 0, lsd = 0, si = 0, so = 0;
    int n = 0;
    for (const EvalRow& r : res.rows) {
      if (r.noise_kind != c.noise_kind) continue;
      if (c.snr_label != "all" && std::to_string(static_cast<int>(r.snr_db)) != c.snr_label)
        continue;
      mse += r.mse_logspec;
      lsd += r.lsd_db;
      si += r.segsnr_in_db;
      so += r.segsnr_out_db;
      ++n;
    }
    REQUIRE(n == c.count);
    CHECK(c.mse_logspec == doctest::Approx(mse / n).epsilon(1e-9));
    CHECK(c.lsd_db == doctest::Approx(lsd / n).epsilon(1e-9));
    CHECK(c.segsnr_in_db == doctest::Approx(si / n).epsilon(1e-9));
    CHECK(c.segsnr_out_db == doctest::Approx(so / n).epsilon(1e-9));
  }

  // CSV export writes both files with one line per row/cell plus a header
  const fs::path rows_csv = corpus.dir / "rows.csv";
  const fs::path cells_csv = corpus.dir / "cells.csv";
  write_eval_csv(res, rows_csv.string(), cells_csv.string());
  auto count_lines = [](const fs::path& p) {
    std::ifstream is(p);
    int n = 0;
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) ++n;
    return n;
  };
  CHECK(count_lines(rows_csv) == static_cast<int>(res.rows.size()) + 1);
  CHECK(count_lines(cells_csv) == static_cast<int>(res.cells.size()) + 1);
}

TEST_CASE("evaluate: a manifest without test records is rejected") {
  const fs::path dir = fs::temp_directory_path() / "avse_eval_trainonly";
  fs::remove_all(dir);
  CorpusSpec spec;
  spec.n_train = 6;
  spec.n_test = 0;
  spec.dur_min_s = 0.8;
  spec.dur_max_s = 1.0;
  spec.seed = 55;
  build_corpus(spec, dir.string());
  auto train = load_dataset((dir / "manifest.tsv").string(), "train");
  FeaturePipeline pipe = fit_pipeline(train, 40);
  Checkpoint ckpt = make_checkpoint(ModelKind::single_dnn, pipe, 14);
  CHECK_THROWS(evaluate(ckpt, (dir / "manifest.tsv").string()));
  fs::remove_all(dir);
}
