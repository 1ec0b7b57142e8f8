#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "avse/corpus.hpp"
#include "avse/features.hpp"
#include "avse/synth.hpp"

using namespace avse;
namespace fs = std::filesystem;

TEST_CASE("synth_speech: length, pauses, envelope range, determinism") {
  std::mt19937_64 rng(5);
  SpeechSample s = synth_speech(1.25, rng);
  CHECK(s.audio.samples.size() == static_cast<std::size_t>(std::lround(1.25 * 16000)));
  CHECK(s.envelope.size() == static_cast<std::size_t>(stft_num_frames(s.audio.samples.size())));
  int quiet = 0;
  for (float v : s.envelope) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    if (v < 0.05f) ++quiet;
  }
  CHECK(quiet * 10 >= static_cast<int>(s.envelope.size()));  // >= 10% pauses
  float peak = 0;
  for (float v : s.audio.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(0.5f).epsilon(1e-3));

  std::mt19937_64 r1(99), r2(99);
  SpeechSample a = synth_speech(0.8, r1), b = synth_speech(0.8, r2);
  CHECK(a.audio.samples == b.audio.samples);
  CHECK_THROWS(synth_speech(0.3, rng));
}

TEST_CASE("lip frames: semi-axis formula and monotone intensity") {
  std::vector<float> img(64 * 64);
  // closed mouth: vertical semi-axis 4
  render_lip_frame(0.0f, 32.0f, 32.0f, 22.0f, img.data());
  auto fg_rows = [&img] {
    std::set<int> rows;
    for (int i = 0; i < 64; ++i)
      for (int j = 0; j < 64; ++j)
        if (img[static_cast<std::size_t>(i) * 64 + j] > 0.5f) rows.insert(i);
    return rows;
  };
  auto r0 = fg_rows();
  CHECK(static_cast<int>(r0.size()) >= 7);  // 2*4-1 .. 2*4+1 rows
  CHECK(static_cast<int>(r0.size()) <= 9);

  // open mouth: semi-axis 24
  render_lip_frame(1.0f, 32.0f, 32.0f, 22.0f, img.data());
  auto r1 = fg_rows();
  CHECK(static_cast<int>(r1.size()) >= 47);
  CHECK(static_cast<int>(r1.size()) <= 49);

  // mean intensity strictly increases with the envelope at fixed geometry
  double prev = -1.0;
  for (float env : {0.0f, 0.25f, 0.5f, 0.75f, 1.0f}) {
    render_lip_frame(env, 32.0f, 32.0f, 22.0f, img.data());
    double mean = 0;
    for (float v : img) mean += v;
    CHECK(mean > prev);
    prev = mean;
  }
}

TEST_CASE("synth_lips: count, range, correlation with envelope") {
  std::mt19937_64 rng(17);
  std::vector<float> env;
  for (int i = 0; i < 60; ++i) env.push_back(0.5f + 0.5f * std::sin(0.3 * i));
  auto lips = synth_lips(env, rng);
  REQUIRE(lips.size() == env.size() * 64 * 64);

  // envelope vs mean pixel intensity correlation > 0.8
  std::vector<double> mi;
  for (std::size_t t = 0; t < env.size(); ++t) {
    double m = 0;
    for (int p = 0; p < 64 * 64; ++p) m += lips[t * 64 * 64 + static_cast<std::size_t>(p)];
    mi.push_back(m / (64.0 * 64.0 * 255.0));
  }
  double me = 0, mm = 0;
  for (std::size_t t = 0; t < env.size(); ++t) {
    me += env[t];
    mm += mi[t];
  }
  me /= static_cast<double>(env.size());
  mm /= static_cast<double>(env.size());
  double see = 0, smm = 0, sem = 0;
  for (std::size_t t = 0; t < env.size(); ++t) {
    see += (env[t] - me) * (env[t] - me);
    smm += (mi[t] - mm) * (mi[t] - mm);
    sem += (env[t] - me) * (mi[t] - mm);
  }
  CHECK(sem / std::sqrt(see * smm) > 0.8);
}

TEST_CASE("alarm noise concentrates power at the beep tones") {
  std::mt19937_64 rng(23);
  AudioSignal alarm = synth_noise(NoiseKind::alarm, 2.0, rng);
  SpectralFrames sp = stft(alarm);
  // over loud frames, the spectral argmax collects on very few bins
  std::set<int> peaks;
  int loud = 0;
  for (int t = 0; t < sp.frames(); ++t) {
    int arg = 0;
    double best = -1e30, total = 0;
    for (int f = 0; f < kBins; ++f) {
      const double p = std::exp(sp.log_power.at2(t, f));
      total += p;
      if (sp.log_power.at2(t, f) > best) {
        best = sp.log_power.at2(t, f);
        arg = f;
      }
    }
    if (total > 1e-4) {
      peaks.insert(arg);
      ++loud;
    }
  }
  CHECK(loud > sp.frames() / 2);
  CHECK(static_cast<int>(peaks.size()) <= 6);  // two tones, a few edge bins
}

TEST_CASE("traffic noise is low-frequency") {
  std::mt19937_64 rng(29);
  AudioSignal traffic = synth_noise(NoiseKind::traffic, 2.0, rng);
  SpectralFrames sp = stft(traffic);
  double low = 0, total = 0;
  const int cut = static_cast<int>(500.0 / (16000.0 / 320.0));  // bin of 500 Hz
  for (int t = 0; t < sp.frames(); ++t)
    for (int f = 0; f < kBins; ++f) {
      const double p = std::exp(sp.log_power.at2(t, f));
      total += p;
      if (f <= cut) low += p;
    }
  CHECK(low / total >= 0.9);
}

TEST_CASE("noise determinism and name mapping") {
  for (NoiseKind k : {NoiseKind::alarm, NoiseKind::crowd, NoiseKind::traffic}) {
    std::mt19937_64 r1(31), r2(31);
    CHECK(synth_noise(k, 0.8, r1).samples == synth_noise(k, 0.8, r2).samples);
    CHECK(noise_kind_from_name(noise_kind_name(k)) == k);
  }
  CHECK_THROWS(noise_kind_from_name("wind"));
}

TEST_CASE("corpus build, manifest and loading") {
  const fs::path dir = fs::temp_directory_path() / "avse_corpus_test";
  fs::remove_all(dir);
  CorpusSpec spec;
  spec.n_train = 10;
  spec.n_test = 2;
  spec.dur_min_s = 0.8;
  spec.dur_max_s = 1.2;
  spec.seed = 404;
  DatasetManifest m = build_corpus(spec, dir.string());
  // 10 train + 2 test * 3 noises * 6 snrs
  CHECK(m.records.size() == 10 + 2 * 3 * 6);

  int train_n = 0, test_n = 0;
  std::set<std::string> train_ids, test_ids;
  for (const auto& r : m.records) {
    if (r.split == "train") {
      ++train_n;
      train_ids.insert(r.id);
      CHECK(r.noise_kind != "traffic");  // unseen noise never trains
      CHECK(r.snr_db >= -5);
      CHECK(r.snr_db <= 5);
      CHECK(r.snr_db == std::floor(r.snr_db));  // integral
    } else {
      ++test_n;
      test_ids.insert(r.id);
    }
  }
  CHECK(train_n == 10);
  CHECK(test_n == 36);
  for (const auto& id : train_ids) CHECK(test_ids.count(id) == 0);

  // manifest round trip
  DatasetManifest m2 = load_manifest((dir / "manifest.tsv").string());
  REQUIRE(m2.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(m2.records[i].id == m.records[i].id);
    CHECK(m2.records[i].noise_kind == m.records[i].noise_kind);
    CHECK(m2.records[i].snr_db == m.records[i].snr_db);
  }

  // loading validates lips-vs-frames and recovers the mix SNR within 0.01 dB
  for (const auto& rec : {m.records.front(), m.records.back()}) {
    Utterance u = load_utterance(m, rec);
    CHECK(static_cast<int>(u.lips.size()) == u.frames * 64 * 64);
    CHECK(u.frames == stft_num_frames(u.clean.samples.size()));
    double pc = 0, pn = 0;
    for (std::size_t i = 0; i < u.clean.samples.size(); ++i) {
      pc += static_cast<double>(u.clean.samples[i]) * u.clean.samples[i];
      const double d = static_cast<double>(u.corrupted.samples[i]) - u.clean.samples[i];
      pn += d * d;
    }
    CHECK(std::abs(10.0 * std::log10(pc / pn) - rec.snr_db) < 0.01);
  }

  // split filtering
  CHECK(load_dataset((dir / "manifest.tsv").string(), "train").size() == 10);
  CHECK(load_dataset((dir / "manifest.tsv").string(), "test").size() == 36);

  // deleting a WAV fails with the missing path in the message
  fs::remove(dir / m.records.front().corrupted_path);
  try {
    load_utterance(m2, m2.records.front());
    FAIL("expected a missing-file error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find(m.records.front().corrupted_path) != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("corpus generation is a pure function of spec and seed") {
  const fs::path d1 = fs::temp_directory_path() / "avse_corpus_det1";
  const fs::path d2 = fs::temp_directory_path() / "avse_corpus_det2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  CorpusSpec spec;
  spec.n_train = 10;
  spec.n_test = 1;
  spec.dur_min_s = 0.6;
  spec.dur_max_s = 0.9;
  spec.seed = 7;
  DatasetManifest m1 = build_corpus(spec, d1.string());
  DatasetManifest m2 = build_corpus(spec, d2.string());
  REQUIRE(m1.records.size() == m2.records.size());
  for (std::size_t i = 0; i < m1.records.size(); ++i) {
    std::ifstream f1(d1 / m1.records[i].corrupted_path, std::ios::binary);
    std::ifstream f2(d2 / m2.records[i].corrupted_path, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(!b1.empty());
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("lips file round trip") {
  const fs::path dir = fs::temp_directory_path() / "avse_lips_test";
  fs::create_directories(dir);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(3) * 64 * 64);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<std::uint8_t>(i % 251);
  const std::string path = (dir / "x.lips").string();
  write_lips(path, 3, data);
  int frames = 0;
  auto back = read_lips(path, &frames);
  CHECK(frames == 3);
  CHECK(back == data);
  fs::remove_all(dir);
}

TEST_CASE("feature pipeline shapes and train-only fitting") {
  const fs::path dir = fs::temp_directory_path() / "avse_feat_test";
  fs::remove_all(dir);
  CorpusSpec spec;
  spec.n_train = 10;
  spec.n_test = 1;
  spec.dur_min_s = 0.8;
  spec.dur_max_s = 1.0;
  spec.seed = 99;
  build_corpus(spec, dir.string());
  auto train = load_dataset((dir / "manifest.tsv").string(), "train");
  FeaturePipeline pipe = fit_pipeline(train, 10);
  CHECK(pipe.pca.in_dim() == 3 * kBins);
  CHECK(pipe.pca.out_dim() == 10);
  CHECK(static_cast<int>(pipe.input_std.mean.size()) == 10);
  CHECK(static_cast<int>(pipe.target_std.mean.size()) == kBins);

  FeatUtterance f = featurize(train[0], pipe, true);
  CHECK(f.audio.dim(0) == train[0].frames);
  CHECK(f.audio.dim(1) == 10);
  CHECK(f.target.dim(1) == kBins);
  CHECK(f.img == 64);
  CHECK(f.lips.size() == train[0].lips.size());
  fs::remove_all(dir);
}
