#include "avse/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace avse {

namespace {

constexpr char kManifestHeader[] = "avse-manifest\tv1";

// splitmix-style derivation so every utterance gets an independent stream
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (tag * 1000003ULL + index + 1ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct PairedFiles {
  AudioSignal clean, corrupted;
};

// Mix and, if the mixture would clip, rescale both signals together so the
// stored pair preserves the exact SNR.
PairedFiles corrupt(const AudioSignal& clean, const AudioSignal& noise, double snr_db,
                    std::size_t offset) {
  PairedFiles out;
  out.corrupted = mix_at_snr(clean, noise, snr_db, offset);
  out.clean = clean;
  float peak = 0.0f;
  for (float v : out.corrupted.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.99f) {
    const float s = 0.99f / peak;
    for (auto& v : out.corrupted.samples) v *= s;
    for (auto& v : out.clean.samples) v *= s;
  }
  return out;
}

std::string fmt_snr(double snr) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", snr);
  return buf;
}

}  // namespace

void write_lips(const std::string& path, int frames, const std::vector<std::uint8_t>& data) {
  if (data.size() != static_cast<std::size_t>(frames) * kLipSize * kLipSize)
    throw std::invalid_argument("write_lips: data size does not match frame count");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_lips: cannot open " + path);
  const std::uint32_t hdr[3] = {static_cast<std::uint32_t>(frames), kLipSize, kLipSize};
  os.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!os) throw std::runtime_error("write_lips: write failed for " + path);
}

std::vector<std::uint8_t> read_lips(const std::string& path, int* frames) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_lips: cannot open " + path);
  std::uint32_t hdr[3];
  is.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (is.gcount() != sizeof(hdr)) throw std::runtime_error("read_lips: truncated header in " + path);
  if (hdr[1] != kLipSize || hdr[2] != kLipSize)
    throw std::runtime_error("read_lips: unexpected frame size in " + path);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(hdr[0]) * kLipSize * kLipSize);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (is.gcount() != static_cast<std::streamsize>(data.size()))
    throw std::runtime_error("read_lips: truncated data in " + path);
  if (frames) *frames = static_cast<int>(hdr[0]);
  return data;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_manifest: cannot open " + path);
  os << kManifestHeader << "\n";
  for (const auto& r : manifest.records)
    os << r.id << '\t' << r.split << '\t' << r.clean_path << '\t' << r.corrupted_path << '\t'
       << r.lips_path << '\t' << r.noise_kind << '\t' << fmt_snr(r.snr_db) << '\n';
  if (!os) throw std::runtime_error("write_manifest: write failed for " + path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_manifest: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != kManifestHeader)
    throw std::runtime_error("load_manifest: " + path + " is not a v1 manifest");
  DatasetManifest m;
  m.dir = fs::path(path).parent_path().string();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    ManifestRecord r;
    std::string snr;
    if (!std::getline(ss, r.id, '\t') || !std::getline(ss, r.split, '\t') ||
        !std::getline(ss, r.clean_path, '\t') || !std::getline(ss, r.corrupted_path, '\t') ||
        !std::getline(ss, r.lips_path, '\t') || !std::getline(ss, r.noise_kind, '\t') ||
        !std::getline(ss, snr, '\t'))
      throw std::runtime_error("load_manifest: malformed record '" + line + "'");
    r.snr_db = std::stod(snr);
    m.records.push_back(std::move(r));
  }
  return m;
}

DatasetManifest build_corpus(const CorpusSpec& spec, const std::string& out_dir) {
  if (spec.n_train < 0 || spec.n_test < 0 || spec.dur_min_s < 0.5 ||
      spec.dur_max_s < spec.dur_min_s)
    throw std::invalid_argument("build_corpus: invalid corpus spec");
  fs::create_directories(fs::path(out_dir) / "clean");
  fs::create_directories(fs::path(out_dir) / "corrupt");
  fs::create_directories(fs::path(out_dir) / "lips");

  DatasetManifest manifest;
  manifest.dir = out_dir;

  auto emit = [&](const std::string& id, const std::string& split, const SpeechSample& speech,
                  const std::string& lips_rel, NoiseKind kind, int snr,
                  std::mt19937_64& rng) {
    std::uniform_real_distribution<double> noise_dur(1.0, spec.dur_max_s + 1.0);
    AudioSignal noise = synth_noise(kind, noise_dur(rng), rng);
    std::uniform_int_distribution<std::size_t> uoff(0, noise.samples.size() - 1);
    const std::size_t offset = uoff(rng);
    PairedFiles pf = corrupt(speech.audio, noise, snr, offset);
    ManifestRecord r;
    r.id = id;
    r.split = split;
    r.clean_path = "clean/" + id + ".wav";
    r.corrupted_path = "corrupt/" + id + ".wav";
    r.lips_path = lips_rel;
    r.noise_kind = noise_kind_name(kind);
    r.snr_db = snr;
    write_wav((fs::path(out_dir) / r.clean_path).string(), pf.clean);
    write_wav((fs::path(out_dir) / r.corrupted_path).string(), pf.corrupted);
    manifest.records.push_back(std::move(r));
  };

  std::uniform_real_distribution<double> udur(spec.dur_min_s, spec.dur_max_s);
  for (int i = 0; i < spec.n_train; ++i) {
    std::mt19937_64 rng(derive_seed(spec.seed, 1, static_cast<std::uint64_t>(i)));
    char name[32];
    std::snprintf(name, sizeof(name), "train%05d", i);
    const SpeechSample speech = synth_speech(udur(rng), rng);
    const auto lips = synth_lips(speech.envelope, rng);
    const std::string lips_rel = std::string("lips/") + name + ".lips";
    write_lips((fs::path(out_dir) / lips_rel).string(),
               static_cast<int>(speech.envelope.size()), lips);
    // seen noise only: alarm or crowd, integral SNR in the training range
    std::uniform_int_distribution<int> ukind(0, 1);
    std::uniform_int_distribution<int> usnr(spec.train_snr_min, spec.train_snr_max);
    const NoiseKind kind = ukind(rng) == 0 ? NoiseKind::alarm : NoiseKind::crowd;
    emit(name, "train", speech, lips_rel, kind, usnr(rng), rng);
  }
  for (int i = 0; i < spec.n_test; ++i) {
    std::mt19937_64 rng(derive_seed(spec.seed, 2, static_cast<std::uint64_t>(i)));
    char base[32];
    std::snprintf(base, sizeof(base), "test%05d", i);
    const SpeechSample speech = synth_speech(udur(rng), rng);
    const auto lips = synth_lips(speech.envelope, rng);
    const std::string lips_rel = std::string("lips/") + base + ".lips";
    write_lips((fs::path(out_dir) / lips_rel).string(),
               static_cast<int>(speech.envelope.size()), lips);
    for (NoiseKind kind : {NoiseKind::alarm, NoiseKind::crowd, NoiseKind::traffic})
      for (int snr : spec.test_snrs) {
        std::mt19937_64 mix_rng(derive_seed(
            spec.seed, 3, (static_cast<std::uint64_t>(i) * 8 + static_cast<int>(kind)) * 64 +
                              static_cast<std::uint64_t>(snr + 32)));
        const std::string id =
            std::string(base) + "_" + noise_kind_name(kind) + "_" +
            (snr < 0 ? "m" + std::to_string(-snr) : "p" + std::to_string(snr));
        emit(id, "test", speech, lips_rel, kind, snr, mix_rng);
      }
  }
  write_manifest(manifest, (fs::path(out_dir) / "manifest.tsv").string());
  return manifest;
}

Utterance load_utterance(const DatasetManifest& manifest, const ManifestRecord& rec) {
  Utterance u;
  u.meta = rec;
  const fs::path dir(manifest.dir);
  u.clean = read_wav((dir / rec.clean_path).string());
  u.corrupted = read_wav((dir / rec.corrupted_path).string());
  if (u.clean.samples.size() != u.corrupted.samples.size())
    throw std::runtime_error("load_utterance: clean/corrupted length mismatch for " + rec.id);
  int frames = 0;
  u.lips = read_lips((dir / rec.lips_path).string(), &frames);
  u.frames = stft_num_frames(u.clean.samples.size());
  if (frames != u.frames)
    throw std::runtime_error("load_utterance: " + rec.id + " has " + std::to_string(frames) +
                             " lip frames but " + std::to_string(u.frames) + " STFT frames");
  return u;
}

std::vector<Utterance> load_dataset(const std::string& manifest_path, const std::string& split) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  std::vector<Utterance> out;
  for (const auto& rec : manifest.records) {
    if (!split.empty() && rec.split != split) continue;
    out.push_back(load_utterance(manifest, rec));
  }
  return out;
}

}  // namespace avse
