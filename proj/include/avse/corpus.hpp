#pragma once

// Corpus generation and dataset I/O. A manifest is line-oriented UTF-8 with a
// version header and one tab-separated record per corrupted utterance:
// id, split, clean_path, corrupted_path, lips_path, noise_kind, snr_db.
// Paths are stored relative to the manifest file. Lip sequences live in a
// single binary file per utterance: three little-endian 32-bit unsigned
// integers (T, height, width) followed by T*height*width 8-bit gray pixels.

#include <cstdint>
#include <string>
#include <vector>

#include "avse/dsp.hpp"
#include "avse/synth.hpp"

namespace avse {

struct CorpusSpec {
  int n_train = 20;
  int n_test = 5;
  double dur_min_s = 2.0;
  double dur_max_s = 6.0;
  int train_snr_min = -5, train_snr_max = 5;  // integral SNRs
  std::vector<int> test_snrs = {-6, -3, 0, 3, 6, 9};
  std::uint64_t seed = 0;
};

struct ManifestRecord {
  std::string id;
  std::string split;  // "train" | "test"
  std::string clean_path, corrupted_path, lips_path;  // relative to manifest
  std::string noise_kind;
  double snr_db = 0.0;
};

struct DatasetManifest {
  std::string dir;  // directory the manifest lives in
  std::vector<ManifestRecord> records;
};

// Loaded, validated utterance.
struct Utterance {
  ManifestRecord meta;
  AudioSignal clean, corrupted;
  std::vector<std::uint8_t> lips;  // T * 64 * 64
  int frames = 0;
};

DatasetManifest build_corpus(const CorpusSpec& spec, const std::string& out_dir);

void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

void write_lips(const std::string& path, int frames, const std::vector<std::uint8_t>& data);
std::vector<std::uint8_t> read_lips(const std::string& path, int* frames);

// Loads one record's files; validates that the lip-frame count matches the
// clean signal's STFT frame count.
Utterance load_utterance(const DatasetManifest& manifest, const ManifestRecord& rec);

// Loads every record of the given split ("" = all).
std::vector<Utterance> load_dataset(const std::string& manifest_path,
                                    const std::string& split = "");

}  // namespace avse
