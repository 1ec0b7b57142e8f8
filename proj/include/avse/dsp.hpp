#pragma once

// Audio front-end: STFT analysis/synthesis with a Hann window, log power
// spectra, delta features, per-dimension standardization and SNR mixing.
// Fixed format: 16 kHz mono, 320-point frames, 160-sample hop.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "avse/tensor.hpp"

namespace avse {

constexpr int kSampleRate = 16000;
constexpr int kNFft = 320;
constexpr int kHop = 160;
constexpr int kBins = kNFft / 2 + 1;  // 161
constexpr double kLogFloor = 1e-10;

struct AudioSignal {
  std::vector<float> samples;  // nominally in [-1, 1]
  int sample_rate = kSampleRate;
};

struct SpectralFrames {
  Tensor log_power;  // [T x 161], ln(max(|X|^2, floor))
  Tensor phase;      // [T x 161], radians in (-pi, pi]
  int frames() const { return log_power.ndim() ? log_power.dim(0) : 0; }
};

int stft_num_frames(std::size_t num_samples);

SpectralFrames stft(const AudioSignal& signal);

// Overlap-add synthesis with Hann window and per-sample window-energy
// normalization; output length (T-1)*hop + n_fft.
AudioSignal istft(const SpectralFrames& spec);

// [T x 161] -> [T x 483]: concat of static, first and second derivative.
Tensor delta_features(const Tensor& frames);

struct Standardizer {
  std::vector<double> mean, std;  // std floored at 1e-8

  int dim() const { return static_cast<int>(mean.size()); }
  Tensor apply(const Tensor& x) const;
  Tensor invert(const Tensor& x) const;
};

Standardizer standardize_fit(const Tensor& data);

// Mixes `noise` (tiled, starting at `offset`) into `clean` at the requested
// SNR in dB measured over the clean duration.
AudioSignal mix_at_snr(const AudioSignal& clean, const AudioSignal& noise, double snr_db,
                       std::size_t offset);

// WAV I/O: RIFF PCM, 16-bit signed little-endian, mono, 16 kHz only.
AudioSignal read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioSignal& signal);

}  // namespace avse
