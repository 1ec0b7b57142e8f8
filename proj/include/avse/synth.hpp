#pragma once

// Synthetic bimodal corpus primitives: speech-like audio with a syllabic
// energy envelope, lip-aperture image sequences driven by that envelope, and
// three noise families (tonal alarm, babble crowd, low-frequency traffic).

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "avse/dsp.hpp"

namespace avse {

enum class NoiseKind { alarm, crowd, traffic };

std::string noise_kind_name(NoiseKind k);
NoiseKind noise_kind_from_name(const std::string& name);

constexpr int kLipSize = 64;

struct SpeechSample {
  AudioSignal audio;            // peak-normalized to 0.5
  std::vector<float> envelope;  // per STFT frame, in [0,1]
};

// Harmonic stack with slowly varying pitch, formant-shaped spectrum and a
// random syllabic on/off envelope. At least 10% of frames fall below 0.05
// envelope (pauses), enforced by rejection. duration_s >= 0.5.
SpeechSample synth_speech(double duration_s, std::mt19937_64& rng);

// Noise-free lip frame: filled ellipse, vertical semi-axis 4 + 20*envelope
// px, foreground 0.9 on background 0.1.
void render_lip_frame(float envelope, float cx, float cy, float rx, float* img);

// One 64x64 8-bit grayscale frame per envelope entry, with small center and
// width jitter plus pixel noise (sigma 0.02, clipped to [0,1]).
std::vector<std::uint8_t> synth_lips(const std::vector<float>& envelope, std::mt19937_64& rng);

AudioSignal synth_noise(NoiseKind kind, double duration_s, std::mt19937_64& rng);

}  // namespace avse
