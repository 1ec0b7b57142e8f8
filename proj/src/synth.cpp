#include "avse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace avse {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Sample-rate syllabic amplitude envelope with raised-cosine ramps and
// guaranteed silent gaps.
std::vector<double> syllabic_envelope(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> on_dur(0.08, 0.25), off_dur(0.06, 0.25);
  std::uniform_real_distribution<double> amp(0.5, 1.0);
  std::vector<double> env(n, 0.0);
  const int ramp = kSampleRate / 50;  // 20 ms
  std::size_t pos = static_cast<std::size_t>(off_dur(rng) * kSampleRate);  // leading pause
  while (pos < n) {
    const std::size_t on = static_cast<std::size_t>(on_dur(rng) * kSampleRate);
    const double a = amp(rng);
    for (std::size_t i = 0; i < on && pos + i < n; ++i) {
      double w = 1.0;
      if (i < static_cast<std::size_t>(ramp)) w = 0.5 * (1.0 - std::cos(kPi * i / ramp));
      if (on - i < static_cast<std::size_t>(ramp))
        w = std::min(w, 0.5 * (1.0 - std::cos(kPi * (on - i) / ramp)));
      env[pos + i] = a * w;
    }
    pos += on + static_cast<std::size_t>(off_dur(rng) * kSampleRate);
  }
  return env;
}

std::vector<float> frame_envelope(const std::vector<double>& env) {
  const int T = stft_num_frames(env.size());
  std::vector<float> out(static_cast<std::size_t>(std::max(T, 0)));
  double peak = 0.0;
  for (int t = 0; t < T; ++t) {
    double acc = 0.0;
    for (int i = 0; i < kNFft; ++i) acc += env[static_cast<std::size_t>(t) * kHop + i];
    out[static_cast<std::size_t>(t)] = static_cast<float>(acc / kNFft);
    peak = std::max(peak, acc / kNFft);
  }
  if (peak > 0.0)
    for (auto& v : out) v = static_cast<float>(v / peak);
  return out;
}

void peak_normalize(std::vector<float>& samples, float target) {
  float peak = 0.0f;
  for (float v : samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0f)
    for (auto& v : samples) v *= target / peak;
}

}  // namespace

std::string noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::alarm: return "alarm";
    case NoiseKind::crowd: return "crowd";
    case NoiseKind::traffic: return "traffic";
  }
  return "?";
}

NoiseKind noise_kind_from_name(const std::string& name) {
  if (name == "alarm") return NoiseKind::alarm;
  if (name == "crowd") return NoiseKind::crowd;
  if (name == "traffic") return NoiseKind::traffic;
  throw std::invalid_argument("unknown noise kind '" + name + "'");
}

SpeechSample synth_speech(double duration_s, std::mt19937_64& rng) {
  if (duration_s < 0.5) throw std::invalid_argument("synth_speech: duration must be >= 0.5 s");
  const std::size_t n = static_cast<std::size_t>(std::lround(duration_s * kSampleRate));
  const int T = stft_num_frames(n);

  // envelope with >= 10% near-silent frames, by rejection
  std::vector<double> env;
  std::vector<float> fenv;
  for (int attempt = 0; attempt < 200; ++attempt) {
    env = syllabic_envelope(n, rng);
    fenv = frame_envelope(env);
    int quiet = 0;
    for (float v : fenv)
      if (v < 0.05f) ++quiet;
    if (T == 0 || quiet * 10 >= T) break;
    if (attempt == 199)
      throw std::runtime_error("synth_speech: failed to place enough pauses");
  }

  // Random pitch over 90-250 Hz drawn from a coarse grid: a small family of
  // harmonic-comb templates keeps the clean spectra identifiable from noisy
  // observations instead of smearing every bin across a pitch continuum.
  std::uniform_int_distribution<int> uf0(0, 8);
  const double f0 = 90.0 + 20.0 * uf0(rng);
  // Keep the pitch drift gentle: deep or fast modulation sweeps the upper
  // harmonics across several STFT bins per frame, which turns the bin-level
  // log magnitudes into a moving target no regressor can track.
  std::uniform_real_distribution<double> uvib_rate(0.1, 0.5), uphase(0.0, 2.0 * kPi);
  const double vib_rate = uvib_rate(rng), vib_phase = uphase(rng);

  // formant-like spectral emphasis evaluated at the harmonic frequencies
  std::uniform_real_distribution<double> uf1(300, 800), uf2(1000, 2000), uf3(2200, 3200);
  const double F[3] = {uf1(rng), uf2(rng), uf3(rng)};
  const double G[3] = {1.0, 0.6, 0.4};
  const double B[3] = {150.0, 220.0, 280.0};
  const int n_harm = std::min(40, static_cast<int>(7000.0 / f0));
  std::vector<double> weight(static_cast<std::size_t>(n_harm)), phase(static_cast<std::size_t>(n_harm));
  for (int k = 0; k < n_harm; ++k) {
    const double f = (k + 1) * f0;
    // A solid glottal-like base keeps the low-harmonic level consistent
    // across utterances; the formant emphasis rides on top of it.
    double w = 0.25;
    for (int m = 0; m < 3; ++m) w += G[m] * std::exp(-0.5 * std::pow((f - F[m]) / B[m], 2.0));
    weight[static_cast<std::size_t>(k)] = w / (k + 1);
    phase[static_cast<std::size_t>(k)] = uphase(rng);
  }

  SpeechSample out;
  out.audio.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    const double f_inst = f0 * (1.0 + 0.003 * std::sin(2.0 * kPi * vib_rate * t + vib_phase));
    double s = 0.0;
    for (int k = 0; k < n_harm; ++k) {
      phase[static_cast<std::size_t>(k)] += 2.0 * kPi * (k + 1) * f_inst / kSampleRate;
      s += weight[static_cast<std::size_t>(k)] * std::sin(phase[static_cast<std::size_t>(k)]);
    }
    out.audio.samples[i] = static_cast<float>(s * env[i]);
  }
  peak_normalize(out.audio.samples, 0.5f);
  out.envelope = std::move(fenv);
  return out;
}

void render_lip_frame(float envelope, float cx, float cy, float rx, float* img) {
  const float ry = 4.0f + 20.0f * envelope;
  for (int y = 0; y < kLipSize; ++y)
    for (int x = 0; x < kLipSize; ++x) {
      const float dx = (static_cast<float>(x) - cx) / rx;
      const float dy = (static_cast<float>(y) - cy) / ry;
      img[y * kLipSize + x] = (dx * dx + dy * dy <= 1.0f) ? 0.9f : 0.1f;
    }
}

std::vector<std::uint8_t> synth_lips(const std::vector<float>& envelope, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> jitter(-2.0f, 2.0f);
  std::normal_distribution<float> pixel_noise(0.0f, 0.02f);
  std::vector<std::uint8_t> out(envelope.size() * kLipSize * kLipSize);
  std::vector<float> frame(kLipSize * kLipSize);
  for (std::size_t t = 0; t < envelope.size(); ++t) {
    const float e = std::clamp(envelope[t], 0.0f, 1.0f);
    render_lip_frame(e, 32.0f + jitter(rng), 32.0f + jitter(rng), 22.0f + jitter(rng),
                     frame.data());
    for (std::size_t i = 0; i < frame.size(); ++i) {
      const float v = std::clamp(frame[i] + pixel_noise(rng), 0.0f, 1.0f);
      out[t * frame.size() + i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  return out;
}

AudioSignal synth_noise(NoiseKind kind, double duration_s, std::mt19937_64& rng) {
  if (duration_s < 0.5) throw std::invalid_argument("synth_noise: duration must be >= 0.5 s");
  const std::size_t n = static_cast<std::size_t>(std::lround(duration_s * kSampleRate));
  AudioSignal out;
  out.samples.assign(n, 0.0f);
  switch (kind) {
    case NoiseKind::alarm: {
      std::uniform_real_distribution<double> uf1(600, 1100), uf2(1300, 2400);
      std::uniform_real_distribution<double> urate(3.0, 5.0);
      const double f1 = uf1(rng), f2 = uf2(rng), rate = urate(rng);
      const double beep = kSampleRate / rate;  // samples per on+off cycle
      for (std::size_t i = 0; i < n; ++i) {
        const double cycle = std::fmod(static_cast<double>(i), beep) / beep;
        if (cycle > 0.94) continue;  // off phase
        const bool second = (static_cast<std::size_t>(i / beep) % 2) == 1;
        const double f = second ? f2 : f1;
        // sustained tone with 10% raised-cosine attack/release ramps
        const double pos = cycle / 0.94;
        double env = 1.0;
        if (pos < 0.1)
          env = 0.5 * (1.0 - std::cos(kPi * pos / 0.1));
        else if (pos > 0.9)
          env = 0.5 * (1.0 - std::cos(kPi * (1.0 - pos) / 0.1));
        out.samples[i] = static_cast<float>(std::sin(2.0 * kPi * f * i / kSampleRate) * env);
      }
      break;
    }
    case NoiseKind::crowd: {
      // babble: independent speech-like sources summed
      for (int src = 0; src < 8; ++src) {
        std::mt19937_64 sub(rng());
        SpeechSample s = synth_speech(duration_s, sub);
        for (std::size_t i = 0; i < n && i < s.audio.samples.size(); ++i)
          out.samples[i] += s.audio.samples[i];
      }
      break;
    }
    case NoiseKind::traffic: {
      // leaky-integrated white noise through two low-pass poles at 400 Hz,
      // with slow amplitude modulation
      std::normal_distribution<double> white(0.0, 1.0);
      std::uniform_real_distribution<double> umod(0.2, 0.5), uphase(0.0, 2.0 * kPi);
      const double mod_rate = umod(rng), mod_phase = uphase(rng);
      const double leak = 0.995;
      const double a = std::exp(-2.0 * kPi * 400.0 / kSampleRate);
      double integ = 0.0, lp1 = 0.0, lp2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        integ = leak * integ + white(rng);
        lp1 = a * lp1 + (1.0 - a) * integ;
        lp2 = a * lp2 + (1.0 - a) * lp1;
        const double t = static_cast<double>(i) / kSampleRate;
        const double am = 1.0 + 0.6 * std::sin(2.0 * kPi * mod_rate * t + mod_phase);
        out.samples[i] = static_cast<float>(lp2 * am);
      }
      break;
    }
  }
  peak_normalize(out.samples, 0.5f);
  return out;
}

}  // namespace avse
