#include "avse/dsp.hpp"

#include <algorithm>
#include <cmath>

namespace avse {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Periodic Hann; adjacent windows at 50% overlap sum to 1.
const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kNFft);
    for (int n = 0; n < kNFft; ++n) v[static_cast<std::size_t>(n)] = 0.5 * (1.0 - std::cos(2.0 * kPi * n / kNFft));
    return v;
  }();
  return w;
}

struct DftTables {
  // cos/sin for the 161 non-negative bins of a 320-point real DFT
  std::vector<double> c, s;  // [kBins * kNFft]
  DftTables() : c(static_cast<std::size_t>(kBins) * kNFft), s(c.size()) {
    for (int k = 0; k < kBins; ++k)
      for (int n = 0; n < kNFft; ++n) {
        const double ang = 2.0 * kPi * k * n / kNFft;
        c[static_cast<std::size_t>(k) * kNFft + n] = std::cos(ang);
        s[static_cast<std::size_t>(k) * kNFft + n] = std::sin(ang);
      }
  }
};

const DftTables& dft_tables() {
  static const DftTables t;
  return t;
}

}  // namespace

int stft_num_frames(std::size_t num_samples) {
  if (num_samples < static_cast<std::size_t>(kNFft)) return 0;
  return 1 + static_cast<int>((num_samples - kNFft) / kHop);
}

SpectralFrames stft(const AudioSignal& signal) {
  if (signal.sample_rate != kSampleRate)
    throw std::invalid_argument("stft: expected " + std::to_string(kSampleRate) + " Hz, got " +
                                std::to_string(signal.sample_rate));
  const int T = stft_num_frames(signal.samples.size());
  if (T == 0)
    throw std::invalid_argument("stft: signal too short (" +
                                std::to_string(signal.samples.size()) + " samples, need >= " +
                                std::to_string(kNFft) + ")");
  const auto& win = hann_window();
  const auto& tab = dft_tables();
  SpectralFrames out;
  out.log_power = Tensor({T, kBins});
  out.phase = Tensor({T, kBins});
  std::vector<double> frame(kNFft);
  for (int t = 0; t < T; ++t) {
    const std::size_t base = static_cast<std::size_t>(t) * kHop;
    for (int n = 0; n < kNFft; ++n)
      frame[static_cast<std::size_t>(n)] =
          static_cast<double>(signal.samples[base + static_cast<std::size_t>(n)]) * win[static_cast<std::size_t>(n)];
    for (int k = 0; k < kBins; ++k) {
      const double* ck = &tab.c[static_cast<std::size_t>(k) * kNFft];
      const double* sk = &tab.s[static_cast<std::size_t>(k) * kNFft];
      double re = 0.0, im = 0.0;
      for (int n = 0; n < kNFft; ++n) {
        re += frame[static_cast<std::size_t>(n)] * ck[n];
        im -= frame[static_cast<std::size_t>(n)] * sk[n];
      }
      const double p = std::max(re * re + im * im, kLogFloor);
      out.log_power.at2(t, k) = static_cast<float>(std::log(p));
      double ph = std::atan2(im, re);
      if (ph <= -kPi) ph = kPi;  // phase convention (-pi, pi]
      out.phase.at2(t, k) = static_cast<float>(ph);
    }
  }
  return out;
}

AudioSignal istft(const SpectralFrames& spec) {
  const int T = spec.frames();
  if (T == 0 || spec.log_power.dim(1) != kBins)
    throw std::invalid_argument("istft: expected non-empty [T x 161] spectra");
  check_same_shape(spec.log_power.shape, spec.phase.shape, "istft");
  if (!spec.log_power.all_finite() || !spec.phase.all_finite())
    throw std::invalid_argument("istft: non-finite value in spectrum");
  const auto& win = hann_window();
  const auto& tab = dft_tables();
  const std::size_t out_len = static_cast<std::size_t>(T - 1) * kHop + kNFft;
  std::vector<double> acc(out_len, 0.0), wsum(out_len, 0.0);
  std::vector<double> re(kBins), im(kBins), frame(kNFft);
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < kBins; ++k) {
      const double mag = std::sqrt(std::exp(static_cast<double>(spec.log_power.at2(t, k))));
      re[static_cast<std::size_t>(k)] = mag * std::cos(static_cast<double>(spec.phase.at2(t, k)));
      im[static_cast<std::size_t>(k)] = mag * std::sin(static_cast<double>(spec.phase.at2(t, k)));
    }
    // inverse real DFT; bins 1..159 appear twice via conjugate symmetry
    for (int n = 0; n < kNFft; ++n) {
      double v = re[0];
      for (int k = 1; k < kBins - 1; ++k) {
        const std::size_t idx = static_cast<std::size_t>(k) * kNFft + n;
        v += 2.0 * (re[static_cast<std::size_t>(k)] * tab.c[idx] -
                    im[static_cast<std::size_t>(k)] * tab.s[idx]);
      }
      // Nyquist bin (k = 160): cos(pi*n) = (-1)^n, sin = 0
      v += re[static_cast<std::size_t>(kBins - 1)] * (n % 2 == 0 ? 1.0 : -1.0);
      frame[static_cast<std::size_t>(n)] = v / kNFft;
    }
    const std::size_t base = static_cast<std::size_t>(t) * kHop;
    for (int n = 0; n < kNFft; ++n) {
      acc[base + static_cast<std::size_t>(n)] += frame[static_cast<std::size_t>(n)] * win[static_cast<std::size_t>(n)];
      wsum[base + static_cast<std::size_t>(n)] += win[static_cast<std::size_t>(n)] * win[static_cast<std::size_t>(n)];
    }
  }
  AudioSignal out;
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i)
    out.samples[i] = static_cast<float>(acc[i] / std::max(wsum[i], 1e-8));
  return out;
}

Tensor delta_features(const Tensor& frames) {
  if (frames.ndim() != 2 || frames.dim(0) < 1)
    throw std::invalid_argument("delta_features: expected non-empty [T x D] matrix");
  const int T = frames.dim(0), D = frames.dim(1);
  auto delta = [T, D](const Tensor& x) {
    Tensor d({T, D});
    for (int t = 0; t < T; ++t) {
      const int tp = std::min(t + 1, T - 1), tm = std::max(t - 1, 0);
      for (int j = 0; j < D; ++j) d.at2(t, j) = 0.5f * (x.at2(tp, j) - x.at2(tm, j));
    }
    return d;
  };
  const Tensor d1 = delta(frames);
  const Tensor d2 = delta(d1);
  Tensor out({T, 3 * D});
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < D; ++j) {
      out.at2(t, j) = frames.at2(t, j);
      out.at2(t, D + j) = d1.at2(t, j);
      out.at2(t, 2 * D + j) = d2.at2(t, j);
    }
  return out;
}

Standardizer standardize_fit(const Tensor& data) {
  if (data.ndim() != 2 || data.dim(0) < 2)
    throw std::invalid_argument("standardize_fit: need at least 2 rows");
  const int N = data.dim(0), D = data.dim(1);
  Standardizer s;
  s.mean.assign(static_cast<std::size_t>(D), 0.0);
  s.std.assign(static_cast<std::size_t>(D), 0.0);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < D; ++j) s.mean[static_cast<std::size_t>(j)] += data.at2(i, j);
  for (int j = 0; j < D; ++j) s.mean[static_cast<std::size_t>(j)] /= N;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < D; ++j) {
      const double d = data.at2(i, j) - s.mean[static_cast<std::size_t>(j)];
      s.std[static_cast<std::size_t>(j)] += d * d;
    }
  for (int j = 0; j < D; ++j)
    s.std[static_cast<std::size_t>(j)] = std::max(std::sqrt(s.std[static_cast<std::size_t>(j)] / N), 1e-8);
  return s;
}

Tensor Standardizer::apply(const Tensor& x) const {
  if (x.ndim() != 2 || x.dim(1) != dim())
    throw std::invalid_argument("standardize: input " + shape_str(x.shape) +
                                " does not match dim " + std::to_string(dim()));
  Tensor y(x.shape);
  for (int i = 0; i < x.dim(0); ++i)
    for (int j = 0; j < x.dim(1); ++j)
      y.at2(i, j) = static_cast<float>((x.at2(i, j) - mean[static_cast<std::size_t>(j)]) /
                                       std[static_cast<std::size_t>(j)]);
  return y;
}

Tensor Standardizer::invert(const Tensor& x) const {
  if (x.ndim() != 2 || x.dim(1) != dim())
    throw std::invalid_argument("standardize invert: input " + shape_str(x.shape) +
                                " does not match dim " + std::to_string(dim()));
  Tensor y(x.shape);
  for (int i = 0; i < x.dim(0); ++i)
    for (int j = 0; j < x.dim(1); ++j)
      y.at2(i, j) = static_cast<float>(x.at2(i, j) * std[static_cast<std::size_t>(j)] +
                                       mean[static_cast<std::size_t>(j)]);
  return y;
}

AudioSignal mix_at_snr(const AudioSignal& clean, const AudioSignal& noise, double snr_db,
                       std::size_t offset) {
  const std::size_t n = clean.samples.size();
  if (n == 0) throw std::invalid_argument("mix_at_snr: empty clean signal");
  if (noise.samples.empty()) throw std::invalid_argument("mix_at_snr: empty noise signal");
  double p_clean = 0.0;
  for (float v : clean.samples) p_clean += static_cast<double>(v) * v;
  p_clean /= static_cast<double>(n);
  if (p_clean <= 0.0) throw std::invalid_argument("mix_at_snr: silent clean signal");
  // tile the noise over the clean duration starting at offset
  std::vector<double> seg(n);
  const std::size_t m = noise.samples.size();
  double p_noise = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    seg[i] = noise.samples[(offset + i) % m];
    p_noise += seg[i] * seg[i];
  }
  p_noise /= static_cast<double>(n);
  if (p_noise <= 0.0) throw std::invalid_argument("mix_at_snr: silent noise segment");
  const double gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  AudioSignal out;
  out.sample_rate = clean.sample_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.samples[i] = static_cast<float>(clean.samples[i] + gain * seg[i]);
  return out;
}

}  // namespace avse
