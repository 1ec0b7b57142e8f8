#pragma once

// End-to-end enhancement, objective metrics (log-spectrum MSE, log-spectral
// distance, segmental SNR) and the factorial noise x SNR evaluation table.

#include <string>
#include <vector>

#include "avse/checkpoint.hpp"
#include "avse/corpus.hpp"
#include "avse/dsp.hpp"

namespace avse {

struct EnhanceResult {
  AudioSignal audio;   // clipped to [-1, 1]
  Tensor pred_logpow;  // de-standardized [T x 161]
};

// STFT -> deltas -> PCA -> standardize -> model (infer) -> de-standardize ->
// ISTFT with the corrupted signal's phase. Bimodal checkpoints require the
// lip frames (T x 64 x 64 bytes).
EnhanceResult enhance(Checkpoint& ckpt, const AudioSignal& corrupted,
                      const std::vector<std::uint8_t>* lips = nullptr);

// MSE over standardized log spectra.
double metric_mse(const Tensor& pred_logpow, const Tensor& clean_logpow,
                  const Standardizer& target_std);

// Mean over frames of sqrt(mean over bins of ((10/ln10)*(lp_pred-lp_clean))^2), in dB.
double metric_lsd(const Tensor& pred_logpow, const Tensor& clean_logpow);

// Mean per-320-sample-segment SNR of `signal` against `reference`, each
// segment clamped to [-10, 35] dB; silent reference segments are skipped.
double metric_segsnr(const AudioSignal& signal, const AudioSignal& reference);

struct EvalRow {
  std::string id, noise_kind;
  double snr_db = 0.0;
  double mse_logspec = 0.0, lsd_db = 0.0, segsnr_in_db = 0.0, segsnr_out_db = 0.0;
};

struct EvalCell {
  std::string noise_kind;
  std::string snr_label;  // "-6".."9" or "all"
  int count = 0;
  double mse_logspec = 0.0, lsd_db = 0.0, segsnr_in_db = 0.0, segsnr_out_db = 0.0;
};

struct EvalResult {
  std::vector<EvalRow> rows;      // manifest order
  std::vector<EvalCell> cells;    // per (noise, snr), then per-noise "all"
};

// Runs the checkpoint over every test-split record of the manifest.
EvalResult evaluate(Checkpoint& ckpt, const std::string& manifest_path);

void write_eval_csv(const EvalResult& result, const std::string& rows_path,
                    const std::string& cells_path);

// Binary PGM (P5), width = frames, height = 161, low frequency at the bottom,
// fixed dB range [-80, 0] relative to the spectrum maximum.
void export_spectrogram(const Tensor& logspec, const std::string& path);

}  // namespace avse
