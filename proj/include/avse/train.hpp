#pragma once

// Optimization loop: MSE objective, Adam with bias correction, truncated BPTT
// over 21-step chunks, utterance-level validation split and early stopping.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "avse/models.hpp"
#include "avse/tensor.hpp"

namespace avse {

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 0;  // 0 = default per kind (128 frame windows / 8 chunks)
  int bptt_steps = 21;
  double val_fraction = 0.1;
  int patience_epochs = 5;
  double min_rel_improvement = 0.01;
  int max_epochs = 100;
  double target_train_mse = 0.0;  // > 0: stop once the epoch train MSE drops below this
  std::uint64_t seed = 0;
  double clip_norm = 5.0;  // 0 disables gradient clipping
  bool verbose = false;
};

struct AdamState {
  std::vector<std::vector<float>> m, v;
  long t = 0;
  void init(const std::vector<Param*>& params);
};

// Mean over all elements of (pred - target)^2, plus its gradient.
std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target);

// Applies one Adam update to every parameter, then zeroes the gradients.
// Throws on non-finite gradients.
void adam_step(const std::vector<Param*>& params, AdamState& state, const TrainConfig& cfg);

// Non-overlapping consecutive (offset, length) chunks; a shorter tail chunk
// is retained.
std::vector<std::pair<int, int>> make_chunks(int total_frames, int bptt_steps);

// Utterance-level split, deterministic under seed. Requires n >= 10.
std::pair<std::vector<int>, std::vector<int>> split_train_val(int n, double val_fraction,
                                                              std::uint64_t seed);

// True when the best validation error has not improved by min_rel (relative)
// over the last `patience` epochs.
bool early_stop_check(const std::vector<double>& val_history, int patience, double min_rel);

// Feature-space utterance: standardized 100-d PCA inputs, standardized 161-d
// clean log-power targets and (bimodal) lip frames as 8-bit grayscale.
struct FeatUtterance {
  std::string id;
  Tensor audio;   // [T x 100]
  Tensor target;  // [T x 161]
  std::vector<std::uint8_t> lips;  // T * img * img, empty when unused
  int img = 0;
  int frames() const { return audio.dim(0); }
};
using FeatDataset = std::vector<FeatUtterance>;

struct TrainReport {
  std::vector<double> train_mse, val_mse;
  std::string stop_reason;
  int best_epoch = -1;  // 1-based
  double best_val = 0.0;
  double wall_seconds = 0.0;
};

// 11-frame input window centered on `t` with edge replication, flattened.
Tensor build_window_batch(const FeatUtterance& u, const std::vector<int>& ts, int n_frames);

// Infer-mode MSE of the model over a dataset (full sequences for the
// recurrent kinds, 11-frame windows for the DNN).
double eval_mse(Model& model, const FeatDataset& data);

// Minibatch Adam training; on return the model holds the parameters and
// batchnorm statistics of the best-validation epoch.
TrainReport train_model(Model& model, const FeatDataset& train_set, const FeatDataset& val_set,
                        const TrainConfig& cfg);

void write_report_csv(const TrainReport& report, const std::string& path);
void write_report_summary(const TrainReport& report, const std::string& path);

}  // namespace avse
