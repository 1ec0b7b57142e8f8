#pragma once

// Whole-model gradient verification: runs a reduced-width 64-bit model on
// random data and compares analytic gradients against central differences.

#include <random>

#include "avse/gradcheck.hpp"
#include "avse/models.hpp"

namespace avse {

inline double run_model_gradient_check(const ModelConfig& cfg, std::uint64_t seed,
                                       double eps = 1e-5) {
  DModel model(cfg);
  model.init(seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_real_distribution<double> pix(0.0, 1.0);

  const int T = cfg.recurrent() ? 7 : 5;  // batchnorm needs at least two rows
  DTensor audio({T, cfg.dnn_input_dim()});
  for (auto& v : audio.data) v = uni(rng);
  DTensor images;
  const bool bimodal = cfg.kind == ModelKind::bimodal_bilstm;
  if (bimodal) {
    images = DTensor({T, 1, cfg.image_size, cfg.image_size});
    for (auto& v : images.data) v = pix(rng);
  }
  DTensor target({T, cfg.output_dim});
  for (auto& v : target.data) v = uni(rng);

  auto mse = [&](const DTensor& pred) {
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = pred.data[i] - target.data[i];
      s += d * d;
    }
    return s / static_cast<double>(pred.size());
  };
  auto forward = [&](auto* wcache, auto* scache) {
    return cfg.recurrent() ? model.forward_sequence(audio, bimodal ? &images : nullptr,
                                                    Mode::train, scache)
                           : model.forward_windows(audio, Mode::train, wcache);
  };

  auto loss_fn = [&]() {
    return mse(forward(static_cast<DModel::WindowsCache*>(nullptr),
                       static_cast<DModel::SeqCache*>(nullptr)));
  };
  auto backward_fn = [&]() {
    DModel::WindowsCache wcache;
    DModel::SeqCache scache;
    const DTensor pred = forward(&wcache, &scache);
    DTensor grad(pred.shape);
    for (std::size_t i = 0; i < pred.size(); ++i)
      grad.data[i] = 2.0 * (pred.data[i] - target.data[i]) / static_cast<double>(pred.size());
    if (cfg.recurrent())
      model.backward_chunks(grad, scache);
    else
      model.backward_windows(grad, wcache);
  };

  return gradient_check(loss_fn, backward_fn, model.params(), eps);
}

}  // namespace avse
