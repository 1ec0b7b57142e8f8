#include "avse/features.hpp"

#include <stdexcept>

namespace avse {

Tensor corrupted_delta_features(const AudioSignal& corrupted) {
  return delta_features(stft(corrupted).log_power);
}

FeaturePipeline fit_pipeline(const std::vector<Utterance>& train_utts, int pca_dim) {
  if (train_utts.empty()) throw std::invalid_argument("fit_pipeline: no training utterances");
  // stack delta features and clean log spectra over all training frames
  int total = 0;
  for (const auto& u : train_utts) total += u.frames;
  Tensor deltas({total, 3 * kBins});
  Tensor clean_lp({total, kBins});
  int off = 0;
  for (const auto& u : train_utts) {
    const Tensor d = corrupted_delta_features(u.corrupted);
    const Tensor c = stft(u.clean).log_power;
    std::copy(d.ptr(), d.ptr() + d.size(), deltas.ptr() + static_cast<std::size_t>(off) * 3 * kBins);
    std::copy(c.ptr(), c.ptr() + c.size(), clean_lp.ptr() + static_cast<std::size_t>(off) * kBins);
    off += u.frames;
  }
  FeaturePipeline pipe;
  pipe.pca = pca_fit(deltas, pca_dim);
  pipe.input_std = standardize_fit(pca_transform(pipe.pca, deltas));
  pipe.target_std = standardize_fit(clean_lp);
  return pipe;
}

FeatUtterance featurize(const Utterance& u, const FeaturePipeline& pipe, bool with_lips) {
  FeatUtterance f;
  f.id = u.meta.id;
  f.audio = pipe.input_std.apply(pca_transform(pipe.pca, corrupted_delta_features(u.corrupted)));
  f.target = pipe.target_std.apply(stft(u.clean).log_power);
  if (with_lips) {
    f.lips = u.lips;
    f.img = kLipSize;
  }
  return f;
}

FeatDataset featurize_all(const std::vector<Utterance>& utts, const FeaturePipeline& pipe,
                          bool with_lips) {
  FeatDataset out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(featurize(u, pipe, with_lips));
  return out;
}

}  // namespace avse
