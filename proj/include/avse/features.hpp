#pragma once

// Feature pipeline tying the DSP front-end to the models: log power spectra
// with first/second derivatives, PCA to 100 dimensions, and per-dimension
// standardization of inputs and targets. PCA and both standardizers are fit
// on training utterances only.

#include <vector>

#include "avse/corpus.hpp"
#include "avse/dsp.hpp"
#include "avse/pca.hpp"
#include "avse/train.hpp"

namespace avse {

struct FeaturePipeline {
  PcaModel pca;
  Standardizer input_std;   // 100-d PCA features
  Standardizer target_std;  // 161-d clean log power
};

FeaturePipeline fit_pipeline(const std::vector<Utterance>& train_utts, int pca_dim = 100);

// 483-d delta features of the corrupted signal's log power spectrum.
Tensor corrupted_delta_features(const AudioSignal& corrupted);

FeatUtterance featurize(const Utterance& u, const FeaturePipeline& pipe, bool with_lips);

FeatDataset featurize_all(const std::vector<Utterance>& utts, const FeaturePipeline& pipe,
                          bool with_lips);

}  // namespace avse
