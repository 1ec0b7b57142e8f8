#pragma once

// Checkpoint file: little-endian binary, header {magic "BMBL", version},
// model config, parameters as 32-bit floats in declaration order, batchnorm
// running statistics, then the PCA model and the input/target standardizers.

#include <string>

#include "avse/dsp.hpp"
#include "avse/models.hpp"
#include "avse/pca.hpp"

namespace avse {

struct Checkpoint {
  Model model;
  PcaModel pca;
  Standardizer input_std;   // over the 100-d PCA features
  Standardizer target_std;  // over the 161-d clean log power bins

  explicit Checkpoint(const ModelConfig& cfg) : model(cfg) {}
};

void save_checkpoint(Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace avse
