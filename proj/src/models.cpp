#include "avse/models.hpp"

#include <stdexcept>

namespace avse {

std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::single_dnn: return "single_dnn";
    case ModelKind::single_bilstm: return "single_bilstm";
    case ModelKind::bimodal_bilstm: return "bimodal";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "single_dnn") return ModelKind::single_dnn;
  if (name == "single_bilstm") return ModelKind::single_bilstm;
  if (name == "bimodal" || name == "bimodal_bilstm") return ModelKind::bimodal_bilstm;
  throw std::invalid_argument("unknown model kind '" + name +
                              "' (expected single_dnn|single_bilstm|bimodal)");
}

ModelConfig ModelConfig::standard(ModelKind k) {
  ModelConfig c;
  c.kind = k;
  c.frames_per_window = (k == ModelKind::single_dnn) ? 11 : 1;
  c.audio_out = (k == ModelKind::bimodal_bilstm) ? 350 : 400;
  c.cnn = {{8, 5, 1, 5, 2}, {16, 3, 1, 3, 2}, {32, 3, 1, 3, 2}};
  return c;
}

ModelConfig ModelConfig::reduced(ModelKind k) {
  ModelConfig c;
  c.kind = k;
  c.pca_dim = 10;
  c.frames_per_window = (k == ModelKind::single_dnn) ? 11 : 1;
  c.dnn_h1 = 62;
  c.dnn_h2 = 37;
  c.audio_out = (k == ModelKind::bimodal_bilstm) ? 43 : 50;
  c.image_out = 6;
  c.lstm_hidden = 25;
  c.dnn_extra1 = 125;
  c.dnn_extra2 = 62;
  c.output_dim = 20;
  c.image_size = 16;
  c.cnn = {{2, 3, 1, 2, 2}, {4, 3, 1, 2, 2}};  // 16 -> 14 -> 7 -> 5 -> 2
  c.cnn_fc1 = 62;
  c.cnn_fc2 = 37;
  return c;
}

int ModelConfig::cnn_flatten_dim() const {
  int spatial = image_size;
  for (const auto& s : cnn) {
    spatial = conv_out_dim(spatial, s.k, s.stride);
    spatial = conv_out_dim(spatial, s.pool_k, s.pool_stride);
  }
  return spatial * spatial * (cnn.empty() ? 1 : cnn.back().out_channels);
}

void ModelConfig::validate() const {
  if (pca_dim < 1 || output_dim < 1 || dnn_h1 < 1 || dnn_h2 < 1 || audio_out < 1)
    throw std::invalid_argument("model config: non-positive dimension");
  if (kind == ModelKind::single_dnn) {
    if (frames_per_window != 11)
      throw std::invalid_argument("model config: single_dnn uses 11-frame windows");
    if (dnn_extra1 < 1 || dnn_extra2 < 1)
      throw std::invalid_argument("model config: invalid extra layer dims");
  } else {
    if (frames_per_window != 1)
      throw std::invalid_argument("model config: recurrent kinds use 1 frame per step");
    if (lstm_hidden < 1) throw std::invalid_argument("model config: invalid lstm hidden size");
  }
  if (kind == ModelKind::bimodal_bilstm) {
    if (image_out < 1 || cnn.empty())
      throw std::invalid_argument("model config: bimodal requires a CNN");
    int spatial = image_size;
    for (const auto& s : cnn) {
      if (s.k > spatial)
        throw std::invalid_argument("model config: conv kernel exceeds input size");
      spatial = conv_out_dim(spatial, s.k, s.stride);
      if (s.pool_k > spatial)
        throw std::invalid_argument("model config: pool window exceeds input size");
      spatial = conv_out_dim(spatial, s.pool_k, s.pool_stride);
    }
  }
}

}  // namespace avse
