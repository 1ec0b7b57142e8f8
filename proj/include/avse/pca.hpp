#pragma once

// PCA over feature rows; fit uses an eigendecomposition of the covariance.

#include <vector>

#include "avse/tensor.hpp"

namespace avse {

struct PcaModel {
  std::vector<double> mean;                 // [D]
  std::vector<std::vector<double>> components;  // k rows, each length D, orthonormal
  std::vector<double> explained_variance;   // [k], non-increasing

  int in_dim() const { return static_cast<int>(mean.size()); }
  int out_dim() const { return static_cast<int>(components.size()); }
};

// Rows of `data` are observations. Requires N > k. Components carry a fixed
// sign convention: the largest-magnitude coefficient of each is positive.
PcaModel pca_fit(const Tensor& data, int k);

Tensor pca_transform(const PcaModel& model, const Tensor& x);  // [N x D] -> [N x k]
Tensor pca_inverse(const PcaModel& model, const Tensor& y);    // [N x k] -> [N x D]

}  // namespace avse
