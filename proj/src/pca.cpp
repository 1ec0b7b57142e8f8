#include "avse/pca.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace avse {

PcaModel pca_fit(const Tensor& data, int k) {
  if (data.ndim() != 2) throw std::invalid_argument("pca_fit: expected [N x D] matrix");
  const int N = data.dim(0), D = data.dim(1);
  if (k <= 0 || k > D) throw std::invalid_argument("pca_fit: invalid k");
  if (N <= k)
    throw std::invalid_argument("pca_fit: need more samples (" + std::to_string(N) +
                                ") than components (" + std::to_string(k) + ")");
  PcaModel m;
  m.mean.assign(static_cast<std::size_t>(D), 0.0);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < D; ++j) m.mean[static_cast<std::size_t>(j)] += data.at2(i, j);
  for (int j = 0; j < D; ++j) m.mean[static_cast<std::size_t>(j)] /= N;

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(D, D);
  Eigen::VectorXd row(D);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < D; ++j) row(j) = data.at2(i, j) - m.mean[static_cast<std::size_t>(j)];
    cov.selfadjointView<Eigen::Lower>().rankUpdate(row);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(N - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw std::runtime_error("pca_fit: eigendecomposition failed");
  // eigenvalues come out ascending; take the top k in descending order
  m.components.resize(static_cast<std::size_t>(k));
  m.explained_variance.resize(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    const int src = D - 1 - c;
    Eigen::VectorXd v = es.eigenvectors().col(src);
    int imax = 0;
    for (int j = 1; j < D; ++j)
      if (std::abs(v(j)) > std::abs(v(imax))) imax = j;
    if (v(imax) < 0.0) v = -v;
    auto& comp = m.components[static_cast<std::size_t>(c)];
    comp.resize(static_cast<std::size_t>(D));
    for (int j = 0; j < D; ++j) comp[static_cast<std::size_t>(j)] = v(j);
    m.explained_variance[static_cast<std::size_t>(c)] = std::max(es.eigenvalues()(src), 0.0);
  }
  return m;
}

Tensor pca_transform(const PcaModel& model, const Tensor& x) {
  if (x.ndim() != 2 || x.dim(1) != model.in_dim())
    throw std::invalid_argument("pca_transform: input " + shape_str(x.shape) +
                                " does not match model dim " + std::to_string(model.in_dim()));
  const int N = x.dim(0), D = model.in_dim(), K = model.out_dim();
  Tensor y({N, K});
  for (int i = 0; i < N; ++i)
    for (int c = 0; c < K; ++c) {
      double acc = 0.0;
      const auto& comp = model.components[static_cast<std::size_t>(c)];
      for (int j = 0; j < D; ++j)
        acc += comp[static_cast<std::size_t>(j)] *
               (x.at2(i, j) - model.mean[static_cast<std::size_t>(j)]);
      y.at2(i, c) = static_cast<float>(acc);
    }
  return y;
}

Tensor pca_inverse(const PcaModel& model, const Tensor& y) {
  if (y.ndim() != 2 || y.dim(1) != model.out_dim())
    throw std::invalid_argument("pca_inverse: input " + shape_str(y.shape) +
                                " does not match model k " + std::to_string(model.out_dim()));
  const int N = y.dim(0), D = model.in_dim(), K = model.out_dim();
  Tensor x({N, D});
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < D; ++j) {
      double acc = model.mean[static_cast<std::size_t>(j)];
      for (int c = 0; c < K; ++c)
        acc += model.components[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] *
               y.at2(i, c);
      x.at2(i, j) = static_cast<float>(acc);
    }
  return x;
}

}  // namespace avse
