#pragma once

// Layer kernels: fully connected, activations, batch normalization, 2-D
// convolution/pooling and LSTM sequence forward/backward. Each kernel is a
// pure function of its inputs plus an explicit cache consumed by the matching
// backward. Matrix products go through Eigen.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "avse/tensor.hpp"

namespace avse {

enum class Mode { train, infer };

template <class S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MatMap = Eigen::Map<EMat<S>>;
template <class S>
using CMatMap = Eigen::Map<const EMat<S>>;

template <class S>
MatMap<S> as_mat(TensorT<S>& t, int rows, int cols) {
  return MatMap<S>(t.ptr(), rows, cols);
}
template <class S>
CMatMap<S> as_mat(const TensorT<S>& t, int rows, int cols) {
  return CMatMap<S>(t.ptr(), rows, cols);
}

// ---------------------------------------------------------------------------
// Fully connected: y = x * W^T + b,  x [B x Din], W [Dout x Din], b [Dout].

template <class S>
TensorT<S> fc_forward(const TensorT<S>& x, const ParamT<S>& W, const ParamT<S>& b) {
  if (x.ndim() != 2 || W.value.ndim() != 2 || x.dim(1) != W.value.dim(1))
    throw std::invalid_argument("fc_forward: input " + shape_str(x.shape) +
                                " incompatible with weight " + shape_str(W.value.shape));
  const int B = x.dim(0), Din = x.dim(1), Dout = W.value.dim(0);
  if (b.value.size() != static_cast<std::size_t>(Dout))
    throw std::invalid_argument("fc_forward: bias " + shape_str(b.value.shape) +
                                " does not match weight " + shape_str(W.value.shape));
  TensorT<S> y({B, Dout});
  as_mat(y, B, Dout).noalias() = as_mat(x, B, Din) * as_mat(W.value, Dout, Din).transpose();
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < Dout; ++j) y.at2(i, j) += b.value[static_cast<std::size_t>(j)];
  return y;
}

// grad_in = grad_out * W; W.grad += grad_out^T * x; b.grad += colsum(grad_out).
template <class S>
TensorT<S> fc_backward(const TensorT<S>& grad_out, const TensorT<S>& x, ParamT<S>& W,
                       ParamT<S>& b) {
  const int B = x.dim(0), Din = x.dim(1), Dout = W.value.dim(0);
  if (grad_out.ndim() != 2 || grad_out.dim(0) != B || grad_out.dim(1) != Dout)
    throw std::invalid_argument("fc_backward: grad " + shape_str(grad_out.shape) +
                                " does not match cached input " + shape_str(x.shape));
  as_mat(W.grad, Dout, Din).noalias() +=
      as_mat(grad_out, B, Dout).transpose() * as_mat(x, B, Din);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < Dout; ++j) b.grad[static_cast<std::size_t>(j)] += grad_out.at2(i, j);
  TensorT<S> gx({B, Din});
  as_mat(gx, B, Din).noalias() = as_mat(grad_out, B, Dout) * as_mat(W.value, Dout, Din);
  return gx;
}

// ---------------------------------------------------------------------------
// Element-wise activations.

enum class Act { sigmoid, tanh_, relu, identity };

template <class S>
S act_eval(S x, Act kind) {
  switch (kind) {
    case Act::sigmoid: return S(1) / (S(1) + std::exp(-x));
    case Act::tanh_: return std::tanh(x);
    case Act::relu: return x > S(0) ? x : S(0);
    case Act::identity: return x;
  }
  return x;
}

template <class S>
TensorT<S> act_forward(const TensorT<S>& x, Act kind) {
  TensorT<S> y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = act_eval(x[i], kind);
  return y;
}

// Adjoint; y is the forward output, x the forward input.
template <class S>
TensorT<S> act_backward(const TensorT<S>& grad_out, const TensorT<S>& x, const TensorT<S>& y,
                        Act kind) {
  check_same_shape(grad_out.shape, y.shape, "act_backward");
  TensorT<S> gx(x.shape);
  switch (kind) {
    case Act::sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] = grad_out[i] * y[i] * (S(1) - y[i]);
      break;
    case Act::tanh_:
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] = grad_out[i] * (S(1) - y[i] * y[i]);
      break;
    case Act::relu:
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > S(0) ? grad_out[i] : S(0);
      break;
    case Act::identity:
      gx = grad_out;
      break;
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Batch normalization over the batch dimension of a [B x D] matrix.

template <class S>
struct BatchNormT {
  ParamT<S> gamma, beta;
  TensorT<S> running_mean, running_var;
  S momentum = S(0.1);
  S epsilon = S(1e-5);

  BatchNormT() = default;
  BatchNormT(int D, const std::string& name)
      : gamma({D}, name + ".gamma"),
        beta({D}, name + ".beta"),
        running_mean({D}),
        running_var({D}) {
    gamma.value.fill(S(1));
    running_var.fill(S(1));
    gamma.bn_affine = beta.bn_affine = true;
  }

  int dim() const { return gamma.value.dim(0); }

  struct Cache {
    TensorT<S> xhat;             // normalized pre-affine input
    std::vector<S> inv_std;      // per-dim 1/sqrt(var+eps)
    int B = 0;
  };

  TensorT<S> forward(const TensorT<S>& x, Mode mode, Cache* cache = nullptr) {
    const int D = dim();
    if (x.ndim() != 2 || x.dim(1) != D)
      throw std::invalid_argument("batchnorm: input " + shape_str(x.shape) +
                                  " does not match feature dim " + std::to_string(D));
    const int B = x.dim(0);
    TensorT<S> y({B, D});
    if (mode == Mode::train) {
      if (B < 2) throw std::invalid_argument("batchnorm: train mode requires batch size >= 2");
      std::vector<S> mean(D, S(0)), var(D, S(0)), inv_std(D);
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < D; ++j) mean[static_cast<std::size_t>(j)] += x.at2(i, j);
      for (int j = 0; j < D; ++j) mean[static_cast<std::size_t>(j)] /= static_cast<S>(B);
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < D; ++j) {
          const S d = x.at2(i, j) - mean[static_cast<std::size_t>(j)];
          var[static_cast<std::size_t>(j)] += d * d;
        }
      for (int j = 0; j < D; ++j) var[static_cast<std::size_t>(j)] /= static_cast<S>(B);
      for (int j = 0; j < D; ++j)
        inv_std[static_cast<std::size_t>(j)] =
            S(1) / std::sqrt(var[static_cast<std::size_t>(j)] + epsilon);
      TensorT<S> xhat({B, D});
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < D; ++j) {
          const std::size_t jj = static_cast<std::size_t>(j);
          xhat.at2(i, j) = (x.at2(i, j) - mean[jj]) * inv_std[jj];
          y.at2(i, j) = gamma.value[jj] * xhat.at2(i, j) + beta.value[jj];
        }
      // running stats use the unbiased variance estimate
      const S unbias = B > 1 ? static_cast<S>(B) / static_cast<S>(B - 1) : S(1);
      for (int j = 0; j < D; ++j) {
        const std::size_t jj = static_cast<std::size_t>(j);
        running_mean[jj] = (S(1) - momentum) * running_mean[jj] + momentum * mean[jj];
        running_var[jj] = (S(1) - momentum) * running_var[jj] + momentum * var[jj] * unbias;
      }
      if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->B = B;
      }
    } else {
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < D; ++j) {
          const std::size_t jj = static_cast<std::size_t>(j);
          y.at2(i, j) = gamma.value[jj] * (x.at2(i, j) - running_mean[jj]) /
                            std::sqrt(running_var[jj] + epsilon) +
                        beta.value[jj];
        }
    }
    return y;
  }

  // Train-mode adjoint through the batch statistics.
  TensorT<S> backward(const TensorT<S>& grad_out, const Cache& cache) {
    const int B = cache.B, D = dim();
    check_same_shape(grad_out.shape, cache.xhat.shape, "batchnorm backward");
    TensorT<S> gx({B, D});
    for (int j = 0; j < D; ++j) {
      const std::size_t jj = static_cast<std::size_t>(j);
      S sum_g = S(0), sum_gx = S(0);
      for (int i = 0; i < B; ++i) {
        const S g = grad_out.at2(i, j);
        sum_g += g;
        sum_gx += g * cache.xhat.at2(i, j);
        beta.grad[jj] += g;
        gamma.grad[jj] += g * cache.xhat.at2(i, j);
      }
      const S scale = gamma.value[jj] * cache.inv_std[jj] / static_cast<S>(B);
      for (int i = 0; i < B; ++i) {
        gx.at2(i, j) = scale * (static_cast<S>(B) * grad_out.at2(i, j) - sum_g -
                                cache.xhat.at2(i, j) * sum_gx);
      }
    }
    return gx;
  }
};

using BatchNorm = BatchNormT<float>;

// ---------------------------------------------------------------------------
// 2-D convolution (cross-correlation, valid padding) via im2col + GEMM.
// x [B x Cin x H x W], kernels [Cout x Cin x kH x kW] -> y [B x Cout x Ho x Wo].

inline int conv_out_dim(int n, int k, int s) { return (n - k) / s + 1; }

template <class S>
struct Conv2dCache {
  TensorT<S> cols;  // [B*Ho*Wo x Cin*kH*kW]
  int B = 0, Ho = 0, Wo = 0;
  std::vector<int> x_shape;
};

template <class S>
TensorT<S> conv2d_forward(const TensorT<S>& x, const ParamT<S>& kernels, const ParamT<S>& bias,
                          int sH, int sW, Conv2dCache<S>* cache = nullptr) {
  if (x.ndim() != 4 || kernels.value.ndim() != 4)
    throw std::invalid_argument("conv2d: expected 4-d input and kernels");
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = kernels.value.dim(0), kH = kernels.value.dim(2), kW = kernels.value.dim(3);
  if (kernels.value.dim(1) != Cin)
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(x.shape) +
                                " vs kernels " + shape_str(kernels.value.shape));
  if (kH > H || kW > W)
    throw std::invalid_argument("conv2d: kernel " + shape_str(kernels.value.shape) +
                                " larger than input " + shape_str(x.shape));
  const int Ho = conv_out_dim(H, kH, sH), Wo = conv_out_dim(W, kW, sW);
  const int K = Cin * kH * kW;
  TensorT<S> cols({B * Ho * Wo, K});
  std::size_t r = 0;
  for (int b = 0; b < B; ++b)
    for (int oi = 0; oi < Ho; ++oi)
      for (int oj = 0; oj < Wo; ++oj) {
        S* dst = cols.ptr() + r * static_cast<std::size_t>(K);
        for (int c = 0; c < Cin; ++c)
          for (int di = 0; di < kH; ++di) {
            const S* src = &x.at4(b, c, oi * sH + di, oj * sW);
            for (int dj = 0; dj < kW; ++dj) *dst++ = src[dj];
          }
        ++r;
      }
  TensorT<S> y({B, Cout, Ho, Wo});
  // y (rows = output positions, cols = Cout), then transpose into layout
  EMat<S> prod = as_mat(cols, B * Ho * Wo, K) * as_mat(kernels.value, Cout, K).transpose();
  for (int b = 0; b < B; ++b)
    for (int oi = 0; oi < Ho; ++oi)
      for (int oj = 0; oj < Wo; ++oj) {
        const int row = (b * Ho + oi) * Wo + oj;
        for (int c = 0; c < Cout; ++c)
          y.at4(b, c, oi, oj) = prod(row, c) + bias.value[static_cast<std::size_t>(c)];
      }
  if (cache) {
    cache->cols = std::move(cols);
    cache->B = B;
    cache->Ho = Ho;
    cache->Wo = Wo;
    cache->x_shape = x.shape;
  }
  return y;
}

template <class S>
TensorT<S> conv2d_backward(const TensorT<S>& grad_out, const Conv2dCache<S>& cache,
                           ParamT<S>& kernels, ParamT<S>& bias, int sH, int sW) {
  const int B = cache.B, Ho = cache.Ho, Wo = cache.Wo;
  const int Cout = kernels.value.dim(0), Cin = kernels.value.dim(1);
  const int kH = kernels.value.dim(2), kW = kernels.value.dim(3);
  if (grad_out.ndim() != 4 || grad_out.dim(0) != B || grad_out.dim(1) != Cout ||
      grad_out.dim(2) != Ho || grad_out.dim(3) != Wo)
    throw std::invalid_argument("conv2d_backward: grad " + shape_str(grad_out.shape) +
                                " does not match cached forward");
  const int K = Cin * kH * kW;
  // rearrange grad to [B*Ho*Wo x Cout]
  TensorT<S> g({B * Ho * Wo, Cout});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < Cout; ++c)
      for (int oi = 0; oi < Ho; ++oi)
        for (int oj = 0; oj < Wo; ++oj)
          g.at2((b * Ho + oi) * Wo + oj, c) = grad_out.at4(b, c, oi, oj);
  as_mat(kernels.grad, Cout, K).noalias() +=
      as_mat(g, B * Ho * Wo, Cout).transpose() * as_mat(cache.cols, B * Ho * Wo, K);
  for (int c = 0; c < Cout; ++c) {
    S s = S(0);
    for (int r = 0; r < B * Ho * Wo; ++r) s += g.at2(r, c);
    bias.grad[static_cast<std::size_t>(c)] += s;
  }
  TensorT<S> dcols({B * Ho * Wo, K});
  as_mat(dcols, B * Ho * Wo, K).noalias() =
      as_mat(g, B * Ho * Wo, Cout) * as_mat(kernels.value, Cout, K);
  // col2im scatter-add
  TensorT<S> gx(cache.x_shape);
  std::size_t r = 0;
  for (int b = 0; b < B; ++b)
    for (int oi = 0; oi < Ho; ++oi)
      for (int oj = 0; oj < Wo; ++oj) {
        const S* src = dcols.ptr() + r * static_cast<std::size_t>(K);
        for (int c = 0; c < Cin; ++c)
          for (int di = 0; di < kH; ++di) {
            S* dst = &gx.at4(b, c, oi * sH + di, oj * sW);
            for (int dj = 0; dj < kW; ++dj) dst[dj] += *src++;
          }
        ++r;
      }
  return gx;
}

// ---------------------------------------------------------------------------
// Max pooling. Ties route the gradient to the first (lowest-index) maximum.

template <class S>
struct MaxPoolCache {
  std::vector<std::size_t> argmax;  // flat input index per output element
  std::vector<int> x_shape;
};

template <class S>
TensorT<S> maxpool2d_forward(const TensorT<S>& x, int kH, int kW, int sH, int sW,
                             MaxPoolCache<S>* cache = nullptr) {
  if (x.ndim() != 4) throw std::invalid_argument("maxpool2d: expected 4-d input");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (kH > H || kW > W || kH <= 0 || kW <= 0)
    throw std::invalid_argument("maxpool2d: window " + std::to_string(kH) + "x" +
                                std::to_string(kW) + " does not fit input " +
                                shape_str(x.shape));
  const int Ho = conv_out_dim(H, kH, sH), Wo = conv_out_dim(W, kW, sW);
  TensorT<S> y({B, C, Ho, Wo});
  std::vector<std::size_t> argmax(y.size());
  std::size_t out = 0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int oi = 0; oi < Ho; ++oi)
        for (int oj = 0; oj < Wo; ++oj) {
          S best = x.at4(b, c, oi * sH, oj * sW);
          std::size_t best_idx =
              ((static_cast<std::size_t>(b) * C + c) * H + oi * sH) * W + oj * sW;
          for (int di = 0; di < kH; ++di)
            for (int dj = 0; dj < kW; ++dj) {
              const S v = x.at4(b, c, oi * sH + di, oj * sW + dj);
              if (v > best) {
                best = v;
                best_idx = ((static_cast<std::size_t>(b) * C + c) * H + oi * sH + di) * W +
                           oj * sW + dj;
              }
            }
          y[out] = best;
          argmax[out] = best_idx;
          ++out;
        }
  if (cache) {
    cache->argmax = std::move(argmax);
    cache->x_shape = x.shape;
  }
  return y;
}

template <class S>
TensorT<S> maxpool2d_backward(const TensorT<S>& grad_out, const MaxPoolCache<S>& cache) {
  if (grad_out.size() != cache.argmax.size())
    throw std::invalid_argument("maxpool2d_backward: grad does not match cached forward");
  TensorT<S> gx(cache.x_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) gx[cache.argmax[i]] += grad_out[i];
  return gx;
}

// ---------------------------------------------------------------------------
// LSTM. Gate blocks ordered (input, forget, cell, output) along the 4H axis.

template <class S>
struct LstmParamsT {
  ParamT<S> W_x;  // [4H x Din]
  ParamT<S> W_h;  // [4H x H]
  ParamT<S> b;    // [4H]
  int H = 0, Din = 0;

  LstmParamsT() = default;
  LstmParamsT(int din, int h, const std::string& name)
      : W_x({4 * h, din}, name + ".W_x"),
        W_h({4 * h, h}, name + ".W_h"),
        b({4 * h}, name + ".b"),
        H(h),
        Din(din) {}
};

template <class S>
struct LstmStateT {
  TensorT<S> h, c;
  explicit LstmStateT(int H) : h({H}), c({H}) {}
};

// Single step on vectors, the primitive the sequence kernels are built from.
template <class S>
void lstm_step(const TensorT<S>& x, LstmStateT<S>& state, const LstmParamsT<S>& p) {
  const int H = p.H;
  if (x.ndim() != 1 || x.dim(0) != p.Din || state.h.dim(0) != H)
    throw std::invalid_argument("lstm_step: input " + shape_str(x.shape) +
                                " incompatible with cell (Din=" + std::to_string(p.Din) +
                                ", H=" + std::to_string(H) + ")");
  std::vector<S> z(static_cast<std::size_t>(4 * H));
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> zv(z.data(), 4 * H);
  zv.noalias() = as_mat(p.W_x.value, 4 * H, p.Din) *
                 Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(x.ptr(), p.Din);
  zv.noalias() += as_mat(p.W_h.value, 4 * H, H) *
                  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(state.h.ptr(), H);
  for (int j = 0; j < 4 * H; ++j) z[static_cast<std::size_t>(j)] += p.b.value[static_cast<std::size_t>(j)];
  for (int j = 0; j < H; ++j) {
    const S i = act_eval(z[static_cast<std::size_t>(j)], Act::sigmoid);
    const S f = act_eval(z[static_cast<std::size_t>(H + j)], Act::sigmoid);
    const S g = act_eval(z[static_cast<std::size_t>(2 * H + j)], Act::tanh_);
    const S o = act_eval(z[static_cast<std::size_t>(3 * H + j)], Act::sigmoid);
    const S c_new = f * state.c[static_cast<std::size_t>(j)] + i * g;
    state.c[static_cast<std::size_t>(j)] = c_new;
    state.h[static_cast<std::size_t>(j)] = o * std::tanh(c_new);
  }
}

// Whole-sequence forward with zero initial state. X [T x Din] -> H_out [T x H].
template <class S>
struct LstmSeqCache {
  TensorT<S> X;               // [T x Din]
  TensorT<S> gates;           // [T x 4H], post-activation (i,f,g,o)
  TensorT<S> cs;              // [T x H] cell states
  TensorT<S> hs;              // [T x H] hidden states
  int T = 0;
};

template <class S>
TensorT<S> lstm_seq_forward(const TensorT<S>& X, const LstmParamsT<S>& p,
                            LstmSeqCache<S>* cache = nullptr) {
  if (X.ndim() != 2 || X.dim(1) != p.Din)
    throw std::invalid_argument("lstm_seq_forward: input " + shape_str(X.shape) +
                                " incompatible with Din=" + std::to_string(p.Din));
  const int T = X.dim(0), H = p.H;
  // input contribution for all steps in one product
  TensorT<S> Z({T, 4 * H});
  as_mat(Z, T, 4 * H).noalias() = as_mat(X, T, p.Din) * as_mat(p.W_x.value, 4 * H, p.Din).transpose();
  TensorT<S> gates({T, 4 * H}), cs({T, H}), hs({T, H});
  std::vector<S> h_prev(static_cast<std::size_t>(H), S(0)), c_prev(static_cast<std::size_t>(H), S(0));
  std::vector<S> z(static_cast<std::size_t>(4 * H));
  for (int t = 0; t < T; ++t) {
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> zv(z.data(), 4 * H);
    zv = CMatMap<S>(Z.ptr() + static_cast<std::size_t>(t) * 4 * H, 1, 4 * H).transpose();
    zv.noalias() += as_mat(p.W_h.value, 4 * H, H) *
                    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(h_prev.data(), H);
    for (int j = 0; j < 4 * H; ++j) z[static_cast<std::size_t>(j)] += p.b.value[static_cast<std::size_t>(j)];
    for (int j = 0; j < H; ++j) {
      const std::size_t jj = static_cast<std::size_t>(j);
      const S gi = act_eval(z[jj], Act::sigmoid);
      const S gf = act_eval(z[static_cast<std::size_t>(H) + jj], Act::sigmoid);
      const S gg = act_eval(z[static_cast<std::size_t>(2 * H) + jj], Act::tanh_);
      const S go = act_eval(z[static_cast<std::size_t>(3 * H) + jj], Act::sigmoid);
      const S c_new = gf * c_prev[jj] + gi * gg;
      gates.at2(t, j) = gi;
      gates.at2(t, H + j) = gf;
      gates.at2(t, 2 * H + j) = gg;
      gates.at2(t, 3 * H + j) = go;
      cs.at2(t, j) = c_new;
      hs.at2(t, j) = go * std::tanh(c_new);
      c_prev[jj] = c_new;
    }
    for (int j = 0; j < H; ++j) h_prev[static_cast<std::size_t>(j)] = hs.at2(t, j);
  }
  TensorT<S> out = hs;
  if (cache) {
    cache->X = X;
    cache->gates = std::move(gates);
    cache->cs = std::move(cs);
    cache->hs = std::move(hs);
    cache->T = T;
  }
  return out;
}

// BPTT over the cached sequence; accumulates into the cell parameters and
// returns the gradient w.r.t. X.
template <class S>
TensorT<S> lstm_seq_backward(const TensorT<S>& dH, const LstmSeqCache<S>& cache,
                             LstmParamsT<S>& p) {
  const int T = cache.T, H = p.H;
  if (dH.ndim() != 2 || dH.dim(0) != T || dH.dim(1) != H)
    throw std::invalid_argument("lstm_seq_backward: grad " + shape_str(dH.shape) +
                                " does not match cached sequence");
  TensorT<S> dZ({T, 4 * H});  // pre-activation gate gradients
  std::vector<S> dh_next(static_cast<std::size_t>(H), S(0)), dc_next(static_cast<std::size_t>(H), S(0));
  for (int t = T - 1; t >= 0; --t) {
    for (int j = 0; j < H; ++j) {
      const std::size_t jj = static_cast<std::size_t>(j);
      const S gi = cache.gates.at2(t, j);
      const S gf = cache.gates.at2(t, H + j);
      const S gg = cache.gates.at2(t, 2 * H + j);
      const S go = cache.gates.at2(t, 3 * H + j);
      const S ct = cache.cs.at2(t, j);
      const S tc = std::tanh(ct);
      const S dh = dH.at2(t, j) + dh_next[jj];
      const S dc = dh * go * (S(1) - tc * tc) + dc_next[jj];
      const S c_prev = t > 0 ? cache.cs.at2(t - 1, j) : S(0);
      const S di = dc * gg;
      const S df = dc * c_prev;
      const S dg = dc * gi;
      const S do_ = dh * tc;
      dZ.at2(t, j) = di * gi * (S(1) - gi);
      dZ.at2(t, H + j) = df * gf * (S(1) - gf);
      dZ.at2(t, 2 * H + j) = dg * (S(1) - gg * gg);
      dZ.at2(t, 3 * H + j) = do_ * go * (S(1) - go);
      dc_next[jj] = dc * gf;
    }
    // dh_next = W_h^T * dz_t
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> dhn(dh_next.data(), H);
    dhn.noalias() = as_mat(p.W_h.value, 4 * H, H).transpose() *
                    CMatMap<S>(dZ.ptr() + static_cast<std::size_t>(t) * 4 * H, 1, 4 * H)
                        .transpose();
  }
  as_mat(p.W_x.grad, 4 * H, p.Din).noalias() +=
      as_mat(dZ, T, 4 * H).transpose() * as_mat(cache.X, T, p.Din);
  if (T > 1) {
    // W_h sees h_{t-1}, i.e. rows 0..T-2 of hs against dZ rows 1..T-1
    CMatMap<S> hs_prev(cache.hs.ptr(), T - 1, H);
    CMatMap<S> dz_next(dZ.ptr() + static_cast<std::size_t>(4 * H), T - 1, 4 * H);
    as_mat(p.W_h.grad, 4 * H, H).noalias() += dz_next.transpose() * hs_prev;
  }
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < 4 * H; ++j) p.b.grad[static_cast<std::size_t>(j)] += dZ.at2(t, j);
  TensorT<S> dX({T, p.Din});
  as_mat(dX, T, p.Din).noalias() = as_mat(dZ, T, 4 * H) * as_mat(p.W_x.value, 4 * H, p.Din);
  return dX;
}

}  // namespace avse
