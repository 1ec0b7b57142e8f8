#pragma once

// The three enhancement architectures: Single-Channel-DNN, Single-Channel-
// BiLSTM and BiModal-BiLSTM. Shared building blocks: a fully connected audio
// feature extractor, a convolutional image feature extractor, a pair of
// opposite-direction LSTMs whose outputs are summed, and a linear output
// projection onto the 161 log-power bins.

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "avse/layers.hpp"
#include "avse/tensor.hpp"

namespace avse {

enum class ModelKind { single_dnn, single_bilstm, bimodal_bilstm };

std::string model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

struct ConvStage {
  int out_channels, k, stride;      // convolution
  int pool_k, pool_stride;          // pooling that follows
};

struct ModelConfig {
  ModelKind kind = ModelKind::single_bilstm;
  int pca_dim = 100;
  int frames_per_window = 1;  // 11 for single_dnn, 1 for the recurrent kinds
  int dnn_h1 = 500, dnn_h2 = 300;
  int audio_out = 400;        // 350 for bimodal
  int image_out = 50;         // bimodal only
  int lstm_hidden = 200;
  int dnn_extra1 = 1000, dnn_extra2 = 500;  // single_dnn tail
  int output_dim = 161;
  int image_size = 64;
  std::vector<ConvStage> cnn;
  int cnn_fc1 = 500, cnn_fc2 = 300;

  static ModelConfig standard(ModelKind k);
  // Small dimensions for 64-bit gradient checking: 16x16 images with a
  // two-stage CNN and all hidden widths divided by 8.
  static ModelConfig reduced(ModelKind k);

  bool recurrent() const { return kind != ModelKind::single_dnn; }
  int dnn_input_dim() const { return pca_dim * frames_per_window; }
  int lstm_input_dim() const {
    return kind == ModelKind::bimodal_bilstm ? audio_out + image_out : audio_out;
  }
  int cnn_flatten_dim() const;
  void validate() const;
};

// --- composable blocks -----------------------------------------------------

template <class S>
struct FcLayerT {
  ParamT<S> W, b;
  FcLayerT() = default;
  FcLayerT(int din, int dout, const std::string& name)
      : W({dout, din}, name + ".W"), b({dout}, name + ".b") {}
};

// FC -> (batchnorm) -> activation
template <class S>
struct FcBlockT {
  FcLayerT<S> fc;
  BatchNormT<S> bn;
  bool has_bn = true;
  Act act = Act::relu;

  FcBlockT() = default;
  FcBlockT(int din, int dout, const std::string& name, bool with_bn = true, Act a = Act::relu)
      : fc(din, dout, name), bn(with_bn ? dout : 1, name + ".bn"), has_bn(with_bn), act(a) {}

  struct Cache {
    TensorT<S> x, z, a_in, y;
    typename BatchNormT<S>::Cache bn;
  };

  TensorT<S> forward(const TensorT<S>& x, Mode mode, Cache* cache = nullptr) {
    TensorT<S> z = fc_forward(x, fc.W, fc.b);
    TensorT<S> a_in = has_bn ? bn.forward(z, mode, cache ? &cache->bn : nullptr) : z;
    TensorT<S> y = act == Act::identity ? a_in : act_forward(a_in, act);
    if (cache) {
      cache->x = x;
      cache->z = std::move(z);
      cache->a_in = a_in;
      cache->y = y;
    }
    return y;
  }

  TensorT<S> backward(const TensorT<S>& grad_out, const Cache& cache) {
    TensorT<S> g = act == Act::identity ? grad_out
                                        : act_backward(grad_out, cache.a_in, cache.y, act);
    if (has_bn) g = bn.backward(g, cache.bn);
    return fc_backward(g, cache.x, fc.W, fc.b);
  }
};

// conv -> per-channel batchnorm -> ReLU -> maxpool, one stage of the CNN
template <class S>
struct ConvStageT {
  ParamT<S> kernels, bias;
  BatchNormT<S> bn;
  ConvStage spec;

  ConvStageT() = default;
  ConvStageT(int cin, const ConvStage& s, const std::string& name)
      : kernels({s.out_channels, cin, s.k, s.k}, name + ".K"),
        bias({s.out_channels}, name + ".b"),
        bn(s.out_channels, name + ".bn"),
        spec(s) {}

  struct Cache {
    Conv2dCache<S> conv;
    typename BatchNormT<S>::Cache bn;
    TensorT<S> a_in, y;  // [B,C,H,W] around the ReLU
    MaxPoolCache<S> pool;
  };

  static TensorT<S> to_rows(const TensorT<S>& x) {  // [B,C,H,W] -> [B*H*W x C]
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    TensorT<S> m({B * H * W, C});
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j) m.at2(((b * H) + i) * W + j, c) = x.at4(b, c, i, j);
    return m;
  }
  static TensorT<S> from_rows(const TensorT<S>& m, const std::vector<int>& shape) {
    TensorT<S> x(shape);
    const int B = shape[0], C = shape[1], H = shape[2], W = shape[3];
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j) x.at4(b, c, i, j) = m.at2(((b * H) + i) * W + j, c);
    return x;
  }

  TensorT<S> forward(const TensorT<S>& x, Mode mode, Cache* cache = nullptr) {
    TensorT<S> z = conv2d_forward(x, kernels, bias, spec.stride, spec.stride,
                                  cache ? &cache->conv : nullptr);
    TensorT<S> rows = to_rows(z);
    TensorT<S> n = bn.forward(rows, mode, cache ? &cache->bn : nullptr);
    TensorT<S> a_in = from_rows(n, z.shape);
    TensorT<S> y = act_forward(a_in, Act::relu);
    TensorT<S> p = maxpool2d_forward(y, spec.pool_k, spec.pool_k, spec.pool_stride,
                                     spec.pool_stride, cache ? &cache->pool : nullptr);
    if (cache) {
      cache->a_in = std::move(a_in);
      cache->y = std::move(y);
    }
    return p;
  }

  TensorT<S> backward(const TensorT<S>& grad_out, const Cache& cache) {
    TensorT<S> g = maxpool2d_backward(grad_out, cache.pool);
    g = act_backward(g, cache.a_in, cache.y, Act::relu);
    TensorT<S> rows = to_rows(g);
    TensorT<S> n = bn.backward(rows, cache.bn);
    TensorT<S> gz = from_rows(n, cache.a_in.shape);
    return conv2d_backward(gz, cache.conv, kernels, bias, spec.stride, spec.stride);
  }
};

// --- the model -------------------------------------------------------------

template <class S>
struct ModelT {
  ModelConfig cfg;

  std::vector<FcBlockT<S>> audio;      // 3 blocks: in -> h1 -> h2 -> audio_out
  std::vector<ConvStageT<S>> cnn;      // bimodal only
  std::vector<FcBlockT<S>> cnn_fc;     // flatten -> fc1 -> fc2 -> image_out
  LstmParamsT<S> lstm_fwd, lstm_bwd;   // recurrent kinds
  FcBlockT<S> extra1, extra2;          // single_dnn tail
  FcLayerT<S> out;                     // linear, no batchnorm, no activation

  explicit ModelT(const ModelConfig& config) : cfg(config) {
    cfg.validate();
    int d = cfg.dnn_input_dim();
    audio.emplace_back(d, cfg.dnn_h1, "audio.fc1");
    audio.emplace_back(cfg.dnn_h1, cfg.dnn_h2, "audio.fc2");
    audio.emplace_back(cfg.dnn_h2, cfg.audio_out, "audio.fc3");
    if (cfg.kind == ModelKind::bimodal_bilstm) {
      int cin = 1;
      for (std::size_t i = 0; i < cfg.cnn.size(); ++i) {
        cnn.emplace_back(cin, cfg.cnn[i], "cnn.stage" + std::to_string(i + 1));
        cin = cfg.cnn[i].out_channels;
      }
      const int flat = cfg.cnn_flatten_dim();
      cnn_fc.emplace_back(flat, cfg.cnn_fc1, "cnn.fc1");
      cnn_fc.emplace_back(cfg.cnn_fc1, cfg.cnn_fc2, "cnn.fc2");
      cnn_fc.emplace_back(cfg.cnn_fc2, cfg.image_out, "cnn.fc3");
    }
    if (cfg.recurrent()) {
      lstm_fwd = LstmParamsT<S>(cfg.lstm_input_dim(), cfg.lstm_hidden, "lstm.fwd");
      lstm_bwd = LstmParamsT<S>(cfg.lstm_input_dim(), cfg.lstm_hidden, "lstm.bwd");
      out = FcLayerT<S>(cfg.lstm_hidden, cfg.output_dim, "out");
    } else {
      extra1 = FcBlockT<S>(cfg.audio_out, cfg.dnn_extra1, "extra.fc1");
      extra2 = FcBlockT<S>(cfg.dnn_extra1, cfg.dnn_extra2, "extra.fc2");
      out = FcLayerT<S>(cfg.dnn_extra2, cfg.output_dim, "out");
    }
  }

  // Parameters in checkpoint declaration order.
  std::vector<ParamT<S>*> params() {
    std::vector<ParamT<S>*> ps;
    auto add_block = [&ps](FcBlockT<S>& b) {
      ps.push_back(&b.fc.W);
      ps.push_back(&b.fc.b);
      if (b.has_bn) {
        ps.push_back(&b.bn.gamma);
        ps.push_back(&b.bn.beta);
      }
    };
    for (auto& b : audio) add_block(b);
    for (auto& s : cnn) {
      ps.push_back(&s.kernels);
      ps.push_back(&s.bias);
      ps.push_back(&s.bn.gamma);
      ps.push_back(&s.bn.beta);
    }
    for (auto& b : cnn_fc) add_block(b);
    if (cfg.recurrent()) {
      for (LstmParamsT<S>* l : {&lstm_fwd, &lstm_bwd}) {
        ps.push_back(&l->W_x);
        ps.push_back(&l->W_h);
        ps.push_back(&l->b);
      }
    } else {
      add_block(extra1);
      add_block(extra2);
    }
    ps.push_back(&out.W);
    ps.push_back(&out.b);
    return ps;
  }

  std::vector<BatchNormT<S>*> batchnorms() {
    std::vector<BatchNormT<S>*> bs;
    for (auto& b : audio)
      if (b.has_bn) bs.push_back(&b.bn);
    for (auto& s : cnn) bs.push_back(&s.bn);
    for (auto& b : cnn_fc)
      if (b.has_bn) bs.push_back(&b.bn);
    if (!cfg.recurrent()) {
      bs.push_back(&extra1.bn);
      bs.push_back(&extra2.bn);
    }
    return bs;
  }

  long param_count(bool include_bn_affine = true) {
    long n = 0;
    for (auto* p : params())
      if (include_bn_affine || !p->bn_affine) n += static_cast<long>(p->size());
    return n;
  }

  void zero_grads() {
    for (auto* p : params()) p->zero_grad();
  }

  // Deterministic initialization: uniform +-sqrt(6/(fan_in+fan_out)) weights,
  // zero biases, +1 forget-gate bias, identity batchnorm affine.
  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uni = [&rng](ParamT<S>& p, int fan_in, int fan_out) {
      const double lim = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-lim, lim);
      for (std::size_t i = 0; i < p.size(); ++i) p.value[i] = static_cast<S>(dist(rng));
    };
    auto init_block = [&uni](FcBlockT<S>& b) {
      uni(b.fc.W, b.fc.W.value.dim(1), b.fc.W.value.dim(0));
      b.fc.b.value.zero();
      if (b.has_bn) {
        b.bn.gamma.value.fill(S(1));
        b.bn.beta.value.zero();
        b.bn.running_mean.zero();
        b.bn.running_var.fill(S(1));
      }
    };
    for (auto& b : audio) init_block(b);
    for (auto& s : cnn) {
      const int cin = s.kernels.value.dim(1), k = s.spec.k;
      uni(s.kernels, cin * k * k, s.spec.out_channels * k * k);
      s.bias.value.zero();
      s.bn.gamma.value.fill(S(1));
      s.bn.beta.value.zero();
      s.bn.running_mean.zero();
      s.bn.running_var.fill(S(1));
    }
    for (auto& b : cnn_fc) init_block(b);
    if (cfg.recurrent()) {
      for (LstmParamsT<S>* l : {&lstm_fwd, &lstm_bwd}) {
        uni(l->W_x, l->Din, l->H);
        uni(l->W_h, l->H, l->H);
        l->b.value.zero();
        for (int j = 0; j < l->H; ++j) l->b.value[static_cast<std::size_t>(l->H + j)] = S(1);
      }
    } else {
      init_block(extra1);
      init_block(extra2);
    }
    uni(out.W, out.W.value.dim(1), out.W.value.dim(0));
    out.b.value.zero();
  }

  // --- Single-Channel-DNN path: [B x 100n] windows -> [B x 161] frames ----

  struct WindowsCache {
    std::vector<typename FcBlockT<S>::Cache> blocks;  // audio, extra1, extra2
    TensorT<S> out_in;
  };

  TensorT<S> forward_windows(const TensorT<S>& x, Mode mode, WindowsCache* cache = nullptr) {
    if (cfg.recurrent())
      throw std::logic_error("forward_windows: model kind is recurrent");
    if (x.ndim() != 2 || x.dim(1) != cfg.dnn_input_dim())
      throw std::invalid_argument("forward_windows: input " + shape_str(x.shape) +
                                  " expected [B x " + std::to_string(cfg.dnn_input_dim()) + "]");
    if (cache) cache->blocks.resize(audio.size() + 2);
    TensorT<S> h = x;
    std::size_t ci = 0;
    for (auto& b : audio) h = b.forward(h, mode, cache ? &cache->blocks[ci++] : nullptr);
    h = extra1.forward(h, mode, cache ? &cache->blocks[ci++] : nullptr);
    h = extra2.forward(h, mode, cache ? &cache->blocks[ci++] : nullptr);
    if (cache) cache->out_in = h;
    return fc_forward(h, out.W, out.b);
  }

  void backward_windows(const TensorT<S>& grad_out, const WindowsCache& cache) {
    TensorT<S> g = fc_backward(grad_out, cache.out_in, out.W, out.b);
    std::size_t ci = cache.blocks.size();
    g = extra2.backward(g, cache.blocks[--ci]);
    g = extra1.backward(g, cache.blocks[--ci]);
    for (auto it = audio.rbegin(); it != audio.rend(); ++it)
      g = it->backward(g, cache.blocks[--ci]);
  }

  // --- recurrent path ------------------------------------------------------
  // Chunks are concatenated along the row axis; per-step feature extractors
  // see all rows as one batch, the LSTMs run per chunk with zero initial
  // state. images (bimodal only) are [N x 1 x s x s] aligned with audio rows.

  struct SeqCache {
    std::vector<typename FcBlockT<S>::Cache> audio_blocks;
    std::vector<std::pair<int, int>> cnn_slices;  // (offset, len) into rows
    std::vector<std::vector<typename ConvStageT<S>::Cache>> cnn_stages;  // per slice
    std::vector<std::vector<typename FcBlockT<S>::Cache>> cnn_fc_blocks; // per slice
    std::vector<std::vector<int>> cnn_conv_in_shape;                     // per slice, per stage
    TensorT<S> X;  // [N x lstm_in]
    std::vector<int> lens;
    std::vector<LstmSeqCache<S>> fwd_caches, bwd_caches;
    TensorT<S> z;  // [N x H], summed bi-directional output
  };

  static TensorT<S> reverse_rows(const TensorT<S>& m) {
    TensorT<S> r(m.shape);
    const int T = m.dim(0), D = m.dim(1);
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < D; ++j) r.at2(t, j) = m.at2(T - 1 - t, j);
    return r;
  }

  static TensorT<S> slice_rows(const TensorT<S>& m, int off, int len) {
    TensorT<S> s({len, m.dim(1)});
    std::copy(m.ptr() + static_cast<std::size_t>(off) * m.dim(1),
              m.ptr() + static_cast<std::size_t>(off + len) * m.dim(1), s.ptr());
    return s;
  }

  // CNN applied to a batch of frames, sliced to bound im2col memory.
  static constexpr int kCnnSlice = 64;

  TensorT<S> forward_images(const TensorT<S>& images, Mode mode, SeqCache* cache) {
    const int N = images.dim(0), s = cfg.image_size;
    if (images.ndim() != 4 || images.dim(1) != 1 || images.dim(2) != s || images.dim(3) != s)
      throw std::invalid_argument("forward: images " + shape_str(images.shape) +
                                  " expected [N x 1 x " + std::to_string(s) + " x " +
                                  std::to_string(s) + "]");
    std::vector<std::pair<int, int>> slices;
    for (int off = 0; off < N;) {
      int len = std::min(kCnnSlice, N - off);
      if (mode == Mode::train && N - off - len == 1) --len;  // avoid a 1-frame tail batch
      slices.emplace_back(off, len);
      off += len;
    }
    TensorT<S> feats({N, cfg.image_out});
    if (cache) {
      cache->cnn_slices = slices;
      cache->cnn_stages.resize(slices.size());
      cache->cnn_fc_blocks.resize(slices.size());
    }
    for (std::size_t si = 0; si < slices.size(); ++si) {
      const auto [off, len] = slices[si];
      TensorT<S> h({len, 1, s, s});
      std::copy(images.ptr() + static_cast<std::size_t>(off) * s * s,
                images.ptr() + static_cast<std::size_t>(off + len) * s * s, h.ptr());
      if (cache) cache->cnn_stages[si].resize(cnn.size());
      for (std::size_t st = 0; st < cnn.size(); ++st)
        h = cnn[st].forward(h, mode, cache ? &cache->cnn_stages[si][st] : nullptr);
      // flatten
      TensorT<S> flat({len, cfg.cnn_flatten_dim()}, std::move(h.data));
      if (cache) cache->cnn_fc_blocks[si].resize(cnn_fc.size());
      TensorT<S> f = flat;
      for (std::size_t fi = 0; fi < cnn_fc.size(); ++fi)
        f = cnn_fc[fi].forward(f, mode, cache ? &cache->cnn_fc_blocks[si][fi] : nullptr);
      std::copy(f.ptr(), f.ptr() + f.size(),
                feats.ptr() + static_cast<std::size_t>(off) * cfg.image_out);
    }
    return feats;
  }

  void backward_images(const TensorT<S>& grad_feats, const SeqCache& cache) {
    for (std::size_t si = 0; si < cache.cnn_slices.size(); ++si) {
      const auto [off, len] = cache.cnn_slices[si];
      TensorT<S> g({len, cfg.image_out});
      std::copy(grad_feats.ptr() + static_cast<std::size_t>(off) * cfg.image_out,
                grad_feats.ptr() + static_cast<std::size_t>(off + len) * cfg.image_out, g.ptr());
      for (std::size_t fi = cnn_fc.size(); fi-- > 0;)
        g = cnn_fc[fi].backward(g, cache.cnn_fc_blocks[si][fi]);
      // unflatten to the last stage's output shape
      const auto& last_pool = cache.cnn_stages[si].back().pool;
      std::vector<int> shp = {len, cfg.cnn.back().out_channels, 0, 0};
      {
        // recover spatial dims from the pool cache's stored output size
        const std::size_t per = g.size();  // len * flat
        (void)per;
        int spatial = cfg.image_size;
        for (const auto& stg : cfg.cnn) {
          spatial = conv_out_dim(spatial, stg.k, stg.stride);
          spatial = conv_out_dim(spatial, stg.pool_k, stg.pool_stride);
        }
        shp[2] = shp[3] = spatial;
        (void)last_pool;
      }
      TensorT<S> h(shp, std::move(g.data));
      for (std::size_t st = cnn.size(); st-- > 0;)
        h = cnn[st].backward(h, cache.cnn_stages[si][st]);
    }
  }

  TensorT<S> forward_chunks(const TensorT<S>& audio_cat, const TensorT<S>* images_cat,
                            const std::vector<int>& lens, Mode mode,
                            SeqCache* cache = nullptr) {
    if (!cfg.recurrent())
      throw std::logic_error("forward_chunks: model kind is not recurrent");
    if (audio_cat.ndim() != 2 || audio_cat.dim(1) != cfg.pca_dim)
      throw std::invalid_argument("forward: audio " + shape_str(audio_cat.shape) +
                                  " expected [N x " + std::to_string(cfg.pca_dim) + "]");
    if (lens.empty()) throw std::invalid_argument("forward: empty sequence list");
    int total = 0;
    for (int l : lens) {
      if (l < 1) throw std::invalid_argument("forward: empty chunk");
      total += l;
    }
    if (total != audio_cat.dim(0))
      throw std::invalid_argument("forward: chunk lengths do not sum to row count");
    if (cfg.kind == ModelKind::bimodal_bilstm) {
      if (!images_cat)
        throw std::invalid_argument("forward: bimodal model requires an image sequence");
      if (images_cat->dim(0) != audio_cat.dim(0))
        throw std::invalid_argument(
            "forward: image sequence length " + std::to_string(images_cat->dim(0)) +
            " does not match audio length " + std::to_string(audio_cat.dim(0)));
    }
    const int N = audio_cat.dim(0), H = cfg.lstm_hidden;
    if (cache) cache->audio_blocks.resize(audio.size());
    TensorT<S> a = audio_cat;
    for (std::size_t i = 0; i < audio.size(); ++i)
      a = audio[i].forward(a, mode, cache ? &cache->audio_blocks[i] : nullptr);
    TensorT<S> X({N, cfg.lstm_input_dim()});
    if (cfg.kind == ModelKind::bimodal_bilstm) {
      TensorT<S> ifeat = forward_images(*images_cat, mode, cache);
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < cfg.audio_out; ++j) X.at2(i, j) = a.at2(i, j);
        for (int j = 0; j < cfg.image_out; ++j) X.at2(i, cfg.audio_out + j) = ifeat.at2(i, j);
      }
    } else {
      X = std::move(a);
    }
    TensorT<S> z({N, H});
    if (cache) {
      cache->fwd_caches.resize(lens.size());
      cache->bwd_caches.resize(lens.size());
      cache->lens = lens;
    }
    int off = 0;
    for (std::size_t ci = 0; ci < lens.size(); ++ci) {
      const int T = lens[ci];
      TensorT<S> xs = slice_rows(X, off, T);
      TensorT<S> yf = lstm_seq_forward(xs, lstm_fwd, cache ? &cache->fwd_caches[ci] : nullptr);
      TensorT<S> yb = lstm_seq_forward(reverse_rows(xs), lstm_bwd,
                                       cache ? &cache->bwd_caches[ci] : nullptr);
      TensorT<S> yb_r = reverse_rows(yb);
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < H; ++j) z.at2(off + t, j) = yf.at2(t, j) + yb_r.at2(t, j);
      off += T;
    }
    if (cache) {
      cache->X = std::move(X);
      cache->z = z;
    }
    return fc_forward(z, out.W, out.b);
  }

  void backward_chunks(const TensorT<S>& grad_out, const SeqCache& cache) {
    const int N = cache.z.dim(0);
    TensorT<S> dz = fc_backward(grad_out, cache.z, out.W, out.b);
    TensorT<S> dX({N, cfg.lstm_input_dim()});
    int off = 0;
    for (std::size_t ci = 0; ci < cache.lens.size(); ++ci) {
      const int T = cache.lens[ci];
      TensorT<S> dzc = slice_rows(dz, off, T);
      TensorT<S> dx_f = lstm_seq_backward(dzc, cache.fwd_caches[ci], lstm_fwd);
      TensorT<S> dx_b = lstm_seq_backward(reverse_rows(dzc), cache.bwd_caches[ci], lstm_bwd);
      TensorT<S> dx_b_r = reverse_rows(dx_b);
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < cfg.lstm_input_dim(); ++j)
          dX.at2(off + t, j) = dx_f.at2(t, j) + dx_b_r.at2(t, j);
      off += T;
    }
    TensorT<S> da({N, cfg.audio_out});
    if (cfg.kind == ModelKind::bimodal_bilstm) {
      TensorT<S> di({N, cfg.image_out});
      for (int i = 0; i < N; ++i) {
        for (int j = 0; j < cfg.audio_out; ++j) da.at2(i, j) = dX.at2(i, j);
        for (int j = 0; j < cfg.image_out; ++j) di.at2(i, j) = dX.at2(i, cfg.audio_out + j);
      }
      backward_images(di, cache);
    } else {
      da = std::move(dX);
    }
    TensorT<S> g = std::move(da);
    for (std::size_t i = audio.size(); i-- > 0;) g = audio[i].backward(g, cache.audio_blocks[i]);
  }

  // Whole-utterance forward, one chunk spanning the sequence.
  TensorT<S> forward_sequence(const TensorT<S>& audio_seq, const TensorT<S>* images, Mode mode,
                              SeqCache* cache = nullptr) {
    if (audio_seq.ndim() != 2 || audio_seq.dim(0) < 1)
      throw std::invalid_argument("forward_sequence: empty sequence");
    return forward_chunks(audio_seq, images, {audio_seq.dim(0)}, mode, cache);
  }
};

using Model = ModelT<float>;
using DModel = ModelT<double>;

}  // namespace avse
