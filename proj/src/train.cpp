#include "avse/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace avse {

void AdamState::init(const std::vector<Param*>& params) {
  m.clear();
  v.clear();
  for (auto* p : params) {
    m.emplace_back(p->size(), 0.0f);
    v.emplace_back(p->size(), 0.0f);
  }
  t = 0;
}

std::pair<double, Tensor> mse_loss(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred.shape, target.shape, "mse_loss");
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  Tensor grad(pred.shape);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
    grad[i] = static_cast<float>(2.0 * d / n);
  }
  return {acc / n, std::move(grad)};
}

void adam_step(const std::vector<Param*>& params, AdamState& state, const TrainConfig& cfg) {
  if (state.m.size() != params.size()) throw std::logic_error("adam_step: state not initialized");
  if (cfg.clip_norm > 0.0) {
    double sq = 0.0;
    for (auto* p : params)
      for (std::size_t i = 0; i < p->size(); ++i) sq += static_cast<double>(p->grad[i]) * p->grad[i];
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw std::runtime_error("adam_step: non-finite gradient norm");
    if (norm > cfg.clip_norm) {
      const float scale = static_cast<float>(cfg.clip_norm / norm);
      for (auto* p : params)
        for (std::size_t i = 0; i < p->size(); ++i) p->grad[i] *= scale;
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param* p = params[pi];
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = p->grad[i];
      if (!std::isfinite(g))
        throw std::runtime_error("adam_step: non-finite gradient in " + p->name);
      m[i] = static_cast<float>(cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g);
      v[i] = static_cast<float>(cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->value[i] -= static_cast<float>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
    p->zero_grad();
  }
}

std::vector<std::pair<int, int>> make_chunks(int total_frames, int bptt_steps) {
  if (total_frames < 1) throw std::invalid_argument("make_chunks: empty utterance");
  if (bptt_steps < 1) throw std::invalid_argument("make_chunks: bptt_steps must be >= 1");
  std::vector<std::pair<int, int>> chunks;
  for (int off = 0; off < total_frames; off += bptt_steps)
    chunks.emplace_back(off, std::min(bptt_steps, total_frames - off));
  return chunks;
}

std::pair<std::vector<int>, std::vector<int>> split_train_val(int n, double val_fraction,
                                                              std::uint64_t seed) {
  if (n < 10) throw std::invalid_argument("split_train_val: dataset too small (need >= 10)");
  if (val_fraction <= 0.0 || val_fraction >= 1.0)
    throw std::invalid_argument("split_train_val: val_fraction must be in (0,1)");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  int n_val = std::max(1, static_cast<int>(std::lround(n * val_fraction)));
  if (n_val >= n) n_val = n - 1;
  std::vector<int> val(idx.begin(), idx.begin() + n_val);
  std::vector<int> train(idx.begin() + n_val, idx.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

bool early_stop_check(const std::vector<double>& val_history, int patience, double min_rel) {
  if (val_history.empty()) throw std::invalid_argument("early_stop_check: empty history");
  const int n = static_cast<int>(val_history.size());
  if (n < patience) return false;
  // best-so-far at the start of the last `patience` epochs vs best now
  double base = val_history[0];
  for (int i = 1; i <= n - patience; ++i) base = std::min(base, val_history[static_cast<std::size_t>(i)]);
  double best = base;
  for (int i = n - patience + 1; i < n; ++i)
    best = std::min(best, val_history[static_cast<std::size_t>(i)]);
  if (base <= 0.0) return best >= base;
  return (base - best) / base < min_rel;
}

Tensor build_window_batch(const FeatUtterance& u, const std::vector<int>& ts, int n_frames) {
  const int D = u.audio.dim(1), T = u.frames();
  const int half = n_frames / 2;
  Tensor out({static_cast<int>(ts.size()), n_frames * D});
  for (std::size_t r = 0; r < ts.size(); ++r)
    for (int w = 0; w < n_frames; ++w) {
      const int src = std::clamp(ts[r] - half + w, 0, T - 1);
      for (int j = 0; j < D; ++j) out.at2(static_cast<int>(r), w * D + j) = u.audio.at2(src, j);
    }
  return out;
}

namespace {

Tensor gather_rows(const Tensor& m, int off, int len) {
  Tensor out({len, m.dim(1)});
  std::copy(m.ptr() + static_cast<std::size_t>(off) * m.dim(1),
            m.ptr() + static_cast<std::size_t>(off + len) * m.dim(1), out.ptr());
  return out;
}

Tensor lips_to_tensor(const FeatUtterance& u, int off, int len) {
  const int s = u.img;
  Tensor img({len, 1, s, s});
  const std::size_t per = static_cast<std::size_t>(s) * s;
  for (int t = 0; t < len; ++t)
    for (std::size_t i = 0; i < per; ++i)
      img[static_cast<std::size_t>(t) * per + i] =
          static_cast<float>(u.lips[(static_cast<std::size_t>(off) + t) * per + i]) / 255.0f;
  return img;
}

struct Snapshot {
  std::vector<std::vector<float>> params, rmean, rvar;
  void capture(Model& model) {
    params.clear();
    rmean.clear();
    rvar.clear();
    for (auto* p : model.params()) params.push_back(p->value.data);
    for (auto* bn : model.batchnorms()) {
      rmean.push_back(bn->running_mean.data);
      rvar.push_back(bn->running_var.data);
    }
  }
  void restore(Model& model) const {
    auto ps = model.params();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value.data = params[i];
    auto bns = model.batchnorms();
    for (std::size_t i = 0; i < bns.size(); ++i) {
      bns[i]->running_mean.data = rmean[i];
      bns[i]->running_var.data = rvar[i];
    }
  }
};

}  // namespace

double eval_mse(Model& model, const FeatDataset& data) {
  double acc = 0.0;
  std::size_t count = 0;
  const bool bimodal = model.cfg.kind == ModelKind::bimodal_bilstm;
  for (const auto& u : data) {
    Tensor pred;
    if (model.cfg.recurrent()) {
      Tensor images;
      if (bimodal) images = lips_to_tensor(u, 0, u.frames());
      pred = model.forward_sequence(u.audio, bimodal ? &images : nullptr, Mode::infer);
    } else {
      std::vector<int> ts(static_cast<std::size_t>(u.frames()));
      std::iota(ts.begin(), ts.end(), 0);
      Tensor windows = build_window_batch(u, ts, model.cfg.frames_per_window);
      pred = model.forward_windows(windows, Mode::infer);
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = static_cast<double>(pred[i]) - static_cast<double>(u.target[i]);
      acc += d * d;
    }
    count += pred.size();
  }
  if (count == 0) throw std::invalid_argument("eval_mse: empty dataset");
  return acc / static_cast<double>(count);
}

TrainReport train_model(Model& model, const FeatDataset& train_set, const FeatDataset& val_set,
                        const TrainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train: empty train or validation set");
  TrainReport report;
  auto params = model.params();
  AdamState adam;
  adam.init(params);
  model.zero_grads();
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const bool recurrent = model.cfg.recurrent();
  const bool bimodal = model.cfg.kind == ModelKind::bimodal_bilstm;
  const int batch = cfg.batch_size > 0 ? cfg.batch_size : (recurrent ? 8 : 128);

  Snapshot best;
  best.capture(model);
  double best_val = std::numeric_limits<double>::infinity();
  report.stop_reason = "max_epochs";

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t epoch_elems = 0;
    bool diverged = false;
    if (recurrent) {
      std::vector<std::pair<int, std::pair<int, int>>> items;  // (utt, (off,len))
      for (std::size_t ui = 0; ui < train_set.size(); ++ui)
        for (auto ch : make_chunks(train_set[ui].frames(), cfg.bptt_steps))
          items.emplace_back(static_cast<int>(ui), ch);
      std::shuffle(items.begin(), items.end(), rng);
      for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(batch)) {
        const std::size_t end = std::min(items.size(), start + static_cast<std::size_t>(batch));
        int total = 0;
        std::vector<int> lens;
        for (std::size_t i = start; i < end; ++i) {
          lens.push_back(items[i].second.second);
          total += items[i].second.second;
        }
        Tensor audio({total, model.cfg.pca_dim});
        Tensor target({total, model.cfg.output_dim});
        Tensor images;
        if (bimodal) images = Tensor({total, 1, model.cfg.image_size, model.cfg.image_size});
        int off = 0;
        for (std::size_t i = start; i < end; ++i) {
          const auto& u = train_set[static_cast<std::size_t>(items[i].first)];
          const auto [coff, clen] = items[i].second;
          Tensor a = gather_rows(u.audio, coff, clen);
          Tensor tg = gather_rows(u.target, coff, clen);
          std::copy(a.ptr(), a.ptr() + a.size(),
                    audio.ptr() + static_cast<std::size_t>(off) * model.cfg.pca_dim);
          std::copy(tg.ptr(), tg.ptr() + tg.size(),
                    target.ptr() + static_cast<std::size_t>(off) * model.cfg.output_dim);
          if (bimodal) {
            Tensor im = lips_to_tensor(u, coff, clen);
            std::copy(im.ptr(), im.ptr() + im.size(),
                      images.ptr() + static_cast<std::size_t>(off) * model.cfg.image_size *
                                         model.cfg.image_size);
          }
          off += clen;
        }
        Model::SeqCache cache;
        Tensor pred = model.forward_chunks(audio, bimodal ? &images : nullptr, lens,
                                           Mode::train, &cache);
        auto [loss, grad] = mse_loss(pred, target);
        if (!std::isfinite(loss)) {
          diverged = true;
          break;
        }
        model.backward_chunks(grad, cache);
        adam_step(params, adam, cfg);
        epoch_loss += loss * static_cast<double>(pred.size());
        epoch_elems += pred.size();
      }
    } else {
      std::vector<std::pair<int, int>> items;  // (utt, frame)
      for (std::size_t ui = 0; ui < train_set.size(); ++ui)
        for (int t = 0; t < train_set[ui].frames(); ++t)
          items.emplace_back(static_cast<int>(ui), t);
      std::shuffle(items.begin(), items.end(), rng);
      for (std::size_t start = 0; start < items.size(); start += static_cast<std::size_t>(batch)) {
        std::size_t end = std::min(items.size(), start + static_cast<std::size_t>(batch));
        if (end - start < 2) break;  // batchnorm needs >= 2 rows; drop a 1-frame tail
        Tensor windows({static_cast<int>(end - start), model.cfg.dnn_input_dim()});
        Tensor target({static_cast<int>(end - start), model.cfg.output_dim});
        for (std::size_t i = start; i < end; ++i) {
          const auto& u = train_set[static_cast<std::size_t>(items[i].first)];
          Tensor w = build_window_batch(u, {items[i].second}, model.cfg.frames_per_window);
          std::copy(w.ptr(), w.ptr() + w.size(),
                    windows.ptr() + (i - start) * static_cast<std::size_t>(model.cfg.dnn_input_dim()));
          Tensor tg = gather_rows(u.target, items[i].second, 1);
          std::copy(tg.ptr(), tg.ptr() + tg.size(),
                    target.ptr() + (i - start) * static_cast<std::size_t>(model.cfg.output_dim));
        }
        Model::WindowsCache cache;
        Tensor pred = model.forward_windows(windows, Mode::train, &cache);
        auto [loss, grad] = mse_loss(pred, target);
        if (!std::isfinite(loss)) {
          diverged = true;
          break;
        }
        model.backward_windows(grad, cache);
        adam_step(params, adam, cfg);
        epoch_loss += loss * static_cast<double>(pred.size());
        epoch_elems += pred.size();
      }
    }
    if (diverged) {
      report.stop_reason = "diverged";
      break;
    }
    report.train_mse.push_back(epoch_elems ? epoch_loss / static_cast<double>(epoch_elems) : 0.0);
    const double val = eval_mse(model, val_set);
    report.val_mse.push_back(val);
    if (val < best_val) {
      best_val = val;
      report.best_epoch = epoch;
      best.capture(model);
    }
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %3d  train_mse %.6f  val_mse %.6f\n", epoch,
                   report.train_mse.back(), val);
    if (cfg.target_train_mse > 0.0 && report.train_mse.back() < cfg.target_train_mse) {
      report.stop_reason = "target_reached";
      break;
    }
    if (early_stop_check(report.val_mse, cfg.patience_epochs, cfg.min_rel_improvement)) {
      report.stop_reason = "early_stop";
      break;
    }
  }
  best.restore(model);
  report.best_val = best_val;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void write_report_csv(const TrainReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "epoch,train_mse,val_mse\n";
  char buf[64];
  for (std::size_t i = 0; i < report.val_mse.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g\n", i + 1, report.train_mse[i],
                  report.val_mse[i]);
    os << buf;
  }
}

void write_report_summary(const TrainReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "epochs_run " << report.val_mse.size() << "\n"
     << "best_epoch " << report.best_epoch << "\n"
     << "best_val_mse " << report.best_val << "\n"
     << "stop_reason " << report.stop_reason << "\n"
     << "wall_seconds " << report.wall_seconds << "\n";
}

}  // namespace avse
