#include "avse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "avse/features.hpp"
#include "avse/train.hpp"

namespace avse {

namespace {

Tensor lips_tensor(const std::vector<std::uint8_t>& lips, int frames, int s) {
  if (lips.size() != static_cast<std::size_t>(frames) * s * s)
    throw std::invalid_argument("enhance: lip data has " + std::to_string(lips.size()) +
                                " bytes, expected " + std::to_string(frames) + " frames of " +
                                std::to_string(s) + "x" + std::to_string(s));
  Tensor img({frames, 1, s, s});
  for (std::size_t i = 0; i < lips.size(); ++i)
    img.data[i] = static_cast<float>(lips[i]) / 255.0f;
  return img;
}

std::string fmt_snr(double snr_db) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", snr_db);
  return buf;
}

}  // namespace

EnhanceResult enhance(Checkpoint& ckpt, const AudioSignal& corrupted,
                      const std::vector<std::uint8_t>* lips) {
  const SpectralFrames spec = stft(corrupted);
  const int T = spec.frames();
  const Tensor feats =
      ckpt.input_std.apply(pca_transform(ckpt.pca, delta_features(spec.log_power)));

  Tensor pred;
  const ModelConfig& cfg = ckpt.model.cfg;
  if (cfg.kind == ModelKind::single_dnn) {
    FeatUtterance u;
    u.audio = feats;
    std::vector<int> ts(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) ts[static_cast<std::size_t>(t)] = t;
    pred = ckpt.model.forward_windows(build_window_batch(u, ts, cfg.frames_per_window),
                                      Mode::infer);
  } else if (cfg.kind == ModelKind::bimodal_bilstm) {
    if (!lips) throw std::invalid_argument("enhance: bimodal checkpoint needs lip frames");
    Tensor img = lips_tensor(*lips, T, cfg.image_size);
    pred = ckpt.model.forward_sequence(feats, &img, Mode::infer);
  } else {
    pred = ckpt.model.forward_sequence(feats, nullptr, Mode::infer);
  }

  EnhanceResult res;
  res.pred_logpow = ckpt.target_std.invert(pred);
  res.audio = istft({res.pred_logpow, spec.phase});
  for (float& x : res.audio.samples) x = std::clamp(x, -1.0f, 1.0f);
  return res;
}

namespace {

Tensor head_rows(const Tensor& x, int rows) {
  if (x.dim(0) == rows) return x;
  Tensor out({rows, x.dim(1)});
  std::copy(x.ptr(), x.ptr() + out.size(), out.ptr());
  return out;
}

}  // namespace

double metric_mse(const Tensor& pred_logpow, const Tensor& clean_logpow,
                  const Standardizer& target_std) {
  const int T = std::min(pred_logpow.dim(0), clean_logpow.dim(0));
  return mse_loss(target_std.apply(head_rows(pred_logpow, T)),
                  target_std.apply(head_rows(clean_logpow, T)))
      .first;
}

double metric_lsd(const Tensor& pred_logpow, const Tensor& clean_logpow) {
  if (pred_logpow.dim(1) != clean_logpow.dim(1))
    throw std::invalid_argument("metric_lsd: bin counts differ");
  const int T = std::min(pred_logpow.dim(0), clean_logpow.dim(0));
  const int F = pred_logpow.dim(1);
  const double k = 10.0 / std::log(10.0);  // ln power -> dB
  double acc = 0.0;
  for (int t = 0; t < T; ++t) {
    double s = 0.0;
    for (int f = 0; f < F; ++f) {
      const double d = k * (pred_logpow.at2(t, f) - clean_logpow.at2(t, f));
      s += d * d;
    }
    acc += std::sqrt(s / F);
  }
  return acc / T;
}

double metric_segsnr(const AudioSignal& signal, const AudioSignal& reference) {
  const std::size_t n = std::min(signal.samples.size(), reference.samples.size());
  const std::size_t seg = kNFft;
  if (n < seg) throw std::invalid_argument("metric_segsnr: fewer samples than one segment");
  double acc = 0.0;
  int count = 0;
  for (std::size_t off = 0; off + seg <= n; off += seg) {
    double pr = 0.0, pe = 0.0;
    for (std::size_t i = off; i < off + seg; ++i) {
      const double r = reference.samples[i];
      const double e = static_cast<double>(signal.samples[i]) - r;
      pr += r * r;
      pe += e * e;
    }
    if (pr < 1e-8) continue;  // silent reference segment
    const double snr = pe > 0.0 ? 10.0 * std::log10(pr / pe) : 35.0;
    acc += std::clamp(snr, -10.0, 35.0);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("metric_segsnr: reference is silent");
  return acc / count;
}

EvalResult evaluate(Checkpoint& ckpt, const std::string& manifest_path) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  std::vector<const ManifestRecord*> test;
  for (const auto& r : manifest.records)
    if (r.split == "test") test.push_back(&r);
  if (test.empty())
    throw std::invalid_argument("evaluate: manifest " + manifest_path + " has no test records");

  const bool bimodal = ckpt.model.cfg.kind == ModelKind::bimodal_bilstm;
  EvalResult res;
  struct Agg {
    int n = 0;
    double mse = 0, lsd = 0, in = 0, out = 0;
  };
  std::map<std::pair<std::string, double>, Agg> by_cell;
  std::map<std::string, Agg> by_noise;

  for (const ManifestRecord* rec : test) {
    const Utterance u = load_utterance(manifest, *rec);
    const EnhanceResult enh = enhance(ckpt, u.corrupted, bimodal ? &u.lips : nullptr);
    const Tensor clean_lp = stft(u.clean).log_power;

    EvalRow row;
    row.id = rec->id;
    row.noise_kind = rec->noise_kind;
    row.snr_db = rec->snr_db;
    row.mse_logspec = metric_mse(enh.pred_logpow, clean_lp, ckpt.target_std);
    row.lsd_db = metric_lsd(enh.pred_logpow, clean_lp);
    row.segsnr_in_db = metric_segsnr(u.corrupted, u.clean);
    row.segsnr_out_db = metric_segsnr(enh.audio, u.clean);
    res.rows.push_back(row);

    for (Agg* a : {&by_cell[{row.noise_kind, row.snr_db}], &by_noise[row.noise_kind]}) {
      ++a->n;
      a->mse += row.mse_logspec;
      a->lsd += row.lsd_db;
      a->in += row.segsnr_in_db;
      a->out += row.segsnr_out_db;
    }
  }

  auto emit = [&res](const std::string& noise, const std::string& snr, const Agg& a) {
    EvalCell c;
    c.noise_kind = noise;
    c.snr_label = snr;
    c.count = a.n;
    c.mse_logspec = a.mse / a.n;
    c.lsd_db = a.lsd / a.n;
    c.segsnr_in_db = a.in / a.n;
    c.segsnr_out_db = a.out / a.n;
    res.cells.push_back(c);
  };
  for (const auto& [key, a] : by_cell) emit(key.first, fmt_snr(key.second), a);
  for (const auto& [noise, a] : by_noise) emit(noise, "all", a);
  return res;
}

void write_eval_csv(const EvalResult& result, const std::string& rows_path,
                    const std::string& cells_path) {
  std::ofstream rf(rows_path);
  if (!rf) throw std::runtime_error("cannot write " + rows_path);
  rf << "id,noise_kind,snr_db,mse_logspec,lsd_db,segsnr_in_db,segsnr_out_db\n";
  for (const auto& r : result.rows) {
    char line[256];
    std::snprintf(line, sizeof line, "%s,%s,%g,%.6f,%.4f,%.4f,%.4f\n", r.id.c_str(),
                  r.noise_kind.c_str(), r.snr_db, r.mse_logspec, r.lsd_db, r.segsnr_in_db,
                  r.segsnr_out_db);
    rf << line;
  }

  std::ofstream cf(cells_path);
  if (!cf) throw std::runtime_error("cannot write " + cells_path);
  cf << "noise_kind,snr_db,count,mse_logspec,lsd_db,segsnr_in_db,segsnr_out_db\n";
  for (const auto& c : result.cells) {
    char line[256];
    std::snprintf(line, sizeof line, "%s,%s,%d,%.6f,%.4f,%.4f,%.4f\n", c.noise_kind.c_str(),
                  c.snr_label.c_str(), c.count, c.mse_logspec, c.lsd_db, c.segsnr_in_db,
                  c.segsnr_out_db);
    cf << line;
  }
}

void export_spectrogram(const Tensor& logspec, const std::string& path) {
  if (logspec.ndim() != 2 || logspec.dim(0) < 1)
    throw std::invalid_argument("export_spectrogram: expected a non-empty [T x bins] tensor");
  const int T = logspec.dim(0), F = logspec.dim(1);
  const double k = 10.0 / std::log(10.0);
  double max_db = -1e300;
  for (std::size_t i = 0; i < logspec.size(); ++i)
    max_db = std::max(max_db, k * static_cast<double>(logspec.data[i]));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "P5\n" << T << " " << F << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(T));
  for (int r = 0; r < F; ++r) {
    const int bin = F - 1 - r;  // low frequency at the bottom
    for (int t = 0; t < T; ++t) {
      const double db = k * logspec.at2(t, bin) - max_db;        // <= 0
      const double v = std::clamp((db + 80.0) / 80.0, 0.0, 1.0);  // [-80,0] -> [0,1]
      row[static_cast<std::size_t>(t)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    f.write(reinterpret_cast<const char*>(row.data()), T);
  }
  if (!f) throw std::runtime_error("error writing " + path);
}

}  // namespace avse
