#include "avse/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace avse {

namespace {

constexpr char kMagic[4] = {'B', 'M', 'B', 'L'};
constexpr uint32_t kVersion = 1;

struct Writer {
  std::ofstream os;
  explicit Writer(const std::string& path) : os(path, std::ios::binary) {
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  }
  void bytes(const void* p, std::size_t n) { os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void i32(int32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
};

struct Reader {
  std::ifstream is;
  std::string path;
  explicit Reader(const std::string& p) : is(p, std::ios::binary), path(p) {
    if (!is) throw std::runtime_error("checkpoint: cannot open " + p);
  }
  void bytes(void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (is.gcount() != static_cast<std::streamsize>(n))
      throw std::runtime_error("checkpoint: truncated file " + path);
  }
  uint32_t u32() { uint32_t v; bytes(&v, 4); return v; }
  int32_t i32() { int32_t v; bytes(&v, 4); return v; }
  float f32() { float v; bytes(&v, 4); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
};

void write_config(Writer& w, const ModelConfig& c) {
  w.u32(static_cast<uint32_t>(c.kind));
  for (int v : {c.pca_dim, c.frames_per_window, c.dnn_h1, c.dnn_h2, c.audio_out, c.image_out,
                c.lstm_hidden, c.dnn_extra1, c.dnn_extra2, c.output_dim, c.image_size,
                c.cnn_fc1, c.cnn_fc2})
    w.i32(v);
  w.u32(static_cast<uint32_t>(c.cnn.size()));
  for (const auto& s : c.cnn)
    for (int v : {s.out_channels, s.k, s.stride, s.pool_k, s.pool_stride}) w.i32(v);
}

ModelConfig read_config(Reader& r) {
  ModelConfig c;
  const uint32_t kind = r.u32();
  if (kind > 2) throw std::runtime_error("checkpoint: invalid model kind in " + r.path);
  c.kind = static_cast<ModelKind>(kind);
  c.pca_dim = r.i32();
  c.frames_per_window = r.i32();
  c.dnn_h1 = r.i32();
  c.dnn_h2 = r.i32();
  c.audio_out = r.i32();
  c.image_out = r.i32();
  c.lstm_hidden = r.i32();
  c.dnn_extra1 = r.i32();
  c.dnn_extra2 = r.i32();
  c.output_dim = r.i32();
  c.image_size = r.i32();
  c.cnn_fc1 = r.i32();
  c.cnn_fc2 = r.i32();
  const uint32_t n = r.u32();
  if (n > 16) throw std::runtime_error("checkpoint: implausible CNN stage count in " + r.path);
  c.cnn.resize(n);
  for (auto& s : c.cnn) {
    s.out_channels = r.i32();
    s.k = r.i32();
    s.stride = r.i32();
    s.pool_k = r.i32();
    s.pool_stride = r.i32();
  }
  return c;
}

void write_std(Writer& w, const Standardizer& s) {
  w.u32(static_cast<uint32_t>(s.mean.size()));
  for (double v : s.mean) w.f64(v);
  for (double v : s.std) w.f64(v);
}

Standardizer read_std(Reader& r) {
  Standardizer s;
  const uint32_t d = r.u32();
  s.mean.resize(d);
  s.std.resize(d);
  for (auto& v : s.mean) v = r.f64();
  for (auto& v : s.std) v = r.f64();
  return s;
}

}  // namespace

void save_checkpoint(Checkpoint& ckpt, const std::string& path) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  write_config(w, ckpt.model.cfg);
  auto params = ckpt.model.params();
  w.u32(static_cast<uint32_t>(params.size()));
  for (auto* p : params) {
    w.u32(static_cast<uint32_t>(p->value.ndim()));
    for (int d : p->value.shape) w.i32(d);
    w.bytes(p->value.ptr(), p->value.size() * sizeof(float));
  }
  auto bns = ckpt.model.batchnorms();
  w.u32(static_cast<uint32_t>(bns.size()));
  for (auto* bn : bns) {
    w.u32(static_cast<uint32_t>(bn->dim()));
    w.bytes(bn->running_mean.ptr(), bn->running_mean.size() * sizeof(float));
    w.bytes(bn->running_var.ptr(), bn->running_var.size() * sizeof(float));
    w.f32(bn->momentum);
    w.f32(bn->epsilon);
  }
  w.u32(static_cast<uint32_t>(ckpt.pca.in_dim()));
  w.u32(static_cast<uint32_t>(ckpt.pca.out_dim()));
  for (double v : ckpt.pca.mean) w.f64(v);
  for (const auto& comp : ckpt.pca.components)
    for (double v : comp) w.f64(v);
  for (double v : ckpt.pca.explained_variance) w.f64(v);
  write_std(w, ckpt.input_std);
  write_std(w, ckpt.target_std);
  if (!w.os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path + " (not a BMBL checkpoint)");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) +
                             " in " + path);
  Checkpoint ckpt(read_config(r));
  auto params = ckpt.model.params();
  const uint32_t np = r.u32();
  if (np != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch in " + path);
  for (auto* p : params) {
    const uint32_t nd = r.u32();
    if (nd != static_cast<uint32_t>(p->value.ndim()))
      throw std::runtime_error("checkpoint: shape mismatch for " + p->name + " in " + path);
    for (int i = 0; i < p->value.ndim(); ++i)
      if (r.i32() != p->value.dim(i))
        throw std::runtime_error("checkpoint: shape mismatch for " + p->name + " in " + path);
    r.bytes(p->value.ptr(), p->value.size() * sizeof(float));
  }
  auto bns = ckpt.model.batchnorms();
  const uint32_t nb = r.u32();
  if (nb != bns.size())
    throw std::runtime_error("checkpoint: batchnorm count mismatch in " + path);
  for (auto* bn : bns) {
    const uint32_t d = r.u32();
    if (d != static_cast<uint32_t>(bn->dim()))
      throw std::runtime_error("checkpoint: batchnorm dim mismatch in " + path);
    r.bytes(bn->running_mean.ptr(), bn->running_mean.size() * sizeof(float));
    r.bytes(bn->running_var.ptr(), bn->running_var.size() * sizeof(float));
    bn->momentum = r.f32();
    bn->epsilon = r.f32();
  }
  const uint32_t pd = r.u32(), pk = r.u32();
  ckpt.pca.mean.resize(pd);
  for (auto& v : ckpt.pca.mean) v = r.f64();
  ckpt.pca.components.assign(pk, std::vector<double>(pd));
  for (auto& comp : ckpt.pca.components)
    for (auto& v : comp) v = r.f64();
  ckpt.pca.explained_variance.resize(pk);
  for (auto& v : ckpt.pca.explained_variance) v = r.f64();
  ckpt.input_std = read_std(r);
  ckpt.target_std = read_std(r);
  return ckpt;
}

}  // namespace avse
