#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "avse/dsp.hpp"

namespace avse {

namespace {

uint32_t rd_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t rd_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
void wr_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioSignal read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_wav: cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: " + path + " is not a RIFF/WAVE file");
  // walk chunks
  std::size_t pos = 12;
  bool have_fmt = false;
  uint16_t channels = 0, bits = 0, format = 0;
  uint32_t rate = 0;
  const unsigned char* data = nullptr;
  uint32_t data_len = 0;
  while (pos + 8 <= buf.size()) {
    const uint32_t len = rd_u32(buf.data() + pos + 4);
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0 && pos + 8 + 16 <= buf.size()) {
      const unsigned char* f = buf.data() + pos + 8;
      format = rd_u16(f);
      channels = rd_u16(f + 2);
      rate = rd_u32(f + 4);
      bits = rd_u16(f + 14);
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data = buf.data() + pos + 8;
      data_len = std::min<uint32_t>(len, static_cast<uint32_t>(buf.size() - pos - 8));
    }
    pos += 8 + len + (len & 1);
  }
  if (!have_fmt || data == nullptr)
    throw std::runtime_error("read_wav: " + path + " is missing fmt/data chunks");
  if (format != 1 || channels != 1 || bits != 16 || rate != kSampleRate)
    throw std::runtime_error("read_wav: " + path + " must be 16-bit PCM mono " +
                             std::to_string(kSampleRate) + " Hz (got format=" +
                             std::to_string(format) + " channels=" + std::to_string(channels) +
                             " rate=" + std::to_string(rate) + " bits=" + std::to_string(bits) +
                             ")");
  AudioSignal out;
  out.samples.resize(data_len / 2);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const int16_t v = static_cast<int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
    out.samples[i] = static_cast<float>(v) / 32768.0f;
  }
  return out;
}

void write_wav(const std::string& path, const AudioSignal& signal) {
  if (signal.sample_rate != kSampleRate)
    throw std::invalid_argument("write_wav: only " + std::to_string(kSampleRate) +
                                " Hz supported");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_wav: cannot open " + path);
  const uint32_t n = static_cast<uint32_t>(signal.samples.size());
  os.write("RIFF", 4);
  wr_u32(os, 36 + 2 * n);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wr_u32(os, 16);
  wr_u16(os, 1);  // PCM
  wr_u16(os, 1);  // mono
  wr_u32(os, kSampleRate);
  wr_u32(os, kSampleRate * 2);
  wr_u16(os, 2);
  wr_u16(os, 16);
  os.write("data", 4);
  wr_u32(os, 2 * n);
  for (float v : signal.samples) {
    const float c = std::clamp(v, -1.0f, 1.0f);
    const int16_t q = static_cast<int16_t>(std::lrint(c * 32767.0));
    wr_u16(os, static_cast<uint16_t>(q));
  }
  if (!os) throw std::runtime_error("write_wav: write failed for " + path);
}

}  // namespace avse
