#include "dap/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace dap {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV codec assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::uint8_t* p)
{
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ostream& os, T v)
{
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

} // namespace

Waveform read_wav(const std::filesystem::path& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) throw WavError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw WavError("malformed header: missing RIFF/WAVE signature" + where);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const auto size = read_le<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > available) throw WavError("malformed header: bad fmt chunk" + where);
      format = read_le<std::uint16_t>(chunk + 8);
      channels = read_le<std::uint16_t>(chunk + 10);
      rate = read_le<std::uint32_t>(chunk + 12);
      bits = read_le<std::uint16_t>(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40) throw WavError("malformed header: short extensible fmt chunk" + where);
        format = read_le<std::uint16_t>(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      // Tolerate writers that leave a placeholder size on the final chunk.
      data_size = std::min<std::size_t>(size, available);
      data = chunk + 8;
      have_data = true;
      break;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw WavError("malformed header: no fmt chunk" + where);
  if (!have_data) throw WavError("malformed header: no data chunk" + where);
  if (channels == 0 || rate == 0) throw WavError("malformed header: zero channels or sample rate" + where);
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32)
    throw WavError("unsupported codec (format " + std::to_string(format) + ", " + std::to_string(bits) +
                   " bits)" + where);

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_size / frame_bytes;
  if (frames == 0) throw WavError("zero-length data chunk" + where);

  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(static_cast<Eigen::Index>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + f * frame_bytes + c * (bits / 8);
      acc += pcm16 ? read_le<std::int16_t>(p) / 32768.0 : static_cast<double>(read_le<float>(p));
    }
    w.samples[static_cast<Eigen::Index>(f)] = channels == 1 ? acc : acc / channels;
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w, WavEncoding encoding)
{
  if (!(w.sample_rate > 0.0)) throw WavError("write_wav: sample rate must be positive");
  if (!w.samples.allFinite()) throw WavError("write_wav: non-finite samples");
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::Pcm16 ? kFormatPcm : kFormatFloat;
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * (bits / 8));

  std::ofstream os(path, std::ios::binary);
  if (!os) throw WavError("cannot open " + path.string() + " for writing");
  os.write("RIFF", 4);
  write_le<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_le<std::uint32_t>(os, 16);
  write_le<std::uint16_t>(os, format);
  write_le<std::uint16_t>(os, 1);
  write_le<std::uint32_t>(os, rate);
  write_le<std::uint32_t>(os, rate * (bits / 8));
  write_le<std::uint16_t>(os, bits / 8);
  write_le<std::uint16_t>(os, bits);
  os.write("data", 4);
  write_le<std::uint32_t>(os, data_bytes);
  for (Eigen::Index i = 0; i < w.samples.size(); ++i) {
    if (encoding == WavEncoding::Pcm16) {
      const double scaled = std::round(w.samples[i] * 32768.0);
      write_le<std::int16_t>(os, static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0)));
    } else {
      write_le<float>(os, static_cast<float>(w.samples[i]));
    }
  }
  if (!os) throw WavError("write failed: " + path.string());
}

} // namespace dap
