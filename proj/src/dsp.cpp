#include "dap/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace dap {

Eigen::ArrayXd hann(int n)
{
  if (n < 1) throw std::invalid_argument("hann: length must be >= 1");
  Eigen::ArrayXd w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / n));
  return w;
}

// ---------------------------------------------------------------------------
// FFT

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

std::vector<Complex> make_twiddles(int n)
{
  std::vector<Complex> tw(static_cast<std::size_t>(n / 2));
  for (int k = 0; k < n / 2; ++k) tw[static_cast<std::size_t>(k)] = std::polar(1.0, -2.0 * std::numbers::pi * k / n);
  return tw;
}

// In-place iterative radix-2; `twiddles` holds exp(-2 pi i k / n) for k < n/2.
void radix2(std::vector<Complex>& a, const std::vector<Complex>& twiddles, bool inverse)
{
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        Complex w = twiddles[k * stride];
        if (inverse) w = std::conj(w);
        const Complex u = a[i + k];
        const Complex v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

} // namespace

Fft::Fft(int n)
    : n_(n), pow2_(is_pow2(n))
{
  if (n < 1) throw std::invalid_argument("fft: length must be >= 1");
  if (pow2_) {
    twiddles_ = make_twiddles(n);
    return;
  }
  m_ = static_cast<int>(std::bit_ceil(static_cast<unsigned>(2 * n - 1)));
  twiddles_ = make_twiddles(m_);
  chirp_.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the phase argument small and exact.
    const auto k2 = static_cast<std::int64_t>(k) * k % (2LL * n);
    chirp_[static_cast<std::size_t>(k)] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / n);
  }
  chirp_fft_.assign(static_cast<std::size_t>(m_), Complex{});
  chirp_fft_[0] = std::conj(chirp_[0]);
  for (int k = 1; k < n; ++k) {
    chirp_fft_[static_cast<std::size_t>(k)] = std::conj(chirp_[static_cast<std::size_t>(k)]);
    chirp_fft_[static_cast<std::size_t>(m_ - k)] = std::conj(chirp_[static_cast<std::size_t>(k)]);
  }
  radix2(chirp_fft_, twiddles_, false);
}

std::vector<Complex> Fft::transform(std::span<const Complex> x, bool inverse) const
{
  if (static_cast<int>(x.size()) != n_)
    throw std::invalid_argument("fft: input length " + std::to_string(x.size()) + " != plan length " +
                                std::to_string(n_));
  // The unscaled inverse is conj(F(conj(x))).
  const auto load = [inverse](Complex v) { return inverse ? std::conj(v) : v; };
  std::vector<Complex> out(x.size());
  if (pow2_) {
    std::transform(x.begin(), x.end(), out.begin(), load);
    radix2(out, twiddles_, false);
  } else {
    // Bluestein: X[k] = c[k] * sum_j (x[j] c[j]) conj(c[k - j]), c[k] = exp(-i pi k^2 / n).
    std::vector<Complex> a(static_cast<std::size_t>(m_), Complex{});
    for (std::size_t j = 0; j < x.size(); ++j) a[j] = load(x[j]) * chirp_[j];
    radix2(a, twiddles_, false);
    for (std::size_t k = 0; k < a.size(); ++k) a[k] *= chirp_fft_[k];
    radix2(a, twiddles_, true);
    const double scale = 1.0 / static_cast<double>(m_);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] * scale * chirp_[k];
  }
  if (inverse)
    for (auto& v : out) v = std::conj(v);
  return out;
}

std::vector<Complex> Fft::forward(std::span<const Complex> x) const
{
  return transform(x, false);
}

std::vector<Complex> Fft::inverse(std::span<const Complex> x) const
{
  auto out = transform(x, true);
  const double scale = 1.0 / static_cast<double>(n_);
  for (auto& v : out) v *= scale;
  return out;
}

std::vector<Complex> fft(std::span<const Complex> x)
{
  return Fft(static_cast<int>(x.size())).forward(x);
}

// ---------------------------------------------------------------------------
// STFT

namespace {

void check_params(const StftParams& p)
{
  if (p.hop <= 0) throw std::invalid_argument("stft: hop must be positive");
  if (p.n_fft < p.hop) throw std::invalid_argument("stft: n_fft must be >= hop");
}

// Reflect index into [0, len) without repeating the edge sample.
Eigen::Index reflect(Eigen::Index i, Eigen::Index len)
{
  if (len == 1) return 0;
  const Eigen::Index period = 2 * (len - 1);
  i %= period;
  if (i < 0) i += period;
  return i < len ? i : period - i;
}

} // namespace

Spectrogram stft(const Waveform& w, StftParams params)
{
  check_params(params);
  const Eigen::Index len = w.samples.size();
  if (len < 1) throw std::invalid_argument("stft: empty signal");
  const int n = params.n_fft;
  const Eigen::Index pad = n / 2;
  const Eigen::Index frames = params.frames(len);
  const int bins = params.bins();
  const Eigen::ArrayXd window = hann(n);
  const Fft plan(n);

  Spectrogram s;
  s.params = params;
  s.length = len;
  s.real.resize(bins, frames);
  s.imag.resize(bins, frames);

  std::vector<Complex> buf(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index start = t * params.hop - pad;
    for (int j = 0; j < n; ++j) buf[static_cast<std::size_t>(j)] = window[j] * w.samples[reflect(start + j, len)];
    const auto spec = plan.forward(buf);
    for (int k = 0; k < bins; ++k) {
      s.real(k, t) = spec[static_cast<std::size_t>(k)].real();
      s.imag(k, t) = spec[static_cast<std::size_t>(k)].imag();
    }
  }
  return s;
}

Waveform istft(const Spectrogram& s, double sample_rate)
{
  const StftParams& p = s.params;
  check_params(p);
  const int n = p.n_fft;
  const int bins = p.bins();
  if (s.bins() != bins || s.imag.rows() != s.real.rows() || s.imag.cols() != s.real.cols())
    throw std::invalid_argument("istft: spectrogram planes do not match n_fft");
  const Eigen::Index frames = s.frames();
  const Eigen::Index pad = n / 2;
  const Eigen::Index total = (frames - 1) * p.hop + n;
  const Eigen::ArrayXd window = hann(n);
  const Fft plan(n);

  Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(total);
  Eigen::ArrayXd norm = Eigen::ArrayXd::Zero(total);
  std::vector<Complex> full(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int k = 0; k < bins; ++k) full[static_cast<std::size_t>(k)] = Complex(s.real(k, t), s.imag(k, t));
    for (int k = bins; k < n; ++k) full[static_cast<std::size_t>(k)] = std::conj(full[static_cast<std::size_t>(n - k)]);
    const auto frame = plan.inverse(full);
    const Eigen::Index start = t * p.hop;
    for (int j = 0; j < n; ++j) {
      acc[start + j] += window[j] * frame[static_cast<std::size_t>(j)].real();
      norm[start + j] += window[j] * window[j];
    }
  }

  const Eigen::Index len = s.length > 0 ? s.length : total - 2 * pad;
  if (pad + len > total) throw std::invalid_argument("istft: recorded length exceeds frame coverage");
  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.resize(len);
  for (Eigen::Index i = 0; i < len; ++i) {
    const double wsum = norm[pad + i];
    if (wsum < 1e-8) throw std::runtime_error("istft: degenerate window sum at sample " + std::to_string(i));
    out.samples[i] = acc[pad + i] / wsum;
  }
  return out;
}

// ---------------------------------------------------------------------------

Spectrogram pad_spec(const Spectrogram& s, int multiple, PadRecord& record)
{
  if (multiple < 1) throw std::invalid_argument("pad_spec: multiple must be >= 1");
  record.bins = s.bins();
  record.frames = s.frames();
  const auto round_up = [multiple](Eigen::Index v) { return (v + multiple - 1) / multiple * multiple; };
  Spectrogram out;
  out.params = s.params;
  out.length = s.length;
  out.real = Eigen::ArrayXXd::Zero(round_up(s.bins()), round_up(s.frames()));
  out.imag = Eigen::ArrayXXd::Zero(out.real.rows(), out.real.cols());
  out.real.topLeftCorner(s.bins(), s.frames()) = s.real;
  out.imag.topLeftCorner(s.bins(), s.frames()) = s.imag;
  return out;
}

Spectrogram crop_spec(const Spectrogram& s, const PadRecord& record)
{
  if (record.bins > s.bins() || record.frames > s.frames())
    throw std::invalid_argument("crop_spec: record larger than spectrogram");
  Spectrogram out;
  out.params = s.params;
  out.length = s.length;
  out.real = s.real.topLeftCorner(record.bins, record.frames);
  out.imag = s.imag.topLeftCorner(record.bins, record.frames);
  return out;
}

Waveform resample_linear(const Waveform& w, double target_rate)
{
  if (!(target_rate > 0.0)) throw std::invalid_argument("resample_linear: target rate must be positive");
  if (!(w.sample_rate > 0.0)) throw std::invalid_argument("resample_linear: source rate must be positive");
  if (target_rate == w.sample_rate) return w;
  const Eigen::Index len = w.samples.size();
  const auto out_len = static_cast<Eigen::Index>(std::llround(static_cast<double>(len) * target_rate / w.sample_rate));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  const double step = w.sample_rate / target_rate;
  for (Eigen::Index i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto lo = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(pos)), len - 1);
    const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, len - 1);
    const double frac = std::min(1.0, pos - static_cast<double>(lo));
    out.samples[i] = (1.0 - frac) * w.samples[lo] + frac * w.samples[hi];
  }
  return out;
}

// ---------------------------------------------------------------------------
// spectrogram dump

namespace {

constexpr char kSpecMagic[8] = {'D', 'A', 'P', 'S', 'P', 'E', 'C', '1'};

template <typename T>
void put(std::ostream& os, T v)
{
  static_assert(std::endian::native == std::endian::little, "dump format assumes a little-endian host");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is)
{
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("spectrogram dump: truncated file");
  return v;
}

} // namespace

void write_spectrogram_dump(const std::filesystem::path& path, const Spectrogram& s, int element_bytes)
{
  if (element_bytes != 4 && element_bytes != 8) throw std::invalid_argument("spectrogram dump: precision must be 4 or 8");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kSpecMagic, sizeof(kSpecMagic));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(element_bytes));
  put<std::uint32_t>(os, 2);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.bins()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.frames()));
  put<std::int32_t>(os, s.params.n_fft);
  put<std::int32_t>(os, s.params.hop);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(s.length));
  for (const Eigen::ArrayXXd* plane : {&s.real, &s.imag})
    for (Eigen::Index k = 0; k < plane->rows(); ++k)
      for (Eigen::Index t = 0; t < plane->cols(); ++t) {
        if (element_bytes == 4)
          put<float>(os, static_cast<float>((*plane)(k, t)));
        else
          put<double>(os, (*plane)(k, t));
      }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Spectrogram read_spectrogram_dump(const std::filesystem::path& path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kSpecMagic, sizeof(magic)) != 0)
    throw std::runtime_error("spectrogram dump: bad magic in " + path.string());
  const auto bytes = get<std::uint32_t>(is);
  const auto channels = get<std::uint32_t>(is);
  if ((bytes != 4 && bytes != 8) || channels != 2) throw std::runtime_error("spectrogram dump: unsupported header");
  Spectrogram s;
  const auto bins = static_cast<Eigen::Index>(get<std::uint32_t>(is));
  const auto frames = static_cast<Eigen::Index>(get<std::uint32_t>(is));
  s.params.n_fft = get<std::int32_t>(is);
  s.params.hop = get<std::int32_t>(is);
  s.length = static_cast<Eigen::Index>(get<std::uint64_t>(is));
  s.real.resize(bins, frames);
  s.imag.resize(bins, frames);
  for (Eigen::ArrayXXd* plane : {&s.real, &s.imag})
    for (Eigen::Index k = 0; k < bins; ++k)
      for (Eigen::Index t = 0; t < frames; ++t)
        (*plane)(k, t) = bytes == 4 ? static_cast<double>(get<float>(is)) : get<double>(is);
  return s;
}

} // namespace dap
