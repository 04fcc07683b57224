#include "oracles.hpp"

#include "dap/dsp.hpp"
#include "dap/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace dap;

namespace {

Waveform noise(Eigen::Index n, double rate, std::uint64_t seed)
{
  Rng rng(seed);
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) w.samples[i] = rng.uniform(-1.0, 1.0);
  return w;
}

double rel_rms(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b)
{
  return std::sqrt((a - b).square().sum() / b.square().sum());
}

double max_rel_error(const std::vector<Complex>& got, const std::vector<oracle::cd>& want)
{
  double num = 0, den = 0;
  for (std::size_t k = 0; k < want.size(); ++k) {
    num = std::max(num, std::abs(got[k] - want[k]));
    den = std::max(den, std::abs(want[k]));
  }
  return num / den;
}

} // namespace

TEST_CASE("periodic Hann window")
{
  const auto w = hann(16);
  CHECK(w[0] == 0.0);
  CHECK(w[8] == doctest::Approx(1.0).epsilon(1e-15));
  for (int i = 1; i < 16; ++i) CHECK(w[i] == doctest::Approx(w[16 - i]).epsilon(1e-14));
}

TEST_CASE("fft against the naive DFT")
{
  Rng rng(1);
  for (int n : {1, 2, 3, 5, 8, 12, 17, 64, 127, 254, 1022}) {
    CAPTURE(n);
    std::vector<Complex> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto got = fft(x);
    CHECK(max_rel_error(got, oracle::dft(x)) < 1e-9);
    const auto back = Fft(n).inverse(got);
    for (int i = 0; i < n; ++i) CHECK(std::abs(back[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)]) < 1e-12);
  }
}

TEST_CASE("fft of a delta and of a constant")
{
  std::vector<Complex> delta(1022, 0.0), ones(1022, 1.0);
  delta[0] = 1.0;
  for (const auto& v : fft(delta)) CHECK(std::abs(v - Complex(1.0)) < 1e-12);
  const auto c = fft(ones);
  CHECK(std::abs(c[0] - Complex(1022.0)) < 1e-9);
  for (std::size_t k = 1; k < c.size(); ++k) CHECK(std::abs(c[k]) < 1e-9);
}

TEST_CASE("stft geometry")
{
  const Spectrogram s = stft(noise(16000, 16000, 2), {1022, 64});
  CHECK(s.bins() == 512);
  CHECK(s.frames() == 251);
  CHECK(s.length == 16000);
  CHECK_THROWS_AS(stft(noise(100, 16000, 2), {64, 0}), std::invalid_argument);
  CHECK_THROWS_AS(stft(noise(100, 16000, 2), {32, 64}), std::invalid_argument);
}

TEST_CASE("stft magnitudes match the direct oracle")
{
  const Waveform x = noise(700, 8000, 3);
  const auto mag = stft(x, {254, 64}).magnitude();
  const auto ref = oracle::stft_magnitude({x.samples.data(), x.samples.data() + x.size()}, 254, 64);
  REQUIRE(static_cast<std::size_t>(mag.cols()) == ref.size());
  for (Eigen::Index t = 0; t < mag.cols(); ++t)
    for (Eigen::Index k = 0; k < mag.rows(); ++k)
      CHECK(mag(k, t) == doctest::Approx(ref[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]).epsilon(1e-9));
}

TEST_CASE("a bin-centred sine peaks in its bin")
{
  const int n_fft = 1022, k = 37;
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(16000);
  for (Eigen::Index i = 0; i < w.size(); ++i)
    w.samples[i] = std::sin(2.0 * std::numbers::pi * k * static_cast<double>(i) / n_fft);
  const auto mag = stft(w, {n_fft, 64}).magnitude();
  for (Eigen::Index t = 8; t < mag.cols() - 8; ++t) {
    Eigen::Index arg = 0;
    mag.col(t).maxCoeff(&arg);
    CHECK(arg == k);
  }
}

TEST_CASE("per-frame Parseval")
{
  const int n = 1022, hop = 64;
  const Waveform x = noise(16000, 16000, 4);
  const Spectrogram s = stft(x, {n, hop});
  const auto w = hann(n);
  for (Eigen::Index t : {10, 100, 200}) {
    double time_energy = 0;
    for (int j = 0; j < n; ++j) time_energy += std::pow(w[j] * x.samples[t * hop - n / 2 + j], 2);
    double spec_energy = 0;
    for (Eigen::Index k = 0; k <= n / 2; ++k) {
      const double e = s.real(k, t) * s.real(k, t) + s.imag(k, t) * s.imag(k, t);
      spec_energy += (k == 0 || k == n / 2) ? e : 2 * e;
    }
    CHECK(spec_energy / n == doctest::Approx(time_energy).epsilon(1e-9));
  }
}

TEST_CASE("istft inverts stft")
{
  for (Eigen::Index len : {16000, 32000}) {
    const Waveform x = noise(len, 16000, static_cast<std::uint64_t>(len));
    const Waveform y = istft(stft(x, {1022, 64}), 16000);
    REQUIRE(y.size() == x.size());
    CHECK(rel_rms(y.samples, x.samples) < 1e-6);
  }
  const Waveform odd = noise(4001, 8000, 5);
  CHECK(rel_rms(istft(stft(odd, {254, 64}), 8000).samples, odd.samples) < 1e-6);
}

TEST_CASE("istft is linear and maps zero to zero")
{
  const Spectrogram a = stft(noise(8000, 16000, 6), {1022, 64});
  const Spectrogram b = stft(noise(8000, 16000, 7), {1022, 64});
  Spectrogram c = a;
  c.real = 2.0 * a.real - 0.5 * b.real;
  c.imag = 2.0 * a.imag - 0.5 * b.imag;
  const auto lhs = istft(c, 16000).samples;
  const auto rhs = (2.0 * istft(a, 16000).samples - 0.5 * istft(b, 16000).samples).eval();
  CHECK((lhs - rhs).abs().maxCoeff() < 1e-9);

  Spectrogram z = a;
  z.real.setZero();
  z.imag.setZero();
  CHECK((istft(z, 16000).samples == 0.0).all());
  Waveform silent;
  silent.samples = Eigen::ArrayXd::Zero(3000);
  const Spectrogram zs = stft(silent, {254, 64});
  CHECK((zs.real == 0.0).all());
  CHECK((zs.imag == 0.0).all());
}

TEST_CASE("pad and crop")
{
  const Spectrogram s = stft(noise(16000, 16000, 8), {1022, 64});
  PadRecord rec;
  const Spectrogram p = pad_spec(s, 4, rec);
  CHECK(p.bins() == 512);
  CHECK(p.frames() == 252);
  CHECK((p.real.col(251) == 0.0).all());
  const Spectrogram back = crop_spec(p, rec);
  CHECK((back.real == s.real).all());
  CHECK((back.imag == s.imag).all());

  PadRecord rec2;
  const Spectrogram same = pad_spec(p, 4, rec2);
  CHECK(same.frames() == 252);
  CHECK((same.real == p.real).all());
}

TEST_CASE("linear resampling")
{
  const Waveform x = noise(1000, 16000, 9);
  const Waveform same = resample_linear(x, 16000);
  CHECK((same.samples == x.samples).all());

  Waveform c;
  c.sample_rate = 16000;
  c.samples = Eigen::ArrayXd::Constant(500, 0.3);
  const Waveform cr = resample_linear(c, 22050);
  CHECK(cr.size() == std::lround(500 * 22050.0 / 16000.0));
  CHECK((cr.samples - 0.3).abs().maxCoeff() < 1e-15);

  Waveform two;
  two.sample_rate = 1;
  two.samples = Eigen::ArrayXd::LinSpaced(2, 0.0, 1.0);
  const Waveform up = resample_linear(two, 2);
  CHECK(up.size() == 4);
  CHECK((up.samples - 0.5).abs().minCoeff() < 1e-15);

  CHECK_THROWS_AS(resample_linear(x, 0), std::invalid_argument);
}

TEST_CASE("16 kHz -> 8 kHz -> 16 kHz keeps a band-limited signal")
{
  Waveform x;
  x.sample_rate = 16000;
  x.samples.resize(16000);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i) / 16000.0;
    x.samples[i] = 0.5 * std::sin(2 * std::numbers::pi * 300 * t) + 0.3 * std::sin(2 * std::numbers::pi * 1100 * t) +
                   0.2 * std::sin(2 * std::numbers::pi * 1900 * t);
  }
  const Waveform y = resample_linear(resample_linear(x, 8000), 16000);
  REQUIRE(y.size() == x.size());
  CHECK(std::sqrt((y.samples - x.samples).square().mean()) < 5e-2);
}

TEST_CASE("spectrogram dump round trip")
{
  const Spectrogram s = stft(noise(2000, 8000, 10), {254, 64});
  const auto path = std::filesystem::temp_directory_path() / "dap_test_spec.bin";
  write_spectrogram_dump(path, s);
  const Spectrogram r = read_spectrogram_dump(path);
  CHECK(r.length == s.length);
  CHECK(r.params.n_fft == 254);
  CHECK((r.real == s.real).all());
  CHECK((r.imag == s.imag).all());
  std::filesystem::remove(path);
}
