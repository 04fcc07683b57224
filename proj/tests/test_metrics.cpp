#include "oracles.hpp"

#include "dap/metrics.hpp"
#include "dap/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace dap;

namespace {

Waveform wave(std::vector<double> v)
{
  Waveform w;
  w.sample_rate = 8000;
  w.samples = Eigen::Map<Eigen::ArrayXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  return w;
}

Waveform noise(Eigen::Index n, std::uint64_t seed, double amp = 1.0)
{
  Rng rng(seed);
  Waveform w;
  w.sample_rate = 8000;
  w.samples.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) w.samples[i] = amp * rng.normal();
  return w;
}

std::vector<double> vec(const Waveform& w)
{
  return {w.samples.data(), w.samples.data() + w.size()};
}

} // namespace

TEST_CASE("psnr closed forms")
{
  const Waveform ref = noise(1000, 1);
  CHECK(psnr(ref, ref) == 100.0);

  std::vector<double> sq(1000), est(1000);
  for (int i = 0; i < 1000; ++i) {
    sq[i] = i % 2 ? 1.0 : -1.0;
    est[i] = sq[i] + (i % 2 ? 0.1 : -0.1); // MSE 0.01, peak 1
  }
  CHECK(psnr(wave(sq), wave(est)) == doctest::Approx(20.0).epsilon(1e-12));
  Waveform neg = wave(sq);
  neg.samples = -neg.samples;
  CHECK(psnr(wave(sq), neg) == doctest::Approx(10.0 * std::log10(0.25)).epsilon(1e-12));

  CHECK_THROWS_AS(psnr(ref, noise(999, 2)), std::invalid_argument);
  CHECK_THROWS_AS(psnr(wave(std::vector<double>(10, 0.0)), noise(10, 2)), std::invalid_argument);
}

TEST_CASE("spectral snr closed forms")
{
  const Waveform ref = noise(1000, 3);
  const StftParams p{254, 64};
  CHECK(spectral_snr(ref, ref, p) == 100.0);
  Waveform zero = ref;
  zero.samples.setZero();
  CHECK(spectral_snr(ref, zero, p) == doctest::Approx(0.0).epsilon(1e-12));
  Waveform up = ref, down = ref;
  up.samples *= 1.1;
  down.samples *= 0.9;
  CHECK(spectral_snr(ref, up, p) < 100.0);
  CHECK(spectral_snr(ref, down, p) < 100.0);
  // restricted to all cells it is the plain score
  const auto mag = stft(ref, p).magnitude();
  CHECK(spectral_snr(ref, up, p, Eigen::ArrayXXd::Ones(mag.rows(), mag.cols())) ==
        doctest::Approx(spectral_snr(ref, up, p)).epsilon(1e-12));
}

TEST_CASE("envelope distance")
{
  const Waveform ref = noise(8000, 4);
  CHECK(envelope_distance(ref, ref) == 0.0);
  Waveform zero = ref;
  zero.samples.setZero();
  const auto env = rms_envelope(ref.samples);
  CHECK(envelope_distance(ref, zero) == doctest::Approx(std::sqrt(env.square().mean())).epsilon(1e-12));
  Waveform half = ref;
  half.samples *= 0.5;
  CHECK(envelope_distance(ref, half) == doctest::Approx(0.5 * std::sqrt(env.square().mean())).epsilon(0.1));
  CHECK(rms_envelope(Eigen::ArrayXd::Ones(2000)).size() == 3);
}

TEST_CASE("bss_eval worked examples")
{
  // orthonormal pair plus an orthogonal unit direction
  std::vector<double> s1(1000, 0.0), s2(1000, 0.0), w(1000, 0.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = std::sin(2 * std::numbers::pi * 3 * i / 1000.0);
    const double b = std::cos(2 * std::numbers::pi * 7 * i / 1000.0);
    const double c = std::sin(2 * std::numbers::pi * 11 * i / 1000.0);
    s1[i] = a;
    s2[i] = b;
    w[i] = c;
  }
  const auto norm = [](std::vector<double>& v) {
    const double n = std::sqrt(oracle::dot(v, v));
    for (auto& x : v) x /= n;
  };
  norm(s1);
  norm(s2);
  norm(w);
  const std::array<Waveform, 2> refs{wave(s1), wave(s2)};

  Waveform twice = refs[0];
  twice.samples *= 2.0;
  const auto e1 = bss_source_scores(refs, twice, 0);
  CHECK(e1[0] == 100.0);
  CHECK(e1[1] == 100.0);

  Waveform leak = refs[0];
  leak.samples += 0.1 * refs[1].samples;
  const auto e2 = bss_source_scores(refs, leak, 0);
  CHECK(e2[0] == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(e2[1] == doctest::Approx(20.0).epsilon(1e-9));

  Waveform artifact = refs[0];
  artifact.samples += 0.1 * wave(w).samples;
  const auto e3 = bss_source_scores(refs, artifact, 0);
  CHECK(e3[0] == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(e3[1] == 100.0);

  // swapped estimates are matched back
  const BssScores sc = bss_eval(refs, {refs[1], leak});
  CHECK(sc.permutation == std::array<int, 2>{1, 0});
  CHECK(sc.sdr[0] == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(sc.sdr[1] == 100.0);

  CHECK_THROWS_AS(bss_eval({refs[0], refs[0]}, {refs[0], refs[1]}), std::invalid_argument);
}

TEST_CASE("metrics agree with the naive formulas on random signals")
{
  for (std::uint64_t seed = 10; seed < 13; ++seed) {
    const Waveform a = noise(1000, seed), b = noise(1000, seed + 100);
    Waveform ea = a, eb = b;
    const Waveform n1 = noise(1000, seed + 200, 0.3), n2 = noise(1000, seed + 300, 0.3);
    ea.samples += 0.4 * b.samples + n1.samples;
    eb.samples += 0.2 * a.samples + n2.samples;

    CHECK(std::abs(psnr(a, ea) - oracle::psnr(vec(a), vec(ea))) < 1e-9);
    CHECK(std::abs(spectral_snr(a, ea, {254, 64}) - oracle::spectral_snr(vec(a), vec(ea), 254, 64)) < 1e-9);
    CHECK(std::abs(envelope_distance(a, ea) - oracle::envelope_distance(vec(a), vec(ea))) < 1e-9);

    const BssScores sc = bss_eval({a, b}, {eb, ea});
    CHECK(sc.permutation == std::array<int, 2>{1, 0});
    const std::array<Waveform, 2> est{eb, ea};
    for (int j = 0; j < 2; ++j) {
      const auto& e = est[static_cast<std::size_t>(sc.permutation[static_cast<std::size_t>(j)])];
      const auto ref = oracle::bss(vec(a), vec(b), vec(e), j);
      CHECK(std::abs(sc.sdr[static_cast<std::size_t>(j)] - ref[0]) < 1e-9);
      CHECK(std::abs(sc.sir[static_cast<std::size_t>(j)] - ref[1]) < 1e-9);
      CHECK(sc.sir[static_cast<std::size_t>(j)] >= sc.sdr[static_cast<std::size_t>(j)] - 1e-9);
    }
    // the reported permutation has the larger mean SDR
    double other = 0;
    for (int j = 0; j < 2; ++j) other += oracle::bss(vec(a), vec(b), vec(est[static_cast<std::size_t>(j)]), j)[0];
    CHECK(sc.sdr[0] + sc.sdr[1] >= other - 1e-9);
  }
}
