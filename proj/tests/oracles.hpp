#pragma once

// Direct, unoptimized reference implementations used only as test oracles.
// None of these call into the library code they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

using cd = std::complex<double>;

// X[k] = sum_j x[j] exp(-2 pi i j k / n), accumulated in long double
inline std::vector<cd> dft(const std::vector<cd>& x)
{
  const std::size_t n = x.size();
  std::vector<cd> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    long double re = 0, im = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const long double a = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>((j * k) % n) /
                            static_cast<long double>(n);
      re += x[j].real() * std::cos(a) - x[j].imag() * std::sin(a);
      im += x[j].real() * std::sin(a) + x[j].imag() * std::cos(a);
    }
    out[k] = {static_cast<double>(re), static_cast<double>(im)};
  }
  return out;
}

// Plain loop convolution, batch 1, zero "same" padding. x: C*H*W, w: O*C*k*k.
inline std::vector<double> conv2d(const std::vector<double>& x, int C, int H, int W, const std::vector<double>& w,
                                  const std::vector<double>& b, int O, int k, int d)
{
  std::vector<double> y(static_cast<std::size_t>(O * H * W), 0.0);
  const int r = d * (k - 1) / 2;
  for (int o = 0; o < O; ++o)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double acc = b[static_cast<std::size_t>(o)];
        for (int c = 0; c < C; ++c)
          for (int u = 0; u < k; ++u)
            for (int v = 0; v < k; ++v) {
              const int ii = i + u * d - r, jj = j + v * d - r;
              if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
              acc += w[static_cast<std::size_t>(((o * C + c) * k + u) * k + v)] *
                     x[static_cast<std::size_t>((c * H + ii) * W + jj)];
            }
        y[static_cast<std::size_t>((o * H + i) * W + j)] = acc;
      }
  return y;
}

inline double db_capped(double num, double den)
{
  if (den <= num * 1e-10) return 100.0;
  if (num <= 0) return -100.0;
  return std::clamp(10.0 * std::log10(num / den), -100.0, 100.0);
}

inline double psnr(const std::vector<double>& ref, const std::vector<double>& est)
{
  double peak = 0, se = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    peak = std::max(peak, std::abs(ref[i]));
    se += (ref[i] - est[i]) * (ref[i] - est[i]);
  }
  const double mse = se / static_cast<double>(ref.size());
  if (mse < peak * peak * 1e-10) return 100.0;
  return std::clamp(10.0 * std::log10(peak * peak / mse), -100.0, 100.0);
}

// |STFT| with reflect centre padding and a periodic Hann window, by direct DFT sums.
inline std::vector<std::vector<double>> stft_magnitude(const std::vector<double>& x, int n_fft, int hop)
{
  const int len = static_cast<int>(x.size()), half = n_fft / 2;
  const auto at = [&](int i) {
    // reflect without repeating the edge sample
    while (i < 0 || i >= len) i = i < 0 ? -i : 2 * (len - 1) - i;
    return x[static_cast<std::size_t>(i)];
  };
  const int frames = 1 + len / hop;
  std::vector<std::vector<double>> mag(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    auto& col = mag[static_cast<std::size_t>(t)];
    col.resize(static_cast<std::size_t>(half + 1));
    for (int k = 0; k <= half; ++k) {
      double re = 0, im = 0;
      for (int j = 0; j < n_fft; ++j) {
        const double w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * j / n_fft));
        const double s = w * at(t * hop - half + j);
        const double a = -2.0 * std::numbers::pi * static_cast<double>((static_cast<long>(j) * k) % n_fft) / n_fft;
        re += s * std::cos(a);
        im += s * std::sin(a);
      }
      col[static_cast<std::size_t>(k)] = std::hypot(re, im);
    }
  }
  return mag;
}

inline double spectral_snr(const std::vector<double>& ref, const std::vector<double>& est, int n_fft, int hop)
{
  const auto a = stft_magnitude(ref, n_fft, hop), b = stft_magnitude(est, n_fft, hop);
  double num = 0, den = 0;
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t k = 0; k < a[t].size(); ++k) {
      num += a[t][k] * a[t][k];
      den += (a[t][k] - b[t][k]) * (a[t][k] - b[t][k]);
    }
  return db_capped(num, den);
}

inline std::vector<double> envelope(const std::vector<double>& x, int frame, int hop)
{
  std::vector<double> env;
  const int len = static_cast<int>(x.size());
  for (int start = 0;; start += hop) {
    double e = 0;
    for (int i = start; i < start + frame; ++i)
      if (i < len) e += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
    env.push_back(std::sqrt(e / frame));
    if (start + frame >= len) break;
  }
  return env;
}

inline double envelope_distance(const std::vector<double>& ref, const std::vector<double>& est)
{
  const auto a = envelope(ref, 1024, 512), b = envelope(est, 1024, 512);
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b)
{
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// {SDR, SIR} of `est` against reference `j`, gain-only projections, 2x2 system by Cramer's rule.
inline std::array<double, 2> bss(const std::vector<double>& s1, const std::vector<double>& s2,
                                 const std::vector<double>& est, int j)
{
  const double g11 = dot(s1, s1), g12 = dot(s1, s2), g22 = dot(s2, s2);
  const double r1 = dot(s1, est), r2 = dot(s2, est);
  const double det = g11 * g22 - g12 * g12;
  const double c1 = (r1 * g22 - r2 * g12) / det, c2 = (g11 * r2 - g12 * r1) / det;
  const auto& s = j == 0 ? s1 : s2;
  const double a = (j == 0 ? r1 : r2) / (j == 0 ? g11 : g22);
  double target = 0, interf = 0, total = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double st = a * s[i];
    const double proj = c1 * s1[i] + c2 * s2[i];
    target += st * st;
    interf += (proj - st) * (proj - st);
    total += (est[i] - st) * (est[i] - st);
  }
  return {db_capped(target, total), db_capped(target, interf)};
}

} // namespace oracle
