#pragma once

#include <Eigen/Core>

#include <complex>
#include <filesystem>
#include <span>
#include <vector>

namespace dap {

using Complex = std::complex<double>;

/// Mono signal with its sample rate.
struct Waveform
{
  Eigen::ArrayXd samples;
  double sample_rate = 16000.0;

  Eigen::Index size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct StftParams
{
  int n_fft = 1022;
  int hop = 64;

  int bins() const { return n_fft / 2 + 1; }
  /// Number of frames produced for a signal of `length` samples.
  Eigen::Index frames(Eigen::Index length) const { return 1 + length / hop; }
};

/// Real/imaginary STFT planes, each bins x frames.
///
/// `length` is the original signal length so istft can trim the centre
/// padding exactly.
struct Spectrogram
{
  Eigen::ArrayXXd real;
  Eigen::ArrayXXd imag;
  StftParams params;
  Eigen::Index length = 0;

  Eigen::Index bins() const { return real.rows(); }
  Eigen::Index frames() const { return real.cols(); }
  Eigen::ArrayXXd magnitude() const { return (real.square() + imag.square()).sqrt(); }
};

/// Periodic Hann window: w[i] = 0.5 (1 - cos(2 pi i / n)).
Eigen::ArrayXd hann(int n);

/// Complex DFT of arbitrary length: radix-2 for powers of two, Bluestein
/// chirp-z otherwise. Plans are immutable after construction.
class Fft
{
public:
  explicit Fft(int n);

  int size() const { return n_; }
  /// X[k] = sum_j x[j] exp(-2 pi i j k / n)
  std::vector<Complex> forward(std::span<const Complex> x) const;
  /// x[j] = (1/n) sum_k X[k] exp(+2 pi i j k / n)
  std::vector<Complex> inverse(std::span<const Complex> x) const;

private:
  std::vector<Complex> transform(std::span<const Complex> x, bool inverse) const;

  int n_;
  bool pow2_;
  int m_ = 0; // Bluestein convolution length
  std::vector<Complex> chirp_;       // exp(-i pi k^2 / n)
  std::vector<Complex> chirp_fft_;   // FFT of the conjugate chirp filter, length m
  std::vector<Complex> twiddles_;    // radix-2 twiddles for the working length
};

/// Convenience wrapper around Fft(n).forward.
std::vector<Complex> fft(std::span<const Complex> x);

/// Centre-padded (reflect) STFT with a periodic Hann window; frames =
/// 1 + len / hop, bins 0..n_fft/2.
Spectrogram stft(const Waveform& w, StftParams params = {});

/// Least-squares overlap-add inverse, trimmed to the original length.
Waveform istft(const Spectrogram& s, double sample_rate);

struct PadRecord
{
  Eigen::Index bins = 0;
  Eigen::Index frames = 0;
};

/// Zero-pads bins and frames up to the next multiple of `multiple`.
Spectrogram pad_spec(const Spectrogram& s, int multiple, PadRecord& record);
Spectrogram crop_spec(const Spectrogram& s, const PadRecord& record);

/// Linear interpolation onto the target grid; length round(len * target / source).
Waveform resample_linear(const Waveform& w, double target_rate);

/// Flat binary dump: "DAPSPEC1", u32 element bytes (4|8), u32 channels (2),
/// u32 bins, u32 frames, i32 n_fft, i32 hop, u64 length, then the real plane
/// and the imaginary plane, each bins-major (row = bin), little-endian.
void write_spectrogram_dump(const std::filesystem::path& path, const Spectrogram& s, int element_bytes = 8);
Spectrogram read_spectrogram_dump(const std::filesystem::path& path);

} // namespace dap
