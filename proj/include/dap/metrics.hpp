#pragma once

#include "dap/dsp.hpp"

#include <array>

namespace dap {

/// Scores are clamped to [-kMetricCapDb, kMetricCapDb].
inline constexpr double kMetricCapDb = 100.0;

/// 10 log10(peak^2 / MSE) with peak = max|ref|.
double psnr(const Waveform& ref, const Waveform& est);

/// 10 log10(sum |S_ref|^2 / sum (|S_ref| - |S_est|)^2) over magnitude spectrograms.
double spectral_snr(const Waveform& ref, const Waveform& est, StftParams params = {});
/// Spectral SNR restricted to the time-frequency cells where `region` is nonzero.
double spectral_snr(const Waveform& ref, const Waveform& est, StftParams params, const Eigen::ArrayXXd& region);

struct EnvelopeParams
{
  int frame = 1024;
  int hop = 512;
};

/// Frame-wise RMS envelope, zero-padding the tail frame.
Eigen::ArrayXd rms_envelope(const Eigen::ArrayXd& x, EnvelopeParams params = {});

/// RMS of the difference between the two RMS envelopes.
double envelope_distance(const Waveform& ref, const Waveform& est, EnvelopeParams params = {});

/// BSS-Eval style scores for two sources with gain-only projections.
struct BssScores
{
  /// Indexed by reference.
  std::array<double, 2> sdr{};
  std::array<double, 2> sir{};
  /// permutation[j] = index of the estimate assigned to reference j.
  std::array<int, 2> permutation{0, 1};
};

/// SDR and SIR of one estimate against reference `target` of `refs`.
std::array<double, 2> bss_source_scores(const std::array<Waveform, 2>& refs, const Waveform& est, int target);

/// Best assignment (maximum mean SDR) of estimates to references.
BssScores bss_eval(const std::array<Waveform, 2>& refs, const std::array<Waveform, 2>& ests);

/// 10 log10(num / den) clamped to the metric cap; den == 0 gives the cap.
double capped_db(double num, double den);

} // namespace dap
