#include "dap/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dap {

double capped_db(double num, double den)
{
  if (den <= num * 1e-10) return kMetricCapDb;
  if (num <= 0.0) return -kMetricCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kMetricCapDb, kMetricCapDb);
}

namespace {

void require_equal_length(const Waveform& a, const Waveform& b, const char* metric)
{
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(metric) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  if (a.size() == 0) throw std::invalid_argument(std::string(metric) + ": empty signal");
}

} // namespace

double psnr(const Waveform& ref, const Waveform& est)
{
  require_equal_length(ref, est, "psnr");
  const double peak = ref.samples.abs().maxCoeff();
  if (peak == 0.0) throw std::invalid_argument("psnr: reference is all zero");
  const double mse = (ref.samples - est.samples).square().mean();
  if (mse < peak * peak * 1e-10) return kMetricCapDb;
  return std::clamp(10.0 * std::log10(peak * peak / mse), -kMetricCapDb, kMetricCapDb);
}

double spectral_snr(const Waveform& ref, const Waveform& est, StftParams params)
{
  require_equal_length(ref, est, "spectral_snr");
  const Eigen::ArrayXXd mr = stft(ref, params).magnitude();
  const Eigen::ArrayXXd me = stft(est, params).magnitude();
  const double num = mr.square().sum();
  if (num == 0.0) throw std::invalid_argument("spectral_snr: reference is silent");
  return capped_db(num, (mr - me).square().sum());
}

double spectral_snr(const Waveform& ref, const Waveform& est, StftParams params, const Eigen::ArrayXXd& region)
{
  require_equal_length(ref, est, "spectral_snr");
  const Eigen::ArrayXXd mr = stft(ref, params).magnitude();
  const Eigen::ArrayXXd me = stft(est, params).magnitude();
  if (region.rows() != mr.rows() || region.cols() != mr.cols())
    throw std::invalid_argument("spectral_snr: region shape does not match the spectrogram");
  const Eigen::ArrayXXd sel = (region != 0.0).cast<double>();
  const double num = (sel * mr.square()).sum();
  if (num == 0.0) throw std::invalid_argument("spectral_snr: reference is silent inside the region");
  return capped_db(num, (sel * (mr - me).square()).sum());
}

Eigen::ArrayXd rms_envelope(const Eigen::ArrayXd& x, EnvelopeParams params)
{
  if (params.frame < 1 || params.hop < 1) throw std::invalid_argument("rms_envelope: frame and hop must be positive");
  const Eigen::Index len = x.size();
  const Eigen::Index frames = len <= params.frame ? 1 : 1 + (len - params.frame + params.hop - 1) / params.hop;
  Eigen::ArrayXd env(frames);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Eigen::Index start = f * params.hop;
    const Eigen::Index n = std::max<Eigen::Index>(0, std::min<Eigen::Index>(params.frame, len - start));
    const double energy = n > 0 ? x.segment(start, n).square().sum() : 0.0;
    env[f] = std::sqrt(energy / params.frame);
  }
  return env;
}

double envelope_distance(const Waveform& ref, const Waveform& est, EnvelopeParams params)
{
  require_equal_length(ref, est, "envelope_distance");
  const Eigen::ArrayXd diff = rms_envelope(ref.samples, params) - rms_envelope(est.samples, params);
  return std::sqrt(diff.square().mean());
}

std::array<double, 2> bss_source_scores(const std::array<Waveform, 2>& refs, const Waveform& est, int target)
{
  require_equal_length(refs[0], refs[1], "bss_eval");
  require_equal_length(refs[0], est, "bss_eval");
  if (target < 0 || target > 1) throw std::invalid_argument("bss_eval: target index out of range");

  const Eigen::Index n = est.size();
  Eigen::MatrixXd basis(n, 2);
  basis.col(0) = refs[0].samples.matrix();
  basis.col(1) = refs[1].samples.matrix();
  const Eigen::Matrix2d gram = basis.transpose() * basis;
  const double conditioning = gram.determinant() / (gram(0, 0) * gram(1, 1));
  if (!(gram(0, 0) > 0.0) || !(gram(1, 1) > 0.0) || !(conditioning > 1e-12))
    throw std::invalid_argument("bss_eval: references are collinear");

  const Eigen::VectorXd e = est.samples.matrix();
  const Eigen::VectorXd s = basis.col(target);
  const Eigen::VectorXd s_target = (e.dot(s) / s.squaredNorm()) * s;
  const Eigen::Vector2d coeffs = gram.ldlt().solve(basis.transpose() * e);
  const Eigen::VectorXd projection = basis * coeffs;
  const Eigen::VectorXd e_interf = projection - s_target;
  const Eigen::VectorXd e_total = e - s_target;

  const double target_energy = s_target.squaredNorm();
  return {capped_db(target_energy, e_total.squaredNorm()), capped_db(target_energy, e_interf.squaredNorm())};
}

BssScores bss_eval(const std::array<Waveform, 2>& refs, const std::array<Waveform, 2>& ests)
{
  BssScores best;
  double best_mean = -std::numeric_limits<double>::infinity();
  for (const std::array<int, 2> perm : {std::array<int, 2>{0, 1}, std::array<int, 2>{1, 0}}) {
    BssScores cand;
    cand.permutation = perm;
    for (int j = 0; j < 2; ++j) {
      const auto scores = bss_source_scores(refs, ests[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])], j);
      cand.sdr[static_cast<std::size_t>(j)] = scores[0];
      cand.sir[static_cast<std::size_t>(j)] = scores[1];
    }
    const double mean = 0.5 * (cand.sdr[0] + cand.sdr[1]);
    if (mean > best_mean) {
      best_mean = mean;
      best = cand;
    }
  }
  return best;
}

} // namespace dap
