#pragma once

#include "dap/dsp.hpp"
#include "dap/nn.hpp"
#include "dap/rng.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dap {

enum class Precision
{
  Float32,
  Float64,
};

std::string precision_name(Precision p);
Precision parse_precision(const std::string& name);

struct RunConfig
{
  ArchVariant arch = ArchVariant::dilated_exp_dense();
  double width_scale = 1.0;
  int latent_channels = 32;
  int iterations = 2000;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  Precision precision = Precision::Float32;
  /// Weight of the magnitude-exclusion term (separation only).
  double exclusion_weight = 0.01;
  StftParams stft;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

/// Half-open time interval in seconds.
struct TimeInterval
{
  double start = 0.0;
  double end = 0.0;
};

/// Binary (2, F, T) mask aligned with an unpadded spectrogram, stored as one
/// bins x frames plane shared by both channels. 1 = observed.
struct MaskSpec
{
  Eigen::ArrayXXd observed;
};

struct RunResult
{
  /// One waveform for denoise/inpaint; two for separation.
  std::vector<Waveform> restored;
  /// Loss at each iteration, evaluated before that iteration's update.
  std::vector<double> loss_curve;
  std::map<std::string, double> metrics;
  double wall_seconds = 0.0;
  RunConfig config;
  std::uint64_t seed = 0;
  /// Separation only: sigmoid mask over (bins, frames), cropped.
  Eigen::ArrayXXd mask;
};

/// Called after every iteration with (iteration, loss).
using ProgressFn = std::function<void(int, double)>;

// --- corruption -------------------------------------------------------------

/// x + n, n ~ N(0, sigma^2) i.i.d.
Waveform add_gaussian(const Waveform& w, double sigma, Rng& rng);

/// x + g n with g chosen so that 10 log10(P_x / P_gn) == snr_db. The noise is
/// looped or truncated to the clean length.
Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db);

/// `count` disjoint intervals with durations uniform in [min_s, max_s],
/// sorted by start time.
std::vector<TimeInterval> gen_time_masks(double clip_s, Rng& rng, int count, double min_s = 0.1, double max_s = 0.25);

/// Zeroes the samples inside each interval.
Waveform apply_time_masks(const Waveform& w, const std::vector<TimeInterval>& intervals);

/// Frames whose analysis window overlaps any interval are marked unobserved.
MaskSpec time_mask_spec(const std::vector<TimeInterval>& intervals, Eigen::Index length, double sample_rate,
                        StftParams params);

// --- priors -------------------------------------------------------------------

/// Frozen latent input, i.i.d. U(0, 0.1).
template <typename Scalar>
Tensor<Scalar> latent(const Shape& shape, Rng& rng);

// --- restoration -------------------------------------------------------------

RunResult denoise(const Waveform& observation, const RunConfig& cfg, const ProgressFn& progress = {});

RunResult inpaint(const Waveform& observation, const MaskSpec& mask, const RunConfig& cfg,
                  const ProgressFn& progress = {});

/// Seeds for the three priors of a separation run. Flipping `mask_polarity`
/// to -1 computes the mask as sigmoid(-g), i.e. it exchanges the roles of
/// the two source priors.
struct SeparationSeeds
{
  std::uint64_t source_a = 0;
  std::uint64_t source_b = 0;
  std::uint64_t mask = 0;
  int mask_polarity = 1;

  static SeparationSeeds from_run_seed(std::uint64_t seed);
};

RunResult separate(const Waveform& mixture, const RunConfig& cfg, const ProgressFn& progress = {});
RunResult separate(const Waveform& mixture, const RunConfig& cfg, const SeparationSeeds& seeds,
                   const ProgressFn& progress = {});

// --- building blocks shared with tests ----------------------------------------

/// (1, 2, F, T) tensor from a spectrogram: channel 0 real, channel 1 imaginary.
template <typename Scalar>
Tensor<Scalar> spectrogram_tensor(const Spectrogram& s);

/// Inverse of spectrogram_tensor; params and length are taken from `like`.
template <typename Scalar>
Spectrogram tensor_spectrogram(const Tensor<Scalar>& t, const Spectrogram& like);

/// Value of the denoising objective for a given network output.
template <typename Scalar>
double denoise_objective(const Tensor<Scalar>& output, const Tensor<Scalar>& observed);

/// Sub-seed streams used inside one run.
enum class SeedStream : std::uint64_t
{
  Network = 1,
  Latent = 2,
  Corruption = 3,
  SourceA = 4,
  SourceB = 5,
  MaskNet = 6,
};

} // namespace dap
