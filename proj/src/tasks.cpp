#include "dap/tasks.hpp"

#include "dap/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dap {

std::string precision_name(Precision p)
{
  return p == Precision::Float32 ? "float32" : "float64";
}

Precision parse_precision(const std::string& name)
{
  if (name == "float32" || name == "f32" || name == "32") return Precision::Float32;
  if (name == "float64" || name == "f64" || name == "64") return Precision::Float64;
  throw std::invalid_argument("unknown precision '" + name + "' (expected float32 or float64)");
}

void RunConfig::validate() const
{
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(exclusion_weight >= 0.0)) throw std::invalid_argument("exclusion_weight must be >= 0");
  if (latent_channels < 1) throw std::invalid_argument("latent_channels must be >= 1");
  if (stft.hop <= 0 || stft.n_fft < stft.hop) throw std::invalid_argument("stft: need hop > 0 and n_fft >= hop");
  // Surfaces width rounding errors before any work is done.
  plan_unet(UNetSpec{latent_channels, 2, width_scale, arch});
}

// ---------------------------------------------------------------------------
// corruption

Waveform add_gaussian(const Waveform& w, double sigma, Rng& rng)
{
  if (!(sigma >= 0.0)) throw std::invalid_argument("add_gaussian: sigma must be >= 0");
  Waveform out = w;
  for (Eigen::Index i = 0; i < out.samples.size(); ++i) out.samples[i] += sigma * rng.normal();
  return out;
}

Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db)
{
  if (!std::isfinite(snr_db)) throw std::invalid_argument("mix_at_snr: snr must be finite");
  if (noise.size() == 0) throw std::invalid_argument("mix_at_snr: empty noise");
  Eigen::ArrayXd fitted(clean.size());
  for (Eigen::Index i = 0; i < clean.size(); ++i) fitted[i] = noise.samples[i % noise.size()];
  const double p_noise = fitted.square().mean();
  if (!(p_noise > 0.0)) throw std::invalid_argument("mix_at_snr: noise is silent");
  const double p_clean = clean.samples.square().mean();
  const double gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  Waveform out = clean;
  out.samples += gain * fitted;
  return out;
}

std::vector<TimeInterval> gen_time_masks(double clip_s, Rng& rng, int count, double min_s, double max_s)
{
  if (count < 0) throw std::invalid_argument("gen_time_masks: count must be >= 0");
  if (!(min_s >= 0.0) || !(max_s >= min_s)) throw std::invalid_argument("gen_time_masks: invalid duration range");
  if (count * max_s > clip_s)
    throw std::invalid_argument("gen_time_masks: requested mask duration exceeds clip length");
  std::vector<double> durations(static_cast<std::size_t>(count));
  for (auto& d : durations) d = rng.uniform(min_s, max_s);
  const double slack = clip_s - std::accumulate(durations.begin(), durations.end(), 0.0);
  // Sorted uniform offsets into the slack give uniformly placed, non-overlapping intervals.
  std::vector<double> offsets(static_cast<std::size_t>(count));
  for (auto& o : offsets) o = rng.uniform(0.0, slack);
  std::sort(offsets.begin(), offsets.end());
  std::vector<TimeInterval> out;
  double used = 0.0;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    const double start = offsets[i] + used;
    out.push_back({start, start + durations[i]});
    used += durations[i];
  }
  return out;
}

Waveform apply_time_masks(const Waveform& w, const std::vector<TimeInterval>& intervals)
{
  Waveform out = w;
  for (const auto& iv : intervals) {
    if (!(iv.end >= iv.start) || iv.start < 0.0) throw std::invalid_argument("apply_time_masks: invalid interval");
    const auto a = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::llround(iv.start * w.sample_rate)), 0, w.size());
    const auto b = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::llround(iv.end * w.sample_rate)), 0, w.size());
    out.samples.segment(a, b - a).setZero();
  }
  return out;
}

MaskSpec time_mask_spec(const std::vector<TimeInterval>& intervals, Eigen::Index length, double sample_rate,
                        StftParams params)
{
  const Eigen::Index frames = params.frames(length);
  MaskSpec m;
  m.observed = Eigen::ArrayXXd::Ones(params.bins(), frames);
  const Eigen::Index half = params.n_fft / 2;
  for (const auto& iv : intervals) {
    const auto a = static_cast<Eigen::Index>(std::llround(iv.start * sample_rate));
    const auto b = static_cast<Eigen::Index>(std::llround(iv.end * sample_rate));
    if (b <= a) continue;
    for (Eigen::Index t = 0; t < frames; ++t) {
      const Eigen::Index lo = t * params.hop - half;
      const Eigen::Index hi = t * params.hop + half;
      if (lo < b && hi > a) m.observed.col(t).setZero();
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// tensors <-> spectrograms

template <typename Scalar>
Tensor<Scalar> latent(const Shape& shape, Rng& rng)
{
  Tensor<Scalar> z(shape, false);
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<Scalar>(0.1 * rng.uniform());
  return z;
}

template <typename Scalar>
Tensor<Scalar> spectrogram_tensor(const Spectrogram& s)
{
  const Index F = s.bins(), T = s.frames();
  Tensor<Scalar> t({1, 2, F, T});
  for (Index f = 0; f < F; ++f)
    for (Index k = 0; k < T; ++k) {
      t.at(0, 0, f, k) = static_cast<Scalar>(s.real(f, k));
      t.at(0, 1, f, k) = static_cast<Scalar>(s.imag(f, k));
    }
  return t;
}

template <typename Scalar>
Spectrogram tensor_spectrogram(const Tensor<Scalar>& t, const Spectrogram& like)
{
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != 2)
    throw std::invalid_argument("tensor_spectrogram: expected a (1, 2, F, T) tensor");
  Spectrogram s;
  s.params = like.params;
  s.length = like.length;
  s.real.resize(t.dim(2), t.dim(3));
  s.imag.resize(t.dim(2), t.dim(3));
  for (Index f = 0; f < t.dim(2); ++f)
    for (Index k = 0; k < t.dim(3); ++k) {
      s.real(f, k) = static_cast<double>(t.at(0, 0, f, k));
      s.imag(f, k) = static_cast<double>(t.at(0, 1, f, k));
    }
  return s;
}

template <typename Scalar>
double denoise_objective(const Tensor<Scalar>& output, const Tensor<Scalar>& observed)
{
  Tape<Scalar> tape;
  return static_cast<double>(mse(tape, output, observed).item());
}

// ---------------------------------------------------------------------------
// fitting loop

namespace {

using Clock = std::chrono::steady_clock;

/// Minimizes loss_fn over params with ADAM; returns the loss curve.
template <typename Scalar, typename LossFn>
std::vector<double> fit(std::vector<Tensor<Scalar>> params, const RunConfig& cfg, LossFn&& loss_fn,
                        const ProgressFn& progress)
{
  AdamState<Scalar> adam(params, AdamOptions{cfg.lr});
  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(cfg.iterations));
  Tape<Scalar> tape;
  for (int it = 0; it < cfg.iterations; ++it) {
    try {
      tape.clear();
      for (auto& p : params) p.zero_grad();
      const Tensor<Scalar> loss = loss_fn(tape);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) throw NumericError("non-finite loss");
      curve.push_back(value);
      tape.backward(loss);
      adam.step(params);
      if (progress) progress(it, value);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  return curve;
}

template <typename Scalar>
struct Prior
{
  PriorNet<Scalar> net;
  Tensor<Scalar> z;
};

template <typename Scalar>
Prior<Scalar> make_prior(const RunConfig& cfg, int out_channels, std::uint64_t seed, Index bins, Index frames)
{
  Rng net_rng(derive_seed(seed, static_cast<std::uint64_t>(SeedStream::Network)));
  UNetSpec spec{cfg.latent_channels, out_channels, cfg.width_scale, cfg.arch};
  auto net = build_unet<Scalar>(spec, net_rng);
  Rng z_rng(derive_seed(seed, static_cast<std::uint64_t>(SeedStream::Latent)));
  auto z = latent<Scalar>({1, cfg.latent_channels, bins, frames}, z_rng);
  return {std::move(net), std::move(z)};
}

template <typename Scalar>
Tensor<Scalar> final_output(const Prior<Scalar>& prior)
{
  Tape<Scalar> tape;
  return prior.net.forward(tape, prior.z).detached();
}

void check_observation(const Waveform& w, const char* task)
{
  if (w.size() == 0) throw std::invalid_argument(std::string(task) + ": empty observation");
  if (!w.samples.allFinite()) throw std::invalid_argument(std::string(task) + ": observation is not finite");
}

template <typename Scalar>
RunResult fit_single(const Waveform& observation, const MaskSpec* mask, const RunConfig& cfg,
                     const ProgressFn& progress)
{
  const auto start = Clock::now();
  const Spectrogram spec = stft(observation, cfg.stft);
  PadRecord record;
  const Spectrogram padded = pad_spec(spec, 4, record);
  const Tensor<Scalar> target = spectrogram_tensor<Scalar>(padded);

  Tensor<Scalar> mask_tensor;
  if (mask) {
    if (mask->observed.rows() != spec.bins() || mask->observed.cols() != spec.frames())
      throw std::invalid_argument("inpaint: mask does not match the observation's spectrogram");
    // Pad cells count as observed zeros.
    mask_tensor = Tensor<Scalar>::constant(target.shape(), Scalar(1));
    for (Index c = 0; c < 2; ++c)
      for (Index f = 0; f < spec.bins(); ++f)
        for (Index t = 0; t < spec.frames(); ++t)
          mask_tensor.at(0, c, f, t) = static_cast<Scalar>(mask->observed(f, t) != 0.0 ? 1 : 0);
  }

  auto prior = make_prior<Scalar>(cfg, 2, cfg.seed, padded.bins(), padded.frames());
  RunResult result;
  result.loss_curve = fit<Scalar>(
      prior.net.parameters(), cfg,
      [&](Tape<Scalar>& tape) {
        const auto out = prior.net.forward(tape, prior.z);
        return mask ? masked_mse(tape, out, target, mask_tensor) : mse(tape, out, target);
      },
      progress);

  const Spectrogram restored = crop_spec(tensor_spectrogram(final_output(prior), padded), record);
  result.restored.push_back(istft(restored, observation.sample_rate));
  result.config = cfg;
  result.seed = cfg.seed;
  result.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

template <typename Scalar>
constexpr Scalar kMaskMargin = Scalar(1e-6);

template <typename Scalar>
RunResult fit_separation(const Waveform& mixture, const RunConfig& cfg, const SeparationSeeds& seeds,
                         const ProgressFn& progress)
{
  const auto start = Clock::now();
  const Spectrogram spec = stft(mixture, cfg.stft);
  PadRecord record;
  const Spectrogram padded = pad_spec(spec, 4, record);
  const Tensor<Scalar> target = spectrogram_tensor<Scalar>(padded);
  const Index F = padded.bins(), T = padded.frames();

  auto source_a = make_prior<Scalar>(cfg, 2, seeds.source_a, F, T);
  auto source_b = make_prior<Scalar>(cfg, 2, seeds.source_b, F, T);
  auto mask_prior = make_prior<Scalar>(cfg, 1, seeds.mask, F, T);
  const Scalar polarity = seeds.mask_polarity < 0 ? Scalar(-1) : Scalar(1);
  const Scalar lambda = static_cast<Scalar>(cfg.exclusion_weight);

  auto params = source_a.net.parameters();
  for (const auto& p : source_b.net.parameters()) params.push_back(p);
  for (const auto& p : mask_prior.net.parameters()) params.push_back(p);

  const auto mask_of = [&](Tape<Scalar>& tape) {
    const auto logits = mask_prior.net.forward(tape, mask_prior.z);
    const auto soft = sigmoid(tape, polarity == Scalar(1) ? logits : affine(tape, logits, polarity, Scalar(0)));
    // squeezed so the mask stays strictly inside (0, 1) once sigmoid saturates
    return affine(tape, soft, Scalar(1) - Scalar(2) * kMaskMargin<Scalar>, kMaskMargin<Scalar>);
  };

  RunResult result;
  result.loss_curve = fit<Scalar>(
      params, cfg,
      [&](Tape<Scalar>& tape) {
        const auto s1 = source_a.net.forward(tape, source_a.z);
        const auto s2 = source_b.net.forward(tape, source_b.z);
        const auto m = repeat_channels(tape, mask_of(tape), 2);
        const auto mix = add(tape, mul(tape, m, s1), mul(tape, affine(tape, m, Scalar(-1), Scalar(1)), s2));
        auto loss = mse(tape, mix, target);
        if (lambda > Scalar(0)) {
          const auto overlap = mean(tape, mul(tape, complex_magnitude(tape, s1), complex_magnitude(tape, s2)));
          loss = add(tape, loss, affine(tape, overlap, lambda, Scalar(0)));
        }
        return loss;
      },
      progress);

  for (const auto* prior : {&source_a, &source_b}) {
    const Spectrogram s = crop_spec(tensor_spectrogram(final_output(*prior), padded), record);
    result.restored.push_back(istft(s, mixture.sample_rate));
  }
  {
    Tape<Scalar> tape;
    const auto m = mask_of(tape);
    result.mask.resize(record.bins, record.frames);
    for (Index f = 0; f < record.bins; ++f)
      for (Index t = 0; t < record.frames; ++t) result.mask(f, t) = static_cast<double>(m.at(0, 0, f, t));
  }
  result.config = cfg;
  result.seed = cfg.seed;
  result.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

} // namespace

RunResult denoise(const Waveform& observation, const RunConfig& cfg, const ProgressFn& progress)
{
  cfg.validate();
  check_observation(observation, "denoise");
  return cfg.precision == Precision::Float32 ? fit_single<float>(observation, nullptr, cfg, progress)
                                             : fit_single<double>(observation, nullptr, cfg, progress);
}

RunResult inpaint(const Waveform& observation, const MaskSpec& mask, const RunConfig& cfg, const ProgressFn& progress)
{
  cfg.validate();
  check_observation(observation, "inpaint");
  if (!((mask.observed == 0.0) || (mask.observed == 1.0)).all())
    throw std::invalid_argument("inpaint: mask must be binary");
  return cfg.precision == Precision::Float32 ? fit_single<float>(observation, &mask, cfg, progress)
                                             : fit_single<double>(observation, &mask, cfg, progress);
}

SeparationSeeds SeparationSeeds::from_run_seed(std::uint64_t seed)
{
  return {derive_seed(seed, static_cast<std::uint64_t>(SeedStream::SourceA)),
          derive_seed(seed, static_cast<std::uint64_t>(SeedStream::SourceB)),
          derive_seed(seed, static_cast<std::uint64_t>(SeedStream::MaskNet)), 1};
}

RunResult separate(const Waveform& mixture, const RunConfig& cfg, const ProgressFn& progress)
{
  return separate(mixture, cfg, SeparationSeeds::from_run_seed(cfg.seed), progress);
}

RunResult separate(const Waveform& mixture, const RunConfig& cfg, const SeparationSeeds& seeds,
                   const ProgressFn& progress)
{
  cfg.validate();
  check_observation(mixture, "separate");
  return cfg.precision == Precision::Float32 ? fit_separation<float>(mixture, cfg, seeds, progress)
                                             : fit_separation<double>(mixture, cfg, seeds, progress);
}

template Tensor<float> latent<float>(const Shape&, Rng&);
template Tensor<double> latent<double>(const Shape&, Rng&);
template Tensor<float> spectrogram_tensor<float>(const Spectrogram&);
template Tensor<double> spectrogram_tensor<double>(const Spectrogram&);
template Spectrogram tensor_spectrogram<float>(const Tensor<float>&, const Spectrogram&);
template Spectrogram tensor_spectrogram<double>(const Tensor<double>&, const Spectrogram&);
template double denoise_objective<float>(const Tensor<float>&, const Tensor<float>&);
template double denoise_objective<double>(const Tensor<double>&, const Tensor<double>&);

} // namespace dap
