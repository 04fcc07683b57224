#pragma once

#include "dap/rng.hpp"
#include "dap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace dap {

struct GradCheckResult
{
  std::string name;
  /// ||analytic - numeric|| / max(||analytic||, ||numeric||) over sampled coordinates.
  double rel_error = 0.0;
  double tolerance = 0.0;
  int coordinates = 0;
  bool passed = false;
};

/// Compares tape gradients of `loss_fn` w.r.t. `leaves` against central
/// differences with step h. At most `max_coords` coordinates per leaf are
/// probed (all of them when the leaf is smaller).
template <typename LossFn>
GradCheckResult check_gradients(std::string name, std::vector<Tensor<double>> leaves, LossFn&& loss_fn, Rng& rng,
                                double tolerance, int max_coords = 64, double h = 1e-5)
{
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  {
    Tape<double> tape;
    const Tensor<double> loss = loss_fn(tape);
    tape.backward(loss);
  }

  double diff2 = 0.0, analytic2 = 0.0, numeric2 = 0.0;
  int probed = 0;
  for (auto& leaf : leaves) {
    std::vector<Index> coords;
    if (leaf.size() <= max_coords) {
      for (Index i = 0; i < leaf.size(); ++i) coords.push_back(i);
    } else {
      for (int k = 0; k < max_coords; ++k)
        coords.push_back(static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(leaf.size())));
    }
    for (Index i : coords) {
      const double saved = leaf.data()[i];
      Tape<double> tape;
      leaf.data()[i] = saved + h;
      const double up = loss_fn(tape).item();
      tape.clear();
      leaf.data()[i] = saved - h;
      const double down = loss_fn(tape).item();
      leaf.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = leaf.grad()[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      analytic2 += analytic * analytic;
      numeric2 += numeric * numeric;
      ++probed;
    }
  }
  GradCheckResult r;
  r.name = std::move(name);
  r.tolerance = tolerance;
  r.coordinates = probed;
  const double scale = std::sqrt(std::max(analytic2, numeric2));
  r.rel_error = scale > 0.0 ? std::sqrt(diff2) / scale : std::sqrt(diff2);
  r.passed = r.rel_error < tolerance;
  return r;
}

/// Per-operation gradient suites at 64-bit precision (tolerance 1e-4).
std::vector<GradCheckResult> run_op_gradchecks(std::uint64_t seed = 7);

/// End-to-end check of a miniature U-Net (width scale 1/7, latent 2x8x8) for
/// every architecture variant (tolerance 1e-3, step 1e-7).
std::vector<GradCheckResult> run_unet_gradchecks(std::uint64_t seed = 11);

} // namespace dap
