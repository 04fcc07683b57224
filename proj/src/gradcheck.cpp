#include "dap/gradcheck.hpp"

#include "dap/nn.hpp"

#include <numeric>

namespace dap {

namespace {

using T = Tensor<double>;

T random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0)
{
  T t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// Values with |x| >= margin, keeping finite differences off the kink at 0.
T away_from_zero(Shape shape, Rng& rng, double margin = 1e-2)
{
  T t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) {
    const double mag = rng.uniform(margin + 0.05, 1.0);
    t.data()[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

// A shuffled grid of distinct values 0.05 apart: no near-ties inside any pooling window.
T distinct_values(Shape shape, Rng& rng)
{
  T t(std::move(shape));
  std::vector<Index> order(static_cast<std::size_t>(t.size()));
  std::iota(order.begin(), order.end(), Index(0));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next_u64() % i]);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = 0.05 * static_cast<double>(order[static_cast<std::size_t>(i)]) - 1.0;
  return t;
}

// Weighted sum with fixed random weights, so every output element matters.
T weighted_sum(Tape<double>& tape, const T& x, const T& weights)
{
  return mean(tape, mul(tape, x, weights));
}

} // namespace

std::vector<GradCheckResult> run_op_gradchecks(std::uint64_t seed)
{
  constexpr double tol = 1e-4;
  Rng rng(seed);
  std::vector<GradCheckResult> out;

  for (int dilation : {1, 2, 3}) {
    T x = random_tensor({1, 3, 7, 6}, rng);
    T w = random_tensor({4, 3, 3, 3}, rng);
    T b = random_tensor({4}, rng);
    T r = random_tensor({1, 4, 7, 6}, rng);
    out.push_back(check_gradients(
        "conv2d dilation " + std::to_string(dilation), {x, w, b},
        [&](Tape<double>& tape) { return weighted_sum(tape, conv2d(tape, x, w, b, dilation), r); }, rng, tol));
  }
  {
    T x = distinct_values({1, 2, 6, 8}, rng);
    T r = random_tensor({1, 2, 3, 4}, rng);
    out.push_back(check_gradients(
        "maxpool2", {x}, [&](Tape<double>& tape) { return weighted_sum(tape, maxpool2(tape, x), r); }, rng, tol));
  }
  {
    T x = random_tensor({1, 2, 3, 5}, rng);
    T r = random_tensor({1, 2, 6, 10}, rng);
    out.push_back(check_gradients(
        "upsample_bilinear2", {x},
        [&](Tape<double>& tape) { return weighted_sum(tape, upsample_bilinear2(tape, x), r); }, rng, tol));
  }
  {
    T a = random_tensor({1, 2, 4, 3}, rng);
    T b = random_tensor({1, 3, 4, 3}, rng);
    T r = random_tensor({1, 5, 4, 3}, rng);
    out.push_back(check_gradients(
        "concat_channels", {a, b}, [&](Tape<double>& tape) { return weighted_sum(tape, concat_channels(tape, a, b), r); },
        rng, tol));
    T r2 = random_tensor({1, 2, 4, 3}, rng);
    out.push_back(check_gradients(
        "slice_channels", {b},
        [&](Tape<double>& tape) { return weighted_sum(tape, slice_channels(tape, b, 1, 2), r2); }, rng, tol));
  }
  {
    T m = random_tensor({1, 1, 4, 3}, rng);
    T r = random_tensor({1, 2, 4, 3}, rng);
    out.push_back(check_gradients(
        "repeat_channels", {m},
        [&](Tape<double>& tape) { return weighted_sum(tape, repeat_channels(tape, m, 2), r); }, rng, tol));
  }
  {
    T x = away_from_zero({1, 2, 5, 5}, rng);
    T r = random_tensor({1, 2, 5, 5}, rng);
    out.push_back(check_gradients(
        "leaky_relu", {x}, [&](Tape<double>& tape) { return weighted_sum(tape, leaky_relu(tape, x, 0.2), r); }, rng,
        tol));
    out.push_back(check_gradients(
        "sigmoid", {x}, [&](Tape<double>& tape) { return weighted_sum(tape, sigmoid(tape, x), r); }, rng, tol));
    out.push_back(check_gradients(
        "affine", {x}, [&](Tape<double>& tape) { return weighted_sum(tape, affine(tape, x, -1.5, 0.25), r); }, rng,
        tol));
  }
  {
    T a = random_tensor({1, 2, 4, 4}, rng);
    T b = random_tensor({1, 2, 4, 4}, rng);
    T r = random_tensor({1, 2, 4, 4}, rng);
    out.push_back(check_gradients(
        "add", {a, b}, [&](Tape<double>& tape) { return weighted_sum(tape, add(tape, a, b), r); }, rng, tol));
    out.push_back(check_gradients(
        "sub", {a, b}, [&](Tape<double>& tape) { return weighted_sum(tape, sub(tape, a, b), r); }, rng, tol));
    out.push_back(check_gradients(
        "mul", {a, b}, [&](Tape<double>& tape) { return weighted_sum(tape, mul(tape, a, b), r); }, rng, tol));
    out.push_back(check_gradients("mean", {a}, [&](Tape<double>& tape) { return mean(tape, a); }, rng, tol));
    out.push_back(check_gradients("mse", {a, b}, [&](Tape<double>& tape) { return mse(tape, a, b); }, rng, tol));
    T mask(a.shape());
    for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = (i % 3 == 0) ? 0.0 : 1.0;
    out.push_back(check_gradients(
        "masked_mse", {a, b}, [&](Tape<double>& tape) { return masked_mse(tape, a, b, mask); }, rng, tol));
  }
  {
    T x = away_from_zero({1, 2, 3, 4}, rng, 0.1);
    T r = random_tensor({1, 1, 3, 4}, rng);
    out.push_back(check_gradients(
        "complex_magnitude", {x}, [&](Tape<double>& tape) { return weighted_sum(tape, complex_magnitude(tape, x), r); },
        rng, tol));
  }
  return out;
}

std::vector<GradCheckResult> run_unet_gradchecks(std::uint64_t seed)
{
  constexpr double tol = 1e-3;
  // leaky_relu and maxpool kinks sit closer than 1e-5 in a net this deep
  constexpr double h = 1e-7;
  std::vector<GradCheckResult> out;
  for (const ArchVariant variant :
       {ArchVariant::plain(), ArchVariant::dilated(2), ArchVariant::dilated_exp(), ArchVariant::dilated_exp_dense()}) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(variant.kind)));
    UNetSpec spec{2, 2, 1.0 / 7.0, variant};
    auto net = build_unet<double>(spec, rng);
    T z = random_tensor({1, 2, 8, 8}, rng, 0.0, 0.1);
    T target = random_tensor({1, 2, 8, 8}, rng);
    out.push_back(check_gradients(
        "unet " + variant.name(), net.parameters(),
        [&](Tape<double>& tape) { return mse(tape, net.forward(tape, z), target); }, rng, tol, 24, h));
  }
  return out;
}

} // namespace dap
