#include "oracles.hpp"

#include "dap/gradcheck.hpp"
#include "dap/rng.hpp"
#include "dap/tensor.hpp"

#include <doctest.h>

#include <cmath>

using namespace dap;
using T = Tensor<double>;

namespace {

T filled(Shape s, std::initializer_list<double> values)
{
  T t(std::move(s));
  Index i = 0;
  for (double v : values) t.data()[i++] = v;
  return t;
}

T random(Shape s, Rng& rng)
{
  T t(std::move(s));
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
  return t;
}

std::vector<double> to_vec(const T& t)
{
  return {t.data().data(), t.data().data() + t.size()};
}

} // namespace

TEST_CASE("conv2d identity kernel passes the input through")
{
  Tape<double> tape;
  Rng rng(1);
  const T x = random({1, 1, 5, 4}, rng);
  const T w = filled({1, 1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});
  const T b = T::zeros({1});
  const T y = conv2d(tape, x, w, b, 1);
  CHECK(y.shape() == x.shape());
  CHECK((y.data() == x.data()).all());
}

TEST_CASE("conv2d all-ones kernel sums zero-padded neighbourhoods")
{
  Tape<double> tape;
  const T x = filled({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const T y = conv2d(tape, x, T::constant({1, 1, 3, 3}, 1.0), T::zeros({1}), 1);
  CHECK(y.at(0, 0, 0, 0) == 12.0);
  CHECK(y.at(0, 0, 1, 1) == 45.0);
  CHECK(y.at(0, 0, 2, 2) == 28.0);
}

TEST_CASE("dilation 2 spreads a delta over a 5x5 footprint with 9 taps")
{
  Tape<double> tape;
  T x = T::zeros({1, 1, 7, 7});
  x.at(0, 0, 3, 3) = 1.0;
  const T y = conv2d(tape, x, T::constant({1, 1, 3, 3}, 1.0), T::zeros({1}), 2);
  int nonzero = 0;
  for (Index i = 0; i < y.size(); ++i) nonzero += y.data()[i] != 0.0;
  CHECK(nonzero == 9);
  for (int di : {-2, 0, 2})
    for (int dj : {-2, 0, 2}) CHECK(y.at(0, 0, 3 + di, 3 + dj) == 1.0);
}

TEST_CASE("conv2d matches the loop oracle and the zero-inflated kernel")
{
  Rng rng(2);
  for (int d : {1, 2, 3}) {
    CAPTURE(d);
    Tape<double> tape;
    const T x = random({1, 3, 9, 7}, rng);
    const T w = random({4, 3, 3, 3}, rng);
    const T b = random({4}, rng);
    const T y = conv2d(tape, x, w, b, d);
    const auto ref = oracle::conv2d(to_vec(x), 3, 9, 7, to_vec(w), to_vec(b), 4, 3, d);
    for (Index i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-12));

    // the same filter, spelled out as a (d(k-1)+1)-wide kernel at dilation 1
    const int K = d * 2 + 1;
    T inflated = T::zeros({4, 3, K, K});
    for (Index o = 0; o < 4; ++o)
      for (Index c = 0; c < 3; ++c)
        for (Index u = 0; u < 3; ++u)
          for (Index v = 0; v < 3; ++v) inflated.at(o, c, u * d, v * d) = w.at(o, c, u, v);
    const T z = conv2d(tape, x, inflated, b, 1);
    CHECK(((y.data() - z.data()).abs() < 1e-12).all());
  }
}

TEST_CASE("conv2d rejects bad geometry")
{
  Tape<double> tape;
  const T x = T::zeros({1, 2, 4, 4});
  CHECK_THROWS_AS(conv2d(tape, x, T::zeros({1, 3, 3, 3}), T::zeros({1}), 1), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(tape, x, T::zeros({1, 2, 2, 2}), T::zeros({1}), 1), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(tape, x, T::zeros({1, 2, 3, 3}), T::zeros({1}), 0), std::invalid_argument);
}

TEST_CASE("maxpool2 picks the first maximum and routes its gradient there")
{
  Tape<double> tape;
  T x = filled({1, 1, 2, 4}, {1, 3, 2, 2, 3, 0, 2, 2});
  x.set_requires_grad(true);
  const T y = maxpool2(tape, x);
  CHECK(y.shape() == Shape{1, 1, 1, 2});
  CHECK(y.data()[0] == 3.0);
  CHECK(y.data()[1] == 2.0);
  tape.backward(mean(tape, y));
  CHECK(x.grad()[1] == 0.5); // first 3 in row-major order
  CHECK(x.grad()[4] == 0.0);
  CHECK(x.grad()[2] == 0.5); // first 2 of the all-equal window
  CHECK(x.grad()[3] == 0.0);
  CHECK_THROWS_AS(maxpool2(tape, T::zeros({1, 1, 3, 4})), std::invalid_argument);
}

TEST_CASE("bilinear x2 of [0, 1] gives [0, .25, .75, 1]")
{
  Tape<double> tape;
  const T y = upsample_bilinear2(tape, filled({1, 1, 1, 2}, {0, 1}));
  CHECK(y.shape() == Shape{1, 1, 2, 4});
  const double expect[4] = {0.0, 0.25, 0.75, 1.0};
  for (Index r = 0; r < 2; ++r)
    for (Index c = 0; c < 4; ++c) CHECK(y.at(0, 0, r, c) == doctest::Approx(expect[c]).epsilon(1e-15));
}

TEST_CASE("upsample and its backward are adjoint")
{
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Tape<double> tape;
    T x = random({1, 2, 3 + trial, 5}, rng);
    x.set_requires_grad(true);
    const T y = random({1, 2, 2 * (3 + trial), 10}, rng);
    const T Ax = upsample_bilinear2(tape, x);
    // d<Ax, y>/dx = A^T y
    tape.backward(mean(tape, mul(tape, Ax, y)));
    const double n = static_cast<double>(y.size());
    const double lhs = (Ax.data() * y.data()).sum();
    const double rhs = (x.data() * x.grad()).sum() * n;
    CHECK(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("hand chain rule: d/dw mse(w x, 0) at w=1, x=2 is 8")
{
  Tape<double> tape;
  T w = T::scalar(1.0, true);
  const T x = T::scalar(2.0);
  const T loss = mse(tape, mul(tape, w, x), T::scalar(0.0));
  backward(tape, loss);
  CHECK(loss.item() == 4.0);
  CHECK(w.grad()[0] == 8.0);
}

TEST_CASE("backward semantics")
{
  SUBCASE("a loss that does not depend on the leaves gives zero gradients")
  {
    Tape<double> tape;
    T w = T::constant({3}, 0.5, true);
    const T loss = mean(tape, T::constant({3}, 2.0));
    tape.backward(loss);
    CHECK((w.grad() == 0.0).all());
  }
  SUBCASE("non-scalar loss is rejected")
  {
    Tape<double> tape;
    T w = T::constant({3}, 0.5, true);
    const T y = affine(tape, w, 2.0, 0.0);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
  }
  SUBCASE("leaf gradients accumulate across passes")
  {
    T w = T::scalar(1.0, true);
    for (int pass = 0; pass < 2; ++pass) {
      Tape<double> tape;
      tape.backward(mse(tape, mul(tape, w, T::scalar(2.0)), T::scalar(0.0)));
    }
    CHECK(w.grad()[0] == 16.0);
  }
}

TEST_CASE("masked_mse")
{
  Rng rng(4);
  Tape<double> tape;
  T p = random({1, 2, 3, 4}, rng);
  p.set_requires_grad(true);
  const T t = random({1, 2, 3, 4}, rng);

  SUBCASE("all-ones mask equals mse")
  {
    CHECK(masked_mse(tape, p, t, T::constant(p.shape(), 1.0)).item() == mse(tape, p, t).item());
  }
  SUBCASE("all-zeros mask is zero with zero gradient")
  {
    const T loss = masked_mse(tape, p, t, T::zeros(p.shape()));
    tape.backward(loss);
    CHECK(loss.item() == 0.0);
    CHECK((p.grad() == 0.0).all());
  }
  SUBCASE("half mask matches a direct sum and has no gradient where masked")
  {
    T m(p.shape());
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = i % 2 ? 1.0 : 0.0;
    const T loss = masked_mse(tape, p, t, m);
    double direct = 0.0;
    for (Index i = 0; i < p.size(); ++i)
      if (i % 2) direct += (p.data()[i] - t.data()[i]) * (p.data()[i] - t.data()[i]);
    CHECK(loss.item() == doctest::Approx(direct / static_cast<double>(p.size())).epsilon(1e-14));
    tape.backward(loss);
    for (Index i = 0; i < p.size(); i += 2) CHECK(p.grad()[i] == 0.0);
  }
  SUBCASE("non-binary mask is rejected")
  {
    CHECK_THROWS_AS(masked_mse(tape, p, t, T::constant(p.shape(), 0.5)), std::invalid_argument);
  }
}

TEST_CASE("channel plumbing")
{
  Tape<double> tape;
  const T a = filled({1, 1, 1, 2}, {1, 2});
  const T b = filled({1, 2, 1, 2}, {3, 4, 5, 6});
  const T c = concat_channels(tape, a, b);
  CHECK(c.shape() == Shape{1, 3, 1, 2});
  for (Index i = 0; i < 6; ++i) CHECK(c.data()[i] == static_cast<double>(i + 1));
  const T s = slice_channels(tape, c, 1, 2);
  CHECK((s.data() == b.data()).all());
  const T r = repeat_channels(tape, a, 3);
  CHECK(r.shape() == Shape{1, 3, 1, 2});
  CHECK(r.at(0, 2, 0, 1) == 2.0);
  const T m = complex_magnitude(tape, filled({1, 2, 1, 2}, {3, 0, 4, -2}));
  CHECK(m.data()[0] == 5.0);
  CHECK(m.data()[1] == 2.0);
}

TEST_CASE("non-finite values raise NumericError")
{
  Tape<double> tape;
  const T x = T::constant({1, 1, 2, 2}, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(leaky_relu(tape, x, 0.2), NumericError);
  CHECK_THROWS_AS(mean(tape, x), NumericError);
}

TEST_CASE("every op passes the finite-difference check")
{
  for (const auto& r : run_op_gradchecks()) {
    CAPTURE(r.name);
    CAPTURE(r.rel_error);
    CHECK(r.passed);
    CHECK(r.rel_error < 1e-4);
  }
}

TEST_CASE("forward and backward are bit-reproducible")
{
  const auto pass = [] {
    Rng rng(9);
    T x = random({1, 3, 8, 8}, rng);
    T w = random({4, 3, 3, 3}, rng);
    T b = random({4}, rng);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    Tape<double> tape;
    const T y = upsample_bilinear2(tape, maxpool2(tape, leaky_relu(tape, conv2d(tape, x, w, b, 2), 0.2)));
    tape.backward(mean(tape, mul(tape, y, y)));
    std::vector<double> out = to_vec(y);
    out.insert(out.end(), w.grad().data(), w.grad().data() + w.size());
    return out;
  };
  CHECK(pass() == pass());
}
