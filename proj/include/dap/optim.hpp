#pragma once

#include "dap/tensor.hpp"

#include <span>
#include <vector>

namespace dap {

struct AdamOptions
{
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates for a fixed parameter list.
template <typename Scalar>
class AdamState
{
public:
  using Array = typename Tensor<Scalar>::Array;

  AdamState(std::span<const Tensor<Scalar>> params, AdamOptions options = {});

  const AdamOptions& options() const { return options_; }
  long step_count() const { return t_; }
  const std::vector<Array>& first_moment() const { return m_; }
  const std::vector<Array>& second_moment() const { return v_; }

  /// One bias-corrected ADAM update. Gradients are left untouched; the caller
  /// zeroes them between iterations. Throws NumericError on a non-finite
  /// gradient, naming the offending parameter.
  void step(std::span<Tensor<Scalar>> params);

private:
  AdamOptions options_;
  std::vector<Array> m_;
  std::vector<Array> v_;
  long t_ = 0;
};

template <typename Scalar>
void adam_step(AdamState<Scalar>& state, std::span<Tensor<Scalar>> params)
{
  state.step(params);
}

} // namespace dap
