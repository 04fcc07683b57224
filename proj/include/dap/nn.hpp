#pragma once

#include "dap/rng.hpp"
#include "dap/tensor.hpp"

#include <string>
#include <vector>

namespace dap {

enum class ArchKind
{
  PlainConv,
  DilatedConst,
  DilatedExp,
  DilatedExpDense,
};

/// One of the four U-Net prior variants compared in the ablation.
struct ArchVariant
{
  ArchKind kind = ArchKind::DilatedExpDense;
  int rate = 1; // only meaningful for DilatedConst, where it is >= 2

  static ArchVariant plain() { return {ArchKind::PlainConv, 1}; }
  static ArchVariant dilated(int rate = 2);
  static ArchVariant dilated_exp() { return {ArchKind::DilatedExp, 1}; }
  static ArchVariant dilated_exp_dense() { return {ArchKind::DilatedExpDense, 1}; }

  /// CLI names: conv | dilated | dilated-exp | dilated-exp-dense.
  static ArchVariant parse(const std::string& name, int rate = 2);
  std::string name() const;
  /// Row label used in benchmark tables.
  std::string label() const;
  bool dense() const { return kind == ArchKind::DilatedExpDense; }

  friend bool operator==(const ArchVariant&, const ArchVariant&) = default;
};

struct UNetSpec
{
  int in_channels = 32;
  int out_channels = 2;
  double width_scale = 1.0;
  ArchVariant variant = ArchVariant::dilated_exp_dense();
  int kernel = 3;
  int dilation_cap = 32;
  double leaky_slope = 0.2;
};

/// Base filter counts before width scaling.
inline constexpr int kBaseWidths[3] = {35, 70, 140};

/// Element i is min(base * 2^i, cap).
std::vector<int> exp_dilation_schedule(int n_layers, int base, int cap);

enum class Stage
{
  Down1,
  Down2,
  Bottleneck,
  Up1,
  Up2,
  Head,
};

enum class LayerKind
{
  Conv,       // k x k convolution followed by LeakyReLU
  Transition, // 1 x 1 convolution closing a dense block, followed by LeakyReLU
  Output,     // final linear convolution
  MaxPool,
  Upsample,
  Concat, // skip connection onto the upsampled path
};

struct LayerDesc
{
  LayerKind kind;
  Stage stage;
  int in_channels;
  int out_channels;
  int kernel = 0;
  int dilation = 1;
  int param_index = -1; // index into PriorNet parameter list for conv-like layers
};

std::string stage_name(Stage stage);
std::string layer_kind_name(LayerKind kind);

template <typename Scalar>
struct ConvParams
{
  Tensor<Scalar> weight; // (out, in, k, k)
  Tensor<Scalar> bias;   // (out)
};

/// A built U-Net prior: the layer plan plus its learnable parameters.
template <typename Scalar>
class PriorNet
{
public:
  PriorNet(UNetSpec spec, std::vector<LayerDesc> layers, std::vector<ConvParams<Scalar>> params);

  const UNetSpec& spec() const { return spec_; }
  const std::vector<LayerDesc>& layers() const { return layers_; }
  std::vector<ConvParams<Scalar>>& params() { return params_; }
  const std::vector<ConvParams<Scalar>>& params() const { return params_; }

  /// Flat list of every learnable tensor (weight, bias per conv layer).
  std::vector<Tensor<Scalar>> parameters() const;

  /// f(z). z must be (1, in_channels, F, T) with F and T divisible by 4.
  Tensor<Scalar> forward(Tape<Scalar>& tape, const Tensor<Scalar>& z) const;

private:
  Tensor<Scalar> run_stage(Tape<Scalar>& tape, Stage stage, const Tensor<Scalar>& x) const;
  Tensor<Scalar> apply_conv(Tape<Scalar>& tape, const LayerDesc& layer, const Tensor<Scalar>& x) const;

  UNetSpec spec_;
  std::vector<LayerDesc> layers_;
  std::vector<ConvParams<Scalar>> params_;
};

/// Layer plan only; no parameters are allocated.
std::vector<LayerDesc> plan_unet(const UNetSpec& spec);

/// Scaled filter count; throws if rounding yields 0.
int scaled_width(int base, double width_scale);

template <typename Scalar>
PriorNet<Scalar> build_unet(const UNetSpec& spec, Rng& rng);

/// Sum of Cout * (Cin * k^2 + 1) over conv-like layers of a plan.
std::int64_t param_count(const std::vector<LayerDesc>& layers);

template <typename Scalar>
std::int64_t param_count(const PriorNet<Scalar>& net)
{
  return param_count(net.layers());
}

/// One line per layer: stage, kind, channels, kernel and dilation.
std::string architecture_summary(const std::vector<LayerDesc>& layers);

} // namespace dap
