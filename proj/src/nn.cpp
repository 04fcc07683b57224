#include "dap/nn.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace dap {

ArchVariant ArchVariant::dilated(int rate)
{
  if (rate < 2) throw std::invalid_argument("constant dilation rate must be >= 2");
  return {ArchKind::DilatedConst, rate};
}

ArchVariant ArchVariant::parse(const std::string& name, int rate)
{
  if (name == "conv") return plain();
  if (name == "dilated") return dilated(rate);
  if (name == "dilated-exp") return dilated_exp();
  if (name == "dilated-exp-dense") return dilated_exp_dense();
  throw std::invalid_argument("unknown architecture '" + name +
                              "' (expected conv, dilated, dilated-exp or dilated-exp-dense)");
}

std::string ArchVariant::name() const
{
  switch (kind) {
  case ArchKind::PlainConv: return "conv";
  case ArchKind::DilatedConst: return "dilated";
  case ArchKind::DilatedExp: return "dilated-exp";
  case ArchKind::DilatedExpDense: return "dilated-exp-dense";
  }
  return "?";
}

std::string ArchVariant::label() const
{
  switch (kind) {
  case ArchKind::PlainConv: return "Convolution";
  case ArchKind::DilatedConst: return "Dilated Conv.";
  case ArchKind::DilatedExp: return "Dilated Conv. (exp)";
  case ArchKind::DilatedExpDense: return "Dilated Conv. (exp) + Dense";
  }
  return "?";
}

std::vector<int> exp_dilation_schedule(int n_layers, int base, int cap)
{
  if (n_layers < 1 || base < 1 || cap < base)
    throw std::invalid_argument("exp_dilation_schedule: need n_layers >= 1, base >= 1, cap >= base");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n_layers));
  long long rate = base;
  for (int i = 0; i < n_layers; ++i) {
    out.push_back(static_cast<int>(std::min<long long>(rate, cap)));
    rate = std::min<long long>(rate * 2, static_cast<long long>(cap) * 2);
  }
  return out;
}

std::string stage_name(Stage stage)
{
  switch (stage) {
  case Stage::Down1: return "down1";
  case Stage::Down2: return "down2";
  case Stage::Bottleneck: return "bottleneck";
  case Stage::Up1: return "up1";
  case Stage::Up2: return "up2";
  case Stage::Head: return "head";
  }
  return "?";
}

std::string layer_kind_name(LayerKind kind)
{
  switch (kind) {
  case LayerKind::Conv: return "conv";
  case LayerKind::Transition: return "transition";
  case LayerKind::Output: return "output";
  case LayerKind::MaxPool: return "maxpool2";
  case LayerKind::Upsample: return "upsample2";
  case LayerKind::Concat: return "concat";
  }
  return "?";
}

int scaled_width(int base, double width_scale)
{
  if (!(width_scale > 0.0)) throw std::invalid_argument("width_scale must be positive");
  const long w = std::lround(base * width_scale);
  if (w < 1)
    throw std::invalid_argument("width_scale " + std::to_string(width_scale) + " rounds filter count " +
                                std::to_string(base) + " to zero");
  return static_cast<int>(w);
}

namespace {

// Per-conv dilation in plan order: down1 x2, down2 x2, bottleneck x2, up1 x2, up2 x2.
std::vector<int> conv_dilations(const UNetSpec& spec)
{
  switch (spec.variant.kind) {
  case ArchKind::PlainConv: return std::vector<int>(10, 1);
  case ArchKind::DilatedConst: return std::vector<int>(10, spec.variant.rate);
  case ArchKind::DilatedExp:
  case ArchKind::DilatedExpDense: {
    auto d = exp_dilation_schedule(6, 2, spec.dilation_cap);
    // upstream mirrors the downstream path
    d.insert(d.end(), {d[3], d[2], d[1], d[0]});
    return d;
  }
  }
  return {};
}

} // namespace

std::vector<LayerDesc> plan_unet(const UNetSpec& spec)
{
  if (spec.in_channels < 1) throw std::invalid_argument("UNetSpec: in_channels must be >= 1");
  if (spec.out_channels < 1) throw std::invalid_argument("UNetSpec: out_channels must be >= 1");
  if (spec.kernel < 1 || spec.kernel % 2 == 0) throw std::invalid_argument("UNetSpec: kernel must be odd");
  if (spec.variant.kind == ArchKind::DilatedConst && spec.variant.rate < 2)
    throw std::invalid_argument("UNetSpec: constant dilation rate must be >= 2");

  const int w35 = scaled_width(kBaseWidths[0], spec.width_scale);
  const int w70 = scaled_width(kBaseWidths[1], spec.width_scale);
  const int w140 = scaled_width(kBaseWidths[2], spec.width_scale);
  const auto dil = conv_dilations(spec);
  const bool dense = spec.variant.dense();

  std::vector<LayerDesc> layers;
  int next_param = 0;
  std::size_t next_dilation = 0;

  // Appends the convs of one block (plus a transition when dense) and returns
  // the block's output channel count.
  auto block = [&](Stage stage, int in, std::initializer_list<int> outs) {
    int accumulated = in;
    int current = in;
    for (int out : outs) {
      const int conv_in = dense ? accumulated : current;
      layers.push_back({LayerKind::Conv, stage, conv_in, out, spec.kernel, dil[next_dilation++], next_param++});
      accumulated += out;
      current = out;
    }
    if (dense) {
      layers.push_back({LayerKind::Transition, stage, accumulated, current, 1, 1, next_param++});
    }
    return current;
  };

  int c = block(Stage::Down1, spec.in_channels, {w35, w70});
  const int skip1 = c;
  layers.push_back({LayerKind::MaxPool, Stage::Down1, c, c});
  c = block(Stage::Down2, c, {w70, w140});
  const int skip2 = c;
  layers.push_back({LayerKind::MaxPool, Stage::Down2, c, c});
  c = block(Stage::Bottleneck, c, {w70, w70});

  layers.push_back({LayerKind::Upsample, Stage::Up1, c, c});
  layers.push_back({LayerKind::Concat, Stage::Up1, c, c + skip2});
  c = block(Stage::Up1, c + skip2, {w140, w70});
  layers.push_back({LayerKind::Upsample, Stage::Up2, c, c});
  layers.push_back({LayerKind::Concat, Stage::Up2, c, c + skip1});
  c = block(Stage::Up2, c + skip1, {w70, w35});

  layers.push_back({LayerKind::Output, Stage::Head, c, spec.out_channels, spec.kernel, 1, next_param++});
  return layers;
}

std::int64_t param_count(const std::vector<LayerDesc>& layers)
{
  std::int64_t total = 0;
  for (const auto& l : layers) {
    if (l.param_index < 0) continue;
    total += static_cast<std::int64_t>(l.out_channels) *
             (static_cast<std::int64_t>(l.in_channels) * l.kernel * l.kernel + 1);
  }
  return total;
}

std::string architecture_summary(const std::vector<LayerDesc>& layers)
{
  std::ostringstream os;
  for (const auto& l : layers) {
    os << std::left << std::setw(11) << stage_name(l.stage) << std::setw(11) << layer_kind_name(l.kind)
       << std::right << std::setw(4) << l.in_channels << " -> " << std::left << std::setw(4) << l.out_channels;
    if (l.param_index >= 0) os << " k=" << l.kernel << " dilation=" << l.dilation;
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

template <typename Scalar>
PriorNet<Scalar>::PriorNet(UNetSpec spec, std::vector<LayerDesc> layers, std::vector<ConvParams<Scalar>> params)
    : spec_(std::move(spec)), layers_(std::move(layers)), params_(std::move(params))
{}

template <typename Scalar>
std::vector<Tensor<Scalar>> PriorNet<Scalar>::parameters() const
{
  std::vector<Tensor<Scalar>> out;
  out.reserve(2 * params_.size());
  for (const auto& p : params_) {
    out.push_back(p.weight);
    out.push_back(p.bias);
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> PriorNet<Scalar>::apply_conv(Tape<Scalar>& tape, const LayerDesc& layer, const Tensor<Scalar>& x) const
{
  const auto& p = params_.at(static_cast<std::size_t>(layer.param_index));
  auto y = conv2d(tape, x, p.weight, p.bias, layer.dilation);
  if (layer.kind == LayerKind::Output) return y;
  return leaky_relu(tape, y, static_cast<Scalar>(spec_.leaky_slope));
}

template <typename Scalar>
Tensor<Scalar> PriorNet<Scalar>::run_stage(Tape<Scalar>& tape, Stage stage, const Tensor<Scalar>& x) const
{
  std::vector<Tensor<Scalar>> features{x};
  Tensor<Scalar> current = x;
  for (const auto& layer : layers_) {
    if (layer.stage != stage) continue;
    if (layer.kind != LayerKind::Conv && layer.kind != LayerKind::Transition) continue;
    if (spec_.variant.dense()) {
      const Tensor<Scalar> input =
          features.size() == 1 ? features[0] : concat_channels<Scalar>(tape, std::span<const Tensor<Scalar>>(features));
      current = apply_conv(tape, layer, input);
      features.push_back(current);
    } else {
      current = apply_conv(tape, layer, current);
    }
  }
  return current;
}

template <typename Scalar>
Tensor<Scalar> PriorNet<Scalar>::forward(Tape<Scalar>& tape, const Tensor<Scalar>& z) const
{
  if (!z.defined() || z.rank() != 4 || z.dim(1) != spec_.in_channels)
    throw std::invalid_argument("PriorNet::forward: latent must be (N, " + std::to_string(spec_.in_channels) +
                                ", F, T)");
  if (z.dim(2) % 4 != 0 || z.dim(3) % 4 != 0)
    throw std::invalid_argument("PriorNet::forward: latent extents " + shape_string(z.shape()) +
                                " must be divisible by 4");

  std::vector<Tensor<Scalar>> skips;
  Tensor<Scalar> x = z;
  for (Stage s : {Stage::Down1, Stage::Down2}) {
    x = run_stage(tape, s, x);
    skips.push_back(x);
    x = maxpool2(tape, x);
  }
  x = run_stage(tape, Stage::Bottleneck, x);
  for (Stage s : {Stage::Up1, Stage::Up2}) {
    x = upsample_bilinear2(tape, x);
    x = concat_channels(tape, x, skips.back());
    skips.pop_back();
    x = run_stage(tape, s, x);
  }
  const auto head = std::find_if(layers_.begin(), layers_.end(),
                                 [](const LayerDesc& l) { return l.kind == LayerKind::Output; });
  return apply_conv(tape, *head, x);
}

template <typename Scalar>
PriorNet<Scalar> build_unet(const UNetSpec& spec, Rng& rng)
{
  auto layers = plan_unet(spec);
  std::vector<ConvParams<Scalar>> params;
  for (const auto& l : layers) {
    if (l.param_index < 0) continue;
    const Index fan_in = static_cast<Index>(l.in_channels) * l.kernel * l.kernel;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor<Scalar> weight({l.out_channels, l.in_channels, l.kernel, l.kernel}, true);
    for (Index i = 0; i < weight.size(); ++i) weight.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    Tensor<Scalar> bias({l.out_channels}, true);
    params.push_back({weight, bias});
  }
  return PriorNet<Scalar>(spec, std::move(layers), std::move(params));
}

template class PriorNet<float>;
template class PriorNet<double>;
template PriorNet<float> build_unet<float>(const UNetSpec&, Rng&);
template PriorNet<double> build_unet<double>(const UNetSpec&, Rng&);

} // namespace dap
