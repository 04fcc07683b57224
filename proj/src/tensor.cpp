#include "dap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dap {

Index shape_size(const Shape& shape)
{
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape)
{
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace {

template <typename Array>
void check_finite(const Array& values, const char* op)
{
  if (!values.allFinite()) throw NumericError(std::string(op) + ": non-finite value in output");
}

void require(bool ok, const std::string& msg)
{
  if (!ok) throw std::invalid_argument(msg);
}

template <typename Scalar>
void require_rank4(const Tensor<Scalar>& t, const char* op)
{
  require(t.defined() && t.rank() == 4, std::string(op) + ": expected a 4-D tensor");
}

template <typename Scalar>
bool any_requires_grad(std::initializer_list<const Tensor<Scalar>*> ts)
{
  return std::any_of(ts.begin(), ts.end(), [](const Tensor<Scalar>* t) { return t->requires_grad(); });
}

} // namespace

// ---------------------------------------------------------------------------
// Tensor

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, bool requires_grad)
    : node_(std::make_shared<Node>())
{
  node_->data = Array::Zero(shape_size(shape));
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Array data, bool requires_grad)
    : node_(std::make_shared<Node>())
{
  require(shape_size(shape) == data.size(),
          "tensor data length " + std::to_string(data.size()) + " does not match shape " + shape_string(shape));
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::constant(Shape shape, Scalar value, bool requires_grad)
{
  Tensor t(std::move(shape), requires_grad);
  t.data().setConstant(value);
  return t;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::scalar(Scalar value, bool requires_grad)
{
  return constant(Shape{}, value, requires_grad);
}

template <typename Scalar>
typename Tensor<Scalar>::Array& Tensor<Scalar>::grad() const
{
  if (!has_grad()) node_->grad = Array::Zero(node_->data.size());
  return node_->grad;
}

template <typename Scalar>
void Tensor<Scalar>::zero_grad() const
{
  grad().setZero();
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const
{
  require(size() == 1, "item(): tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->data[0];
}

template <typename Scalar>
Scalar& Tensor<Scalar>::at(Index n, Index c, Index h, Index w)
{
  const auto& s = node_->shape;
  return node_->data[((n * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename Scalar>
Scalar Tensor<Scalar>::at(Index n, Index c, Index h, Index w) const
{
  const auto& s = node_->shape;
  return node_->data[((n * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detached() const
{
  return Tensor(shape(), data(), false);
}

// ---------------------------------------------------------------------------
// Tape

template <typename Scalar>
void Tape<Scalar>::record(std::vector<TensorT> inputs, TensorT output, std::function<void()> backward)
{
  entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(backward)});
}

template <typename Scalar>
void Tape<Scalar>::backward(const TensorT& loss)
{
  if (!loss.defined() || loss.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar tensor");

  for (auto& e : entries_) e.output.zero_grad();
  for (auto& e : entries_)
    for (auto& in : e.inputs)
      if (in.requires_grad()) in.grad();

  if (!loss.requires_grad()) return;
  TensorT seed = loss;
  seed.grad()[0] += Scalar(1);

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry
{
  Index channels_in;
  Index channels_out;
  Index height;
  Index width;
  Index kernel;
  Index dilation;

  Index rows() const { return channels_in * kernel * kernel; }
  Index half() const { return (kernel - 1) / 2; }
  // Rows of output processed per GEMM tile; bounds the im2col buffer.
  Index tile_rows() const
  {
    constexpr Index budget = Index(1) << 22;
    return std::clamp<Index>(budget / std::max<Index>(1, rows() * width), 1, height);
  }
};

// Fills col(r, p) for output rows [y0, y1) of one image; r = (c, i, j).
template <typename Scalar>
void im2col(const Scalar* image, const ConvGeometry& g, Index y0, Index y1, RowMatrix<Scalar>& col)
{
  const Index W = g.width;
  const Index H = g.height;
  col.resize(g.rows(), (y1 - y0) * W);
  col.setZero();
  for (Index c = 0; c < g.channels_in; ++c) {
    const Scalar* plane = image + c * H * W;
    for (Index i = 0; i < g.kernel; ++i) {
      const Index dy = g.dilation * (i - g.half());
      for (Index j = 0; j < g.kernel; ++j) {
        const Index dx = g.dilation * (j - g.half());
        const Index r = (c * g.kernel + i) * g.kernel + j;
        const Index x_lo = std::max<Index>(0, -dx);
        const Index x_hi = std::min<Index>(W, W - dx);
        if (x_lo >= x_hi) continue;
        Scalar* dst = col.row(r).data();
        for (Index y = y0; y < y1; ++y) {
          const Index yy = y + dy;
          if (yy < 0 || yy >= H) continue;
          const Scalar* src = plane + yy * W + dx;
          Scalar* out = dst + (y - y0) * W;
          std::copy(src + x_lo, src + x_hi, out + x_lo);
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates col back into the image gradient.
template <typename Scalar>
void col2im(const RowMatrix<Scalar>& col, const ConvGeometry& g, Index y0, Index y1, Scalar* image_grad)
{
  const Index W = g.width;
  const Index H = g.height;
  for (Index c = 0; c < g.channels_in; ++c) {
    Scalar* plane = image_grad + c * H * W;
    for (Index i = 0; i < g.kernel; ++i) {
      const Index dy = g.dilation * (i - g.half());
      for (Index j = 0; j < g.kernel; ++j) {
        const Index dx = g.dilation * (j - g.half());
        const Index r = (c * g.kernel + i) * g.kernel + j;
        const Index x_lo = std::max<Index>(0, -dx);
        const Index x_hi = std::min<Index>(W, W - dx);
        if (x_lo >= x_hi) continue;
        const Scalar* src_row = col.row(r).data();
        for (Index y = y0; y < y1; ++y) {
          const Index yy = y + dy;
          if (yy < 0 || yy >= H) continue;
          Scalar* dst = plane + yy * W + dx;
          const Scalar* src = src_row + (y - y0) * W;
          for (Index x = x_lo; x < x_hi; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

} // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(Tape<Scalar>& tape, const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, int dilation)
{
  require_rank4(input, "conv2d input");
  require_rank4(weight, "conv2d weight");
  require(bias.defined() && bias.rank() == 1, "conv2d: bias must be 1-D");
  const Index N = input.dim(0);
  const ConvGeometry g{input.dim(1), weight.dim(0), input.dim(2), input.dim(3), weight.dim(2), dilation};
  require(weight.dim(1) == g.channels_in,
          "conv2d: channel mismatch, input has " + std::to_string(g.channels_in) + " channels, weight expects " +
              std::to_string(weight.dim(1)));
  require(weight.dim(2) == weight.dim(3), "conv2d: kernel must be square");
  require(g.kernel % 2 == 1, "conv2d: kernel size must be odd");
  require(dilation >= 1, "conv2d: dilation must be >= 1");
  require(bias.dim(0) == g.channels_out, "conv2d: bias length must equal output channels");

  const Index HW = g.height * g.width;
  const bool track = any_requires_grad<Scalar>({&input, &weight, &bias});
  Tensor<Scalar> out({N, g.channels_out, g.height, g.width}, track);

  using Map = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMap = Eigen::Map<const RowMatrix<Scalar>>;
  using ConstVec = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
  const ConstMap wmat(weight.data().data(), g.channels_out, g.rows());
  const ConstVec bvec(bias.data().data(), g.channels_out);
  const Index tile = g.tile_rows();

  RowMatrix<Scalar> col;
  for (Index n = 0; n < N; ++n) {
    const Scalar* image = input.data().data() + n * g.channels_in * HW;
    Map omat(out.data().data() + n * g.channels_out * HW, g.channels_out, HW);
    for (Index y0 = 0; y0 < g.height; y0 += tile) {
      const Index y1 = std::min(g.height, y0 + tile);
      im2col(image, g, y0, y1, col);
      auto block = omat.middleCols(y0 * g.width, (y1 - y0) * g.width);
      block.noalias() = wmat * col;
      block.colwise() += bvec;
    }
  }
  check_finite(out.data(), "conv2d");

  if (track) {
    tape.record({input, weight, bias}, out, [input, weight, bias, out, g, N, tile]() mutable {
      const Index HW = g.height * g.width;
      const Eigen::Map<const RowMatrix<Scalar>> wmat(weight.data().data(), g.channels_out, g.rows());
      RowMatrix<Scalar> col;
      RowMatrix<Scalar> dcol;
      RowMatrix<Scalar> dw;
      if (weight.requires_grad()) dw = RowMatrix<Scalar>::Zero(g.channels_out, g.rows());
      for (Index n = 0; n < N; ++n) {
        const Scalar* image = input.data().data() + n * g.channels_in * HW;
        const Eigen::Map<const RowMatrix<Scalar>> gout(out.grad().data() + n * g.channels_out * HW,
                                                       g.channels_out, HW);
        if (bias.requires_grad()) bias.grad() += gout.rowwise().sum().array();
        for (Index y0 = 0; y0 < g.height; y0 += tile) {
          const Index y1 = std::min(g.height, y0 + tile);
          const auto gblock = gout.middleCols(y0 * g.width, (y1 - y0) * g.width);
          if (weight.requires_grad()) {
            im2col(image, g, y0, y1, col);
            dw.noalias() += gblock * col.transpose();
          }
          if (input.requires_grad()) {
            dcol.noalias() = wmat.transpose() * gblock;
            col2im(dcol, g, y0, y1, input.grad().data() + n * g.channels_in * HW);
          }
        }
      }
      if (weight.requires_grad())
        weight.grad() += Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(dw.data(), dw.size());
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// maxpool2

template <typename Scalar>
Tensor<Scalar> maxpool2(Tape<Scalar>& tape, const Tensor<Scalar>& input)
{
  require_rank4(input, "maxpool2");
  const Index N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  require(H % 2 == 0 && W % 2 == 0, "maxpool2: spatial extents must be even, got " + shape_string(input.shape()));
  const Index Ho = H / 2, Wo = W / 2;
  Tensor<Scalar> out({N, C, Ho, Wo}, input.requires_grad());
  auto argmax = std::make_shared<std::vector<Index>>(out.size());
  const Scalar* src = input.data().data();
  Scalar* dst = out.data().data();
  Index o = 0;
  for (Index plane = 0; plane < N * C; ++plane) {
    const Index base = plane * H * W;
    for (Index y = 0; y < Ho; ++y) {
      for (Index x = 0; x < Wo; ++x, ++o) {
        const Index cand[4] = {base + (2 * y) * W + 2 * x, base + (2 * y) * W + 2 * x + 1,
                               base + (2 * y + 1) * W + 2 * x, base + (2 * y + 1) * W + 2 * x + 1};
        Index best = cand[0];
        for (int k = 1; k < 4; ++k)
          if (src[cand[k]] > src[best]) best = cand[k];
        (*argmax)[o] = best;
        dst[o] = src[best];
      }
    }
  }
  check_finite(out.data(), "maxpool2");
  if (out.requires_grad()) {
    tape.record({input}, out, [input, out, argmax]() mutable {
      auto& gin = input.grad();
      const auto& gout = out.grad();
      for (Index i = 0; i < gout.size(); ++i) gin[(*argmax)[i]] += gout[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// upsample_bilinear2

namespace {

struct LerpTap
{
  Index lo;
  Index hi;
  double frac;
};

// Half-pixel-centre source coordinates for a x2 upsampling of `extent`.
std::vector<LerpTap> upsample_taps(Index extent)
{
  std::vector<LerpTap> taps(static_cast<std::size_t>(2 * extent));
  for (Index o = 0; o < 2 * extent; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(extent - 1));
    const Index lo = static_cast<Index>(std::floor(src));
    const Index hi = std::min(lo + 1, extent - 1);
    taps[static_cast<std::size_t>(o)] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

} // namespace

template <typename Scalar>
Tensor<Scalar> upsample_bilinear2(Tape<Scalar>& tape, const Tensor<Scalar>& input)
{
  require_rank4(input, "upsample_bilinear2");
  const Index N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  require(H >= 1 && W >= 1, "upsample_bilinear2: empty spatial extent");
  const Index Ho = 2 * H, Wo = 2 * W;
  const auto ty = upsample_taps(H);
  const auto tx = upsample_taps(W);
  Tensor<Scalar> out({N, C, Ho, Wo}, input.requires_grad());
  const Scalar* src = input.data().data();
  Scalar* dst = out.data().data();
  for (Index plane = 0; plane < N * C; ++plane) {
    const Scalar* s = src + plane * H * W;
    Scalar* d = dst + plane * Ho * Wo;
    for (Index y = 0; y < Ho; ++y) {
      const auto& a = ty[static_cast<std::size_t>(y)];
      const Scalar wy = static_cast<Scalar>(a.frac);
      for (Index x = 0; x < Wo; ++x) {
        const auto& b = tx[static_cast<std::size_t>(x)];
        const Scalar wx = static_cast<Scalar>(b.frac);
        const Scalar top = (Scalar(1) - wx) * s[a.lo * W + b.lo] + wx * s[a.lo * W + b.hi];
        const Scalar bot = (Scalar(1) - wx) * s[a.hi * W + b.lo] + wx * s[a.hi * W + b.hi];
        d[y * Wo + x] = (Scalar(1) - wy) * top + wy * bot;
      }
    }
  }
  check_finite(out.data(), "upsample_bilinear2");
  if (out.requires_grad()) {
    tape.record({input}, out, [input, out, ty, tx, N, C, H, W]() mutable {
      const Index Ho = 2 * H, Wo = 2 * W;
      Scalar* gin = input.grad().data();
      const Scalar* gout = out.grad().data();
      for (Index plane = 0; plane < N * C; ++plane) {
        Scalar* gi = gin + plane * H * W;
        const Scalar* go = gout + plane * Ho * Wo;
        for (Index y = 0; y < Ho; ++y) {
          const auto& a = ty[static_cast<std::size_t>(y)];
          const Scalar wy = static_cast<Scalar>(a.frac);
          for (Index x = 0; x < Wo; ++x) {
            const auto& b = tx[static_cast<std::size_t>(x)];
            const Scalar wx = static_cast<Scalar>(b.frac);
            const Scalar g = go[y * Wo + x];
            gi[a.lo * W + b.lo] += (Scalar(1) - wy) * (Scalar(1) - wx) * g;
            gi[a.lo * W + b.hi] += (Scalar(1) - wy) * wx * g;
            gi[a.hi * W + b.lo] += wy * (Scalar(1) - wx) * g;
            gi[a.hi * W + b.hi] += wy * wx * g;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// channel plumbing

template <typename Scalar>
Tensor<Scalar> concat_channels(Tape<Scalar>& tape, std::span<const Tensor<Scalar>> parts)
{
  require(!parts.empty(), "concat_channels: no inputs");
  for (const auto& p : parts) require_rank4(p, "concat_channels");
  const Index N = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3);
  Index C = 0;
  bool track = false;
  for (const auto& p : parts) {
    require(p.dim(0) == N && p.dim(2) == H && p.dim(3) == W,
            "concat_channels: spatial mismatch " + shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    C += p.dim(1);
    track = track || p.requires_grad();
  }
  const Index HW = H * W;
  Tensor<Scalar> out({N, C, H, W}, track);
  for (Index n = 0; n < N; ++n) {
    Index offset = 0;
    for (const auto& p : parts) {
      const Index len = p.dim(1) * HW;
      out.data().segment((n * C + offset) * HW, len) = p.data().segment(n * len, len);
      offset += p.dim(1);
    }
  }
  if (track) {
    std::vector<Tensor<Scalar>> inputs(parts.begin(), parts.end());
    tape.record(inputs, out, [inputs, out, N, C, HW]() mutable {
      for (Index n = 0; n < N; ++n) {
        Index offset = 0;
        for (auto& p : inputs) {
          const Index len = p.dim(1) * HW;
          if (p.requires_grad()) p.grad().segment(n * len, len) += out.grad().segment((n * C + offset) * HW, len);
          offset += p.dim(1);
        }
      }
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
  const Tensor<Scalar> parts[2] = {a, b};
  return concat_channels<Scalar>(tape, std::span<const Tensor<Scalar>>(parts));
}

template <typename Scalar>
Tensor<Scalar> slice_channels(Tape<Scalar>& tape, const Tensor<Scalar>& input, Index begin, Index count)
{
  require_rank4(input, "slice_channels");
  const Index N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  require(begin >= 0 && count >= 1 && begin + count <= C, "slice_channels: channel range out of bounds");
  Tensor<Scalar> out({N, count, input.dim(2), input.dim(3)}, input.requires_grad());
  for (Index n = 0; n < N; ++n)
    out.data().segment(n * count * HW, count * HW) = input.data().segment((n * C + begin) * HW, count * HW);
  if (out.requires_grad()) {
    tape.record({input}, out, [input, out, N, C, HW, begin, count]() mutable {
      for (Index n = 0; n < N; ++n)
        input.grad().segment((n * C + begin) * HW, count * HW) += out.grad().segment(n * count * HW, count * HW);
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> repeat_channels(Tape<Scalar>& tape, const Tensor<Scalar>& input, Index copies)
{
  require_rank4(input, "repeat_channels");
  require(input.dim(1) == 1, "repeat_channels: input must have a single channel");
  require(copies >= 1, "repeat_channels: copies must be >= 1");
  const Index N = input.dim(0), HW = input.dim(2) * input.dim(3);
  Tensor<Scalar> out({N, copies, input.dim(2), input.dim(3)}, input.requires_grad());
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < copies; ++c) out.data().segment((n * copies + c) * HW, HW) = input.data().segment(n * HW, HW);
  if (out.requires_grad()) {
    tape.record({input}, out, [input, out, N, HW, copies]() mutable {
      for (Index n = 0; n < N; ++n)
        for (Index c = 0; c < copies; ++c)
          input.grad().segment(n * HW, HW) += out.grad().segment((n * copies + c) * HW, HW);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise

template <typename Scalar>
Tensor<Scalar> leaky_relu(Tape<Scalar>& tape, const Tensor<Scalar>& input, Scalar slope)
{
  require(slope >= Scalar(0) && slope < Scalar(1), "leaky_relu: slope must lie in [0, 1)");
  Tensor<Scalar> out(input.shape(), input.requires_grad());
  out.data() = (input.data() >= Scalar(0)).select(input.data(), slope * input.data());
  check_finite(out.data(), "leaky_relu");
  if (out.requires_grad()) {
    tape.record({input}, out, [input, out, slope]() mutable {
      input.grad() += (input.data() >= Scalar(0)).select(out.grad(), slope * out.grad());
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sigmoid(Tape<Scalar>& tape, const Tensor<Scalar>& input)
{
  Tensor<Scalar> out(input.shape(), input.requires_grad());
  out.data() = Scalar(1) / (Scalar(1) + (-input.data()).exp());
  check_finite(out.data(), "sigmoid");
  if (out.requires_grad()) {
    tape.record({input}, out, [input, out]() mutable {
      input.grad() += out.grad() * out.data() * (Scalar(1) - out.data());
    });
  }
  return out;
}

namespace {

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op)
{
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

} // namespace

template <typename Scalar>
Tensor<Scalar> add(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
  require_same_shape(a, b, "add");
  Tensor<Scalar> out(a.shape(), a.data() + b.data(), a.requires_grad() || b.requires_grad());
  check_finite(out.data(), "add");
  if (out.requires_grad()) {
    tape.record({a, b}, out, [a, b, out]() mutable {
      if (a.requires_grad()) a.grad() += out.grad();
      if (b.requires_grad()) b.grad() += out.grad();
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sub(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
  require_same_shape(a, b, "sub");
  Tensor<Scalar> out(a.shape(), a.data() - b.data(), a.requires_grad() || b.requires_grad());
  check_finite(out.data(), "sub");
  if (out.requires_grad()) {
    tape.record({a, b}, out, [a, b, out]() mutable {
      if (a.requires_grad()) a.grad() += out.grad();
      if (b.requires_grad()) b.grad() -= out.grad();
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> mul(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
  require_same_shape(a, b, "mul");
  Tensor<Scalar> out(a.shape(), a.data() * b.data(), a.requires_grad() || b.requires_grad());
  check_finite(out.data(), "mul");
  if (out.requires_grad()) {
    tape.record({a, b}, out, [a, b, out]() mutable {
      if (a.requires_grad()) a.grad() += out.grad() * b.data();
      if (b.requires_grad()) b.grad() += out.grad() * a.data();
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> affine(Tape<Scalar>& tape, const Tensor<Scalar>& input, Scalar alpha, Scalar beta)
{
  Tensor<Scalar> out(input.shape(), alpha * input.data() + beta, input.requires_grad());
  check_finite(out.data(), "affine");
  if (out.requires_grad()) {
    tape.record({input}, out, [input, out, alpha]() mutable { input.grad() += alpha * out.grad(); });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> complex_magnitude(Tape<Scalar>& tape, const Tensor<Scalar>& input)
{
  require_rank4(input, "complex_magnitude");
  require(input.dim(1) == 2, "complex_magnitude: expected 2 channels (real, imaginary)");
  const Index N = input.dim(0), HW = input.dim(2) * input.dim(3);
  Tensor<Scalar> out({N, 1, input.dim(2), input.dim(3)}, input.requires_grad());
  for (Index n = 0; n < N; ++n) {
    const auto re = input.data().segment(2 * n * HW, HW);
    const auto im = input.data().segment((2 * n + 1) * HW, HW);
    out.data().segment(n * HW, HW) = (re.square() + im.square()).sqrt();
  }
  check_finite(out.data(), "complex_magnitude");
  if (out.requires_grad()) {
    tape.record({input}, out, [input, out, N, HW]() mutable {
      for (Index n = 0; n < N; ++n) {
        const auto mag = out.data().segment(n * HW, HW);
        const auto g = out.grad().segment(n * HW, HW);
        const auto re = input.data().segment(2 * n * HW, HW);
        const auto im = input.data().segment((2 * n + 1) * HW, HW);
        // Subgradient 0 at the origin.
        const auto scale = (mag > Scalar(0)).select(g / mag, Scalar(0));
        input.grad().segment(2 * n * HW, HW) += scale * re;
        input.grad().segment((2 * n + 1) * HW, HW) += scale * im;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions and losses

template <typename Scalar>
Tensor<Scalar> mean(Tape<Scalar>& tape, const Tensor<Scalar>& input)
{
  require(input.size() > 0, "mean: empty tensor");
  const double total = input.data().template cast<double>().sum();
  auto out = Tensor<Scalar>::scalar(static_cast<Scalar>(total / static_cast<double>(input.size())),
                                    input.requires_grad());
  check_finite(out.data(), "mean");
  if (out.requires_grad()) {
    tape.record({input}, out, [input, out]() mutable {
      input.grad() += out.grad()[0] / static_cast<Scalar>(input.size());
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> mse(Tape<Scalar>& tape, const Tensor<Scalar>& pred, const Tensor<Scalar>& target)
{
  require_same_shape(pred, target, "mse");
  require(pred.size() > 0, "mse: empty tensor");
  const double count = static_cast<double>(pred.size());
  const double total = (pred.data() - target.data()).template cast<double>().square().sum();
  auto out = Tensor<Scalar>::scalar(static_cast<Scalar>(total / count), pred.requires_grad() || target.requires_grad());
  check_finite(out.data(), "mse");
  if (out.requires_grad()) {
    tape.record({pred, target}, out, [pred, target, out]() mutable {
      const Scalar scale = Scalar(2) * out.grad()[0] / static_cast<Scalar>(pred.size());
      if (pred.requires_grad()) pred.grad() += scale * (pred.data() - target.data());
      if (target.requires_grad()) target.grad() -= scale * (pred.data() - target.data());
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> masked_mse(Tape<Scalar>& tape, const Tensor<Scalar>& pred, const Tensor<Scalar>& target,
                          const Tensor<Scalar>& mask)
{
  require_same_shape(pred, target, "masked_mse");
  require_same_shape(pred, mask, "masked_mse");
  require(pred.size() > 0, "masked_mse: empty tensor");
  require(((mask.data() == Scalar(0)) || (mask.data() == Scalar(1))).all(), "masked_mse: mask must be binary");
  const double count = static_cast<double>(pred.size());
  const double total =
      (mask.data().template cast<double>() * (pred.data() - target.data()).template cast<double>().square()).sum();
  auto out = Tensor<Scalar>::scalar(static_cast<Scalar>(total / count), pred.requires_grad() || target.requires_grad());
  check_finite(out.data(), "masked_mse");
  if (out.requires_grad()) {
    tape.record({pred, target, mask}, out, [pred, target, mask, out]() mutable {
      const Scalar scale = Scalar(2) * out.grad()[0] / static_cast<Scalar>(pred.size());
      if (pred.requires_grad()) pred.grad() += scale * mask.data() * (pred.data() - target.data());
      if (target.requires_grad()) target.grad() -= scale * mask.data() * (pred.data() - target.data());
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

#define DAP_INSTANTIATE_TENSOR(T)                                                                              \
  template class Tensor<T>;                                                                                    \
  template class Tape<T>;                                                                                      \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);              \
  template Tensor<T> maxpool2(Tape<T>&, const Tensor<T>&);                                                     \
  template Tensor<T> upsample_bilinear2(Tape<T>&, const Tensor<T>&);                                           \
  template Tensor<T> concat_channels(Tape<T>&, std::span<const Tensor<T>>);                                    \
  template Tensor<T> concat_channels(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> slice_channels(Tape<T>&, const Tensor<T>&, Index, Index);                                 \
  template Tensor<T> repeat_channels(Tape<T>&, const Tensor<T>&, Index);                                       \
  template Tensor<T> leaky_relu(Tape<T>&, const Tensor<T>&, T);                                                \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                                      \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> affine(Tape<T>&, const Tensor<T>&, T, T);                                                 \
  template Tensor<T> complex_magnitude(Tape<T>&, const Tensor<T>&);                                            \
  template Tensor<T> mean(Tape<T>&, const Tensor<T>&);                                                         \
  template Tensor<T> mse(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> masked_mse(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

DAP_INSTANTIATE_TENSOR(float)
DAP_INSTANTIATE_TENSOR(double)

#undef DAP_INSTANTIATE_TENSOR

} // namespace dap
