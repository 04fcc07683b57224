#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dap {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

/// Raised when a forward or backward computation produces NaN/Inf.
class NumericError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array taking part in a reverse-mode graph.
///
/// A Tensor is a handle: copies share storage, so a tape can hold on to the
/// operands of an operation after the caller's handles go out of scope.
/// Layout for 4-D tensors is batch x channel x height(frequency) x width(time).
template <typename Scalar>
class Tensor
{
public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, Array data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false) { return Tensor(std::move(shape), requires_grad); }
  static Tensor constant(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  Index size() const { return node_->data.size(); }

  Array& data() { return node_->data; }
  const Array& data() const { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  /// Gradient accumulator, allocated as zeros on first access. It is shared
  /// by all handles and is not part of the tensor's value, hence const.
  Array& grad() const;
  void zero_grad() const;
  void clear_grad() const { node_->grad.resize(0); }

  Scalar item() const;
  Scalar& at(Index n, Index c, Index h, Index w);
  Scalar at(Index n, Index c, Index h, Index w) const;

  /// Deep copy with no gradient and requires_grad = false.
  Tensor detached() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
  struct Node
  {
    Shape shape;
    Array data;
    Array grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Node> node_;
};

/// Ordered record of executed operations and their backward rules.
///
/// Operations are appended in execution order, so the record is always
/// topologically sorted; backward() walks it once in reverse.
template <typename Scalar>
class Tape
{
public:
  using TensorT = Tensor<Scalar>;

  void record(std::vector<TensorT> inputs, TensorT output, std::function<void()> backward);

  /// Populates grad of every requires_grad tensor reachable from the tape.
  /// Leaf gradients accumulate; intermediate gradients are reset first.
  void backward(const TensorT& loss);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

private:
  struct Entry
  {
    std::vector<TensorT> inputs;
    TensorT output;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
};

// Differentiable operations. Each records itself on the tape when any input
// requires a gradient; the output requires a gradient iff some input does.

template <typename Scalar>
Tensor<Scalar> conv2d(Tape<Scalar>& tape, const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, int dilation);

template <typename Scalar>
Tensor<Scalar> maxpool2(Tape<Scalar>& tape, const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> upsample_bilinear2(Tape<Scalar>& tape, const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> concat_channels(Tape<Scalar>& tape, std::span<const Tensor<Scalar>> parts);

template <typename Scalar>
Tensor<Scalar> concat_channels(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> slice_channels(Tape<Scalar>& tape, const Tensor<Scalar>& input, Index begin, Index count);

/// Repeats a single-channel tensor along the channel axis.
template <typename Scalar>
Tensor<Scalar> repeat_channels(Tape<Scalar>& tape, const Tensor<Scalar>& input, Index copies);

template <typename Scalar>
Tensor<Scalar> leaky_relu(Tape<Scalar>& tape, const Tensor<Scalar>& input, Scalar slope);

template <typename Scalar>
Tensor<Scalar> sigmoid(Tape<Scalar>& tape, const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> add(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> sub(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> mul(Tape<Scalar>& tape, const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// alpha * x + beta, elementwise.
template <typename Scalar>
Tensor<Scalar> affine(Tape<Scalar>& tape, const Tensor<Scalar>& input, Scalar alpha, Scalar beta);

/// Per-bin magnitude of a (N, 2, H, W) real/imaginary pair: (N, 1, H, W).
template <typename Scalar>
Tensor<Scalar> complex_magnitude(Tape<Scalar>& tape, const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> mean(Tape<Scalar>& tape, const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> mse(Tape<Scalar>& tape, const Tensor<Scalar>& pred, const Tensor<Scalar>& target);

/// Mean over all elements of mask * (pred - target)^2.
template <typename Scalar>
Tensor<Scalar> masked_mse(Tape<Scalar>& tape, const Tensor<Scalar>& pred, const Tensor<Scalar>& target,
                          const Tensor<Scalar>& mask);

template <typename Scalar>
void backward(Tape<Scalar>& tape, const Tensor<Scalar>& loss)
{
  tape.backward(loss);
}

} // namespace dap
