#include "dap/optim.hpp"

#include <cmath>
#include <string>

namespace dap {

template <typename Scalar>
AdamState<Scalar>::AdamState(std::span<const Tensor<Scalar>> params, AdamOptions options)
    : options_(options)
{
  if (!(options.lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.push_back(Array::Zero(p.size()));
    v_.push_back(Array::Zero(p.size()));
  }
}

template <typename Scalar>
void AdamState<Scalar>::step(std::span<Tensor<Scalar>> params)
{
  if (params.size() != m_.size()) throw std::invalid_argument("adam: parameter list changed size");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != m_[i].size()) throw std::invalid_argument("adam: parameter shape changed");
    if (params[i].has_grad() && !params[i].grad().allFinite())
      throw NumericError("adam: non-finite gradient in parameter " + std::to_string(i));
  }

  ++t_;
  const Scalar b1 = static_cast<Scalar>(options_.beta1);
  const Scalar b2 = static_cast<Scalar>(options_.beta2);
  const Scalar lr = static_cast<Scalar>(options_.lr);
  const Scalar eps = static_cast<Scalar>(options_.eps);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(options_.beta1, static_cast<double>(t_)));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(options_.beta2, static_cast<double>(t_)));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.has_grad()) continue;
    const auto& g = p.grad();
    m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
    v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.square();
    p.data() -= lr * (m_[i] / c1) / ((v_[i] / c2).sqrt() + eps);
  }
}

template class AdamState<float>;
template class AdamState<double>;

} // namespace dap
