#include "ucg/autodiff/adam.hpp"

#include <cmath>
#include <string>

namespace ucg::ad {

template <typename T>
AdamState<T>::AdamState(AdamConfig config) : config_(config) {}

template <typename T>
double AdamState<T>::learning_rate() const {
  return config_.learning_rate *
         std::pow(config_.decay_rate, static_cast<double>(step_) / config_.decay_steps);
}

template <typename T>
void AdamState<T>::apply(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape != grads[i].shape) {
      throw ShapeError("adam: gradient " + to_string(grads[i].shape) + " for parameter " +
                       to_string(params[i]->shape));
    }
    if (!all_finite(grads[i].data)) throw NonFiniteError("adam: non-finite gradient");
  }
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.emplace_back(p->shape, T(0));
      v_.emplace_back(p->shape, T(0));
    }
  } else if (m_.size() != params.size()) {
    throw ShapeError("adam: parameter count changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (m_[i].shape != params[i]->shape) throw ShapeError("adam: parameter shape changed between steps");
  }

  const double lr = learning_rate();
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const double b1 = config_.beta1, b2 = config_.beta2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i]->data;
    auto& m = m_[i].data;
    auto& v = v_[i].data;
    const auto& g = grads[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = lr * (mj / c1) / (std::sqrt(vj / c2) + config_.epsilon);
      p[j] = static_cast<T>(p[j] - update);
    }
  }
}

template class AdamState<float>;
template class AdamState<double>;

}  // namespace ucg::ad
