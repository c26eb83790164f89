#ifndef UCG_AUTODIFF_ADAM_HPP
#define UCG_AUTODIFF_ADAM_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "ucg/autodiff/tensor.hpp"

namespace ucg::ad {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // lr_t = learning_rate * decay_rate^(t / decay_steps), t = completed steps
  double decay_rate = 0.96;
  double decay_steps = 1000.0;
};

template <typename T>
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig config);

  const AdamConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }
  /// Rate the next update will use.
  double learning_rate() const;

  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

  /// Bias-corrected Adam update. Moments are allocated on the first call and
  /// pinned to the parameter shapes seen then.
  void apply(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

template <typename T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>* const> params,
               std::span<const Tensor<T>> grads) {
  state.apply(params, grads);
}

extern template class AdamState<float>;
extern template class AdamState<double>;

}  // namespace ucg::ad

#endif  // UCG_AUTODIFF_ADAM_HPP
