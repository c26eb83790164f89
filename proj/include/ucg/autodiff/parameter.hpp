#ifndef UCG_AUTODIFF_PARAMETER_HPP
#define UCG_AUTODIFF_PARAMETER_HPP

#include <string>

#include "ucg/autodiff/tensor.hpp"

namespace ucg::ad {

/// A named tensor owned by a model. Non-trainable entries are buffers such
/// as running normalization statistics.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
};

}  // namespace ucg::ad

#endif  // UCG_AUTODIFF_PARAMETER_HPP
