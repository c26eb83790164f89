#include "ucg/autodiff/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ucg::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor rank must be at least 1");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape s, T fill) : shape(std::move(s)) {
  check_extents(shape);
  data.assign(numel(shape), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
  check_extents(shape);
  if (numel(shape) != data.size()) {
    throw ShapeError("shape " + to_string(shape) + " does not hold " +
                     std::to_string(data.size()) + " values");
  }
}

template <typename T>
T Tensor<T>::item() const {
  if (data.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape));
  return data.front();
}

template <typename T>
bool all_finite(const std::vector<T>& values) {
  for (T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template struct Tensor<float>;
template struct Tensor<double>;
template bool all_finite(const std::vector<float>&);
template bool all_finite(const std::vector<double>&);

}  // namespace ucg::ad
