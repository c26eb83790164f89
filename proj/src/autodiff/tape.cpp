#include "ucg/autodiff/tape.hpp"

#include <algorithm>
#include <string>

namespace ucg::ad {

template <typename T>
const Shape& Var<T>::shape() const {
  return tape_->node(id_).shape;
}

template <typename T>
const std::vector<T>& Var<T>::value() const {
  return tape_->node(id_).value;
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->node(id_).requires_grad;
}

template <typename T>
T Var<T>::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ShapeError("item() on non-scalar of shape " + to_string(shape()));
  return v.front();
}

template <typename T>
Tensor<T> Var<T>::tensor() const {
  return Tensor<T>(shape(), value());
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  if (!all_finite(value.data)) throw NonFiniteError("constant holds non-finite values");
  Node n;
  n.op = "constant";
  n.shape = std::move(value.shape);
  n.value = std::move(value.data);
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value) {
  auto v = constant(std::move(value));
  nodes_.back().op = "leaf";
  nodes_.back().requires_grad = true;
  return v;
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, std::vector<std::size_t> inputs, Shape shape,
                       std::vector<T> value, BackwardFn backward) {
  if (numel(shape) != value.size()) {
    throw ShapeError(std::string(op) + ": output shape " + to_string(shape) + " vs " +
                     std::to_string(value.size()) + " values");
  }
  if (!all_finite(value)) {
    throw NonFiniteError(std::string(op) + ": non-finite forward value");
  }
  Node n;
  n.op = op;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [&](std::size_t i) { return nodes_[i].requires_grad; });
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  grads_.emplace_back();
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
T* Tape<T>::grad_sink(std::size_t id) {
  if (!nodes_[id].requires_grad) return nullptr;
  auto& g = grads_[id];
  if (g.empty()) g.assign(nodes_[id].value.size(), T(0));
  return g.data();
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss.tape() != this) throw std::invalid_argument("loss belongs to another tape");
  const std::size_t root = loss.id();
  if (nodes_[root].value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + to_string(nodes_[root].shape));
  }
  for (auto& g : grads_) g.clear();
  if (!nodes_[root].requires_grad) return;
  grads_[root].assign(1, T(1));
  for (std::size_t i = root + 1; i-- > 0;) {
    if (grads_[i].empty()) continue;
    if (!all_finite(grads_[i])) {
      throw NonFiniteError(std::string(nodes_[i].op) + ": non-finite gradient");
    }
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

template <typename T>
Tensor<T> Tape<T>::grad(const Var<T>& v) const {
  const auto& n = nodes_[v.id()];
  if (grads_[v.id()].empty()) return Tensor<T>(n.shape, T(0));
  return Tensor<T>(n.shape, grads_[v.id()]);
}

template class Var<float>;
template class Var<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace ucg::ad
