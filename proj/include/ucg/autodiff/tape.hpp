#ifndef UCG_AUTODIFF_TAPE_HPP
#define UCG_AUTODIFF_TAPE_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "ucg/autodiff/tensor.hpp"

namespace ucg::ad {

template <typename T>
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// tape is alive.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }

  const Shape& shape() const;
  const std::vector<T>& value() const;
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;
  T item() const;
  Tensor<T> tensor() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of operations. Nodes are appended in evaluation order, so
/// the record is already topologically sorted and backward is a single
/// reverse sweep.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    std::string_view op;
    Shape shape;
    std::vector<T> value;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value);

  /// Appends an operator output. requires_grad is inherited from the inputs;
  /// `backward` is dropped when no input needs a gradient.
  Var<T> record(std::string_view op, std::vector<std::size_t> inputs, Shape shape,
                std::vector<T> value, BackwardFn backward);

  /// Reverse sweep from a scalar loss. Gradients from a previous sweep are
  /// discarded, so one tape can be differentiated against several objectives.
  void backward(const Var<T>& loss);

  /// Gradient of the last backward sweep; zeros for unreachable nodes.
  Tensor<T> grad(const Var<T>& v) const;

  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  const std::vector<T>& value(std::size_t id) const { return nodes_[id].value; }
  std::span<const T> out_grad(std::size_t id) const { return grads_[id]; }

  /// Gradient accumulator of node `id`, or nullptr when it needs none.
  T* grad_sink(std::size_t id);

 private:
  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
};

extern template class Var<float>;
extern template class Var<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ucg::ad

#endif  // UCG_AUTODIFF_TAPE_HPP
