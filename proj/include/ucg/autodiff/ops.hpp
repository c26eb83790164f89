#ifndef UCG_AUTODIFF_OPS_HPP
#define UCG_AUTODIFF_OPS_HPP

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string_view>
#include <type_traits>
#include <vector>

#include "ucg/autodiff/tape.hpp"

namespace ucg::ad {

class UnknownOpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct OpInfo {
  std::string_view id;
  int arity;  // -1 for variadic
};

// The registry of differentiable operators networks may be built from.
// Registration rejects pooling by max, strided and transposed convolution.
class OpCatalog {
 public:
  static const OpCatalog& builtin();

  static bool is_forbidden(std::string_view id);

  void add(OpInfo info);
  bool contains(std::string_view id) const;
  const OpInfo& at(std::string_view id) const;
  std::span<const OpInfo> ops() const { return ops_; }

 private:
  std::vector<OpInfo> ops_;
};

struct OpAttrs {
  std::vector<int> axes;  // reductions; empty reduces everything
  bool keepdims = false;
  int axis = -1;          // concat, softmax
  Shape shape;            // reshape
  std::size_t window = 2;
  std::size_t stride = 1;
  bool same_padding = true;
  std::size_t factor = 2;  // upsample
};

/// Generic dispatch by operator id, used by catalog-driven code paths.
template <typename T>
Var<T> forward_op(std::string_view id, std::span<const Var<T>> inputs,
                  const OpAttrs& attrs = {});

// Binary elementwise operators broadcast numpy-style.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> atan2(const Var<T>& y, const Var<T>& x);

template <typename T> Var<T> abs(const Var<T>& x);
template <typename T> Var<T> exp(const Var<T>& x);
template <typename T> Var<T> log(const Var<T>& x);
template <typename T> Var<T> sqrt(const Var<T>& x);
template <typename T> Var<T> square(const Var<T>& x);
template <typename T> Var<T> elu(const Var<T>& x);  // alpha = 1
template <typename T> Var<T> tanh(const Var<T>& x);

/// [M, K] x [K, N] -> [M, N]
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// NHWC input, [kh, kw, Cin, Cout] kernel, zero "same" padding. Only
/// stride 1 exists.
template <typename T> Var<T> conv2d(const Var<T>& x, const Var<T>& w);

/// NHWC average pooling. With same padding the mean runs over the in-bounds
/// window only.
template <typename T>
Var<T> avg_pool(const Var<T>& x, std::size_t window, std::size_t stride, bool same_padding);

template <typename T> Var<T> upsample_nearest(const Var<T>& x, std::size_t factor);

/// Along the last axis.
template <typename T> Var<T> softmax(const Var<T>& x);

template <typename T> Var<T> sum(const Var<T>& x, std::vector<int> axes = {}, bool keepdims = false);
template <typename T> Var<T> mean(const Var<T>& x, std::vector<int> axes = {}, bool keepdims = false);
template <typename T> Var<T> min(const Var<T>& x, std::vector<int> axes = {}, bool keepdims = false);
template <typename T> Var<T> max(const Var<T>& x, std::vector<int> axes = {}, bool keepdims = false);

template <typename T> Var<T> concat(std::span<const Var<T>> parts, int axis);
template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> stop_gradient(const Var<T>& x);

// Scalar conveniences; the scalar is recorded as a constant node.
template <typename T> Var<T> scalar_like(const Var<T>& x, std::type_identity_t<T> value);

template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T> Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }
template <typename T> Var<T> operator+(const Var<T>& a, std::type_identity_t<T> b) { return add(a, scalar_like(a, b)); }
template <typename T> Var<T> operator-(const Var<T>& a, std::type_identity_t<T> b) { return sub(a, scalar_like(a, b)); }
template <typename T> Var<T> operator*(const Var<T>& a, std::type_identity_t<T> b) { return mul(a, scalar_like(a, b)); }
template <typename T> Var<T> operator/(const Var<T>& a, std::type_identity_t<T> b) { return div(a, scalar_like(a, b)); }
template <typename T> Var<T> operator*(std::type_identity_t<T> a, const Var<T>& b) { return mul(scalar_like(b, a), b); }
template <typename T> Var<T> operator+(std::type_identity_t<T> a, const Var<T>& b) { return add(scalar_like(b, a), b); }
template <typename T> Var<T> operator-(std::type_identity_t<T> a, const Var<T>& b) { return sub(scalar_like(b, a), b); }
template <typename T> Var<T> operator-(const Var<T>& a) { return mul(a, scalar_like(a, T(-1))); }

}  // namespace ucg::ad

#endif  // UCG_AUTODIFF_OPS_HPP
