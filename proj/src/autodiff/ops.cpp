#include "ucg/autodiff/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace ucg::ad {

namespace {

template <typename T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("operation on an empty Var");
  if (a.tape() != b.tape()) throw std::invalid_argument("operands live on different tapes");
  return *a.tape();
}

template <typename T>
Tape<T>& tape_of(const Var<T>& a) {
  if (!a.valid()) throw std::invalid_argument("operation on an empty Var");
  return *a.tape();
}

// Index map from an output element to an operand element under numpy
// broadcasting. Identity, scalar and trailing-suffix layouts avoid the
// materialized table.
class BroadcastIndex {
 public:
  BroadcastIndex(const Shape& operand, const Shape& out) {
    const std::size_t n = numel(operand);
    Shape padded(out.size() - operand.size(), 1);
    padded.insert(padded.end(), operand.begin(), operand.end());
    if (padded == out) {
      kind_ = Kind::identity;
      return;
    }
    if (n == 1) {
      kind_ = Kind::scalar;
      return;
    }
    std::size_t lead = 0;
    while (lead < padded.size() && padded[lead] == 1) ++lead;
    if (std::equal(padded.begin() + lead, padded.end(), out.begin() + lead)) {
      kind_ = Kind::suffix;
      modulus_ = n;
      return;
    }
    kind_ = Kind::table;
    std::vector<std::size_t> stride(padded.size(), 0);
    std::size_t s = 1;
    for (std::size_t d = padded.size(); d-- > 0;) {
      stride[d] = padded[d] == 1 ? 0 : s;
      s *= padded[d];
    }
    const std::size_t total = numel(out);
    table_.resize(total);
    std::vector<std::size_t> idx(out.size(), 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < total; ++i) {
      table_[i] = off;
      for (std::size_t d = out.size(); d-- > 0;) {
        ++idx[d];
        off += stride[d];
        if (idx[d] < out[d]) break;
        off -= stride[d] * idx[d];
        idx[d] = 0;
      }
    }
  }

  std::size_t operator()(std::size_t i) const {
    switch (kind_) {
      case Kind::identity: return i;
      case Kind::scalar: return 0;
      case Kind::suffix: return i % modulus_;
      case Kind::table: return table_[i];
    }
    return 0;
  }

 private:
  enum class Kind { identity, scalar, suffix, table };
  Kind kind_ = Kind::identity;
  std::size_t modulus_ = 1;
  std::vector<std::size_t> table_;
};

Shape broadcast_shape(std::string_view op, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t ea = d + a.size() >= rank ? a[d + a.size() - rank] : 1;
    const std::size_t eb = d + b.size() >= rank ? b[d + b.size() - rank] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " +
                       to_string(b));
    }
    out[d] = std::max(ea, eb);
  }
  return out;
}

// f(a, b) -> out; da/db(a, b, out) -> partial derivative.
template <typename T, typename F, typename DA, typename DB>
Var<T> binary(std::string_view op, const Var<T>& a, const Var<T>& b, F f, DA da, DB db) {
  Tape<T>& tape = same_tape(a, b);
  Shape out_shape = broadcast_shape(op, a.shape(), b.shape());
  auto ia = std::make_shared<BroadcastIndex>(a.shape(), out_shape);
  auto ib = std::make_shared<BroadcastIndex>(b.shape(), out_shape);
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t n = numel(out_shape);
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[(*ia)(i)], bv[(*ib)(i)]);
  const std::size_t ida = a.id(), idb = b.id();
  return tape.record(op, {ida, idb}, std::move(out_shape), std::move(out),
                     [ida, idb, ia, ib, da, db](Tape<T>& t, std::size_t self) {
                       const auto g = t.out_grad(self);
                       const auto& x = t.value(ida);
                       const auto& y = t.value(idb);
                       const auto& o = t.value(self);
                       if (T* ga = t.grad_sink(ida)) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           const std::size_t j = (*ia)(i), k = (*ib)(i);
                           ga[j] += g[i] * da(x[j], y[k], o[i]);
                         }
                       }
                       if (T* gb = t.grad_sink(idb)) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           const std::size_t j = (*ia)(i), k = (*ib)(i);
                           gb[k] += g[i] * db(x[j], y[k], o[i]);
                         }
                       }
                     });
}

// df(x, out) -> derivative.
template <typename T, typename F, typename DF>
Var<T> unary(std::string_view op, const Var<T>& x, F f, DF df) {
  Tape<T>& tape = tape_of(x);
  const auto& xv = x.value();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t id = x.id();
  return tape.record(op, {id}, x.shape(), std::move(out), [id, df](Tape<T>& t, std::size_t self) {
    T* gx = t.grad_sink(id);
    if (!gx) return;
    const auto g = t.out_grad(self);
    const auto& xv = t.value(id);
    const auto& o = t.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xv[i], o[i]);
  });
}

std::vector<bool> reduced_mask(std::string_view op, std::size_t rank, const std::vector<int>& axes) {
  std::vector<bool> mask(rank, axes.empty());
  for (int a : axes) {
    const int r = static_cast<int>(rank);
    const int axis = a < 0 ? a + r : a;
    if (axis < 0 || axis >= r) {
      throw ShapeError(std::string(op) + ": axis " + std::to_string(a) + " out of range");
    }
    mask[static_cast<std::size_t>(axis)] = true;
  }
  return mask;
}

struct ReductionPlan {
  Shape out_shape;
  std::vector<std::size_t> map;  // input flat index -> output flat index
  std::size_t group = 1;         // inputs per output
};

ReductionPlan plan_reduction(std::string_view op, const Shape& in, const std::vector<int>& axes,
                             bool keepdims) {
  const auto mask = reduced_mask(op, in.size(), axes);
  Shape kept(in.size());
  ReductionPlan plan;
  for (std::size_t d = 0; d < in.size(); ++d) {
    kept[d] = mask[d] ? 1 : in[d];
    if (mask[d]) plan.group *= in[d];
  }
  std::vector<std::size_t> stride(in.size(), 0);
  std::size_t s = 1;
  for (std::size_t d = in.size(); d-- > 0;) {
    stride[d] = mask[d] ? 0 : s;
    s *= kept[d];
  }
  const std::size_t total = numel(in);
  plan.map.resize(total);
  std::vector<std::size_t> idx(in.size(), 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < total; ++i) {
    plan.map[i] = off;
    for (std::size_t d = in.size(); d-- > 0;) {
      ++idx[d];
      off += stride[d];
      if (idx[d] < in[d]) break;
      off -= stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  if (keepdims) {
    plan.out_shape = kept;
  } else {
    for (std::size_t d = 0; d < in.size(); ++d) {
      if (!mask[d]) plan.out_shape.push_back(in[d]);
    }
    if (plan.out_shape.empty()) plan.out_shape = {1};
  }
  return plan;
}

template <typename T>
Var<T> reduce_sum(std::string_view op, const Var<T>& x, const std::vector<int>& axes, bool keepdims,
                  bool average) {
  Tape<T>& tape = tape_of(x);
  auto plan = std::make_shared<ReductionPlan>(plan_reduction(op, x.shape(), axes, keepdims));
  const auto& xv = x.value();
  std::vector<T> out(numel(plan->out_shape), T(0));
  for (std::size_t i = 0; i < xv.size(); ++i) out[plan->map[i]] += xv[i];
  const T scale = average ? T(1) / static_cast<T>(plan->group) : T(1);
  if (average) {
    for (auto& v : out) v *= scale;
  }
  const std::size_t id = x.id();
  Shape shape = plan->out_shape;
  return tape.record(op, {id}, std::move(shape), std::move(out),
                     [id, plan, scale](Tape<T>& t, std::size_t self) {
                       T* gx = t.grad_sink(id);
                       if (!gx) return;
                       const auto g = t.out_grad(self);
                       for (std::size_t i = 0; i < plan->map.size(); ++i) {
                         gx[i] += g[plan->map[i]] * scale;
                       }
                     });
}

template <typename T>
Var<T> reduce_extreme(std::string_view op, const Var<T>& x, const std::vector<int>& axes,
                      bool keepdims, bool take_max) {
  Tape<T>& tape = tape_of(x);
  const auto plan = plan_reduction(op, x.shape(), axes, keepdims);
  const auto& xv = x.value();
  const std::size_t n_out = numel(plan.out_shape);
  std::vector<T> out(n_out);
  auto arg = std::make_shared<std::vector<std::size_t>>(n_out, std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const std::size_t o = plan.map[i];
    auto& a = (*arg)[o];
    if (a == std::numeric_limits<std::size_t>::max() ||
        (take_max ? xv[i] > out[o] : xv[i] < out[o])) {
      a = i;
      out[o] = xv[i];
    }
  }
  const std::size_t id = x.id();
  return tape.record(op, {id}, plan.out_shape, std::move(out), [id, arg](Tape<T>& t, std::size_t self) {
    T* gx = t.grad_sink(id);
    if (!gx) return;
    const auto g = t.out_grad(self);
    for (std::size_t o = 0; o < g.size(); ++o) gx[(*arg)[o]] += g[o];
  });
}

void require_rank(std::string_view op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(s));
  }
}

}  // namespace

// ---------------------------------------------------------------- catalog

bool OpCatalog::is_forbidden(std::string_view id) {
  static constexpr std::array<std::string_view, 6> banned = {
      "max_pool", "conv2d_strided", "conv2d_transpose", "deconv", "conv_transpose", "strided_conv"};
  return std::find(banned.begin(), banned.end(), id) != banned.end();
}

void OpCatalog::add(OpInfo info) {
  if (is_forbidden(info.id)) {
    throw std::invalid_argument("operator '" + std::string(info.id) +
                                "' introduces gradient artifacts and cannot be registered");
  }
  if (contains(info.id)) {
    throw std::invalid_argument("operator '" + std::string(info.id) + "' registered twice");
  }
  ops_.push_back(info);
}

bool OpCatalog::contains(std::string_view id) const {
  return std::any_of(ops_.begin(), ops_.end(), [&](const OpInfo& o) { return o.id == id; });
}

const OpInfo& OpCatalog::at(std::string_view id) const {
  for (const auto& o : ops_) {
    if (o.id == id) return o;
  }
  throw UnknownOpError("unknown operator '" + std::string(id) + "'");
}

const OpCatalog& OpCatalog::builtin() {
  static const OpCatalog catalog = [] {
    OpCatalog c;
    for (auto id : {"add", "sub", "mul", "div", "atan2"}) c.add({id, 2});
    for (auto id : {"abs", "exp", "log", "sqrt", "square", "elu", "tanh"}) c.add({id, 1});
    c.add({"matmul", 2});
    c.add({"conv2d", 2});
    c.add({"avg_pool", 1});
    c.add({"upsample_nearest", 1});
    c.add({"softmax", 1});
    for (auto id : {"sum", "mean", "min", "max"}) c.add({id, 1});
    c.add({"concat", -1});
    c.add({"reshape", 1});
    c.add({"stop_gradient", 1});
    return c;
  }();
  return catalog;
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); },
      [](T, T, T) { return T(1); });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); },
      [](T, T, T) { return T(-1); });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
      [](T x, T, T) { return x; });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return binary<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
      [](T, T y, T o) { return -o / y; });
}

template <typename T>
Var<T> atan2(const Var<T>& y, const Var<T>& x) {
  return binary<T>(
      "atan2", y, x, [](T a, T b) { return std::atan2(a, b); },
      [](T a, T b, T) {
        const T r2 = a * a + b * b;
        return r2 > T(0) ? b / r2 : T(0);
      },
      [](T a, T b, T) {
        const T r2 = a * a + b * b;
        return r2 > T(0) ? -a / r2 : T(0);
      });
}

template <typename T>
Var<T> abs(const Var<T>& x) {
  return unary<T>(
      "abs", x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return unary<T>(
      "exp", x, [](T v) { return std::exp(v); }, [](T, T o) { return o; });
}

template <typename T>
Var<T> log(const Var<T>& x) {
  return unary<T>(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Var<T> sqrt(const Var<T>& x) {
  return unary<T>(
      "sqrt", x, [](T v) { return std::sqrt(v); }, [](T, T o) { return T(0.5) / o; });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return unary<T>(
      "square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Var<T> elu(const Var<T>& x) {
  return unary<T>(
      "elu", x, [](T v) { return v > T(0) ? v : std::expm1(v); },
      [](T v, T o) { return v > T(0) ? T(1) : o + T(1); });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T o) { return T(1) - o * o; });
}

// ---------------------------------------------------------------- linear algebra

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = same_tape(a, b);
  require_rank("matmul", a.shape(), 2);
  require_rank("matmul", b.shape(), 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner extents differ, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<T> out(m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = av[i * k + p];
      const T* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  const std::size_t ida = a.id(), idb = b.id();
  return tape.record("matmul", {ida, idb}, Shape{m, n}, std::move(out),
                     [ida, idb, m, k, n](Tape<T>& t, std::size_t self) {
                       const auto g = t.out_grad(self);
                       const auto& av = t.value(ida);
                       const auto& bv = t.value(idb);
                       if (T* ga = t.grad_sink(ida)) {
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             T acc = 0;
                             const T* brow = bv.data() + p * n;
                             const T* grow = g.data() + i * n;
                             for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                             ga[i * k + p] += acc;
                           }
                         }
                       }
                       if (T* gb = t.grad_sink(idb)) {
                         for (std::size_t i = 0; i < m; ++i) {
                           const T* grow = g.data() + i * n;
                           for (std::size_t p = 0; p < k; ++p) {
                             const T s = av[i * k + p];
                             T* gbrow = gb + p * n;
                             for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
                           }
                         }
                       }
                     });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w) {
  Tape<T>& tape = same_tape(x, w);
  require_rank("conv2d", x.shape(), 4);
  require_rank("conv2d", w.shape(), 4);
  const std::size_t n = x.shape()[0], h = x.shape()[1], wd = x.shape()[2], cin = x.shape()[3];
  const std::size_t kh = w.shape()[0], kw = w.shape()[1], cout = w.shape()[3];
  if (w.shape()[2] != cin) {
    throw ShapeError("conv2d: kernel " + to_string(w.shape()) + " does not match input " +
                     to_string(x.shape()));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(kw / 2);
  const auto& xv = x.value();
  const auto& wv = w.value();
  std::vector<T> out(n * h * wd * cout, T(0));

  // Visits every (output pixel, kernel tap) pair with a valid input pixel.
  auto for_taps = [=](auto&& fn) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t oy = 0; oy < h; ++oy) {
        for (std::size_t ox = 0; ox < wd; ++ox) {
          const std::size_t o = ((b * h + oy) * wd + ox) * cout;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - ph;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - pw;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
              const std::size_t i = ((b * h + static_cast<std::size_t>(iy)) * wd +
                                     static_cast<std::size_t>(ix)) * cin;
              const std::size_t k = (ky * kw + kx) * cin * cout;
              fn(o, i, k);
            }
          }
        }
      }
    }
  };

  for_taps([&](std::size_t o, std::size_t i, std::size_t k) {
    T* orow = out.data() + o;
    for (std::size_t c = 0; c < cin; ++c) {
      const T s = xv[i + c];
      const T* wrow = wv.data() + k + c * cout;
      for (std::size_t j = 0; j < cout; ++j) orow[j] += s * wrow[j];
    }
  });

  const std::size_t idx = x.id(), idw = w.id();
  return tape.record("conv2d", {idx, idw}, Shape{n, h, wd, cout}, std::move(out),
                     [idx, idw, for_taps, cin, cout](Tape<T>& t, std::size_t self) {
                       const auto g = t.out_grad(self);
                       const auto& xv = t.value(idx);
                       const auto& wv = t.value(idw);
                       T* gx = t.grad_sink(idx);
                       T* gw = t.grad_sink(idw);
                       for_taps([&](std::size_t o, std::size_t i, std::size_t k) {
                         const T* grow = g.data() + o;
                         for (std::size_t c = 0; c < cin; ++c) {
                           if (gx) {
                             const T* wrow = wv.data() + k + c * cout;
                             T acc = 0;
                             for (std::size_t j = 0; j < cout; ++j) acc += wrow[j] * grow[j];
                             gx[i + c] += acc;
                           }
                           if (gw) {
                             const T s = xv[i + c];
                             T* gwrow = gw + k + c * cout;
                             for (std::size_t j = 0; j < cout; ++j) gwrow[j] += s * grow[j];
                           }
                         }
                       });
                     });
}

// ---------------------------------------------------------------- spatial

template <typename T>
Var<T> avg_pool(const Var<T>& x, std::size_t window, std::size_t stride, bool same_padding) {
  Tape<T>& tape = tape_of(x);
  require_rank("avg_pool", x.shape(), 4);
  if (window == 0 || stride == 0) throw ShapeError("avg_pool: window and stride must be positive");
  const std::size_t n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];

  struct Axis {
    std::size_t out = 0;
    std::vector<std::size_t> lo, hi;
  };
  auto plan_axis = [&](std::size_t in) {
    Axis a;
    std::ptrdiff_t pad = 0;
    if (same_padding) {
      a.out = (in + stride - 1) / stride;
      const std::ptrdiff_t total =
          std::max<std::ptrdiff_t>(static_cast<std::ptrdiff_t>((a.out - 1) * stride + window) -
                                       static_cast<std::ptrdiff_t>(in),
                                   0);
      pad = total / 2;
    } else {
      if (in < window) throw ShapeError("avg_pool: window larger than input " + to_string(x.shape()));
      a.out = (in - window) / stride + 1;
    }
    for (std::size_t o = 0; o < a.out; ++o) {
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(o * stride) - pad;
      const std::ptrdiff_t end = start + static_cast<std::ptrdiff_t>(window);
      a.lo.push_back(static_cast<std::size_t>(std::max<std::ptrdiff_t>(start, 0)));
      a.hi.push_back(static_cast<std::size_t>(std::min<std::ptrdiff_t>(end, static_cast<std::ptrdiff_t>(in))));
    }
    return a;
  };
  const Axis ay = plan_axis(h), ax = plan_axis(w);

  auto for_cells = [=](auto&& fn) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t oy = 0; oy < ay.out; ++oy) {
        for (std::size_t ox = 0; ox < ax.out; ++ox) {
          const std::size_t o = ((b * ay.out + oy) * ax.out + ox) * c;
          const T inv = T(1) / static_cast<T>((ay.hi[oy] - ay.lo[oy]) * (ax.hi[ox] - ax.lo[ox]));
          for (std::size_t iy = ay.lo[oy]; iy < ay.hi[oy]; ++iy) {
            for (std::size_t ix = ax.lo[ox]; ix < ax.hi[ox]; ++ix) {
              fn(o, ((b * h + iy) * w + ix) * c, inv);
            }
          }
        }
      }
    }
  };

  const auto& xv = x.value();
  std::vector<T> out(n * ay.out * ax.out * c, T(0));
  for_cells([&](std::size_t o, std::size_t i, T inv) {
    for (std::size_t k = 0; k < c; ++k) out[o + k] += xv[i + k] * inv;
  });
  const std::size_t id = x.id();
  return tape.record("avg_pool", {id}, Shape{n, ay.out, ax.out, c}, std::move(out),
                     [id, for_cells, c](Tape<T>& t, std::size_t self) {
                       T* gx = t.grad_sink(id);
                       if (!gx) return;
                       const auto g = t.out_grad(self);
                       for_cells([&](std::size_t o, std::size_t i, T inv) {
                         for (std::size_t k = 0; k < c; ++k) gx[i + k] += g[o + k] * inv;
                       });
                     });
}

template <typename T>
Var<T> upsample_nearest(const Var<T>& x, std::size_t factor) {
  Tape<T>& tape = tape_of(x);
  require_rank("upsample_nearest", x.shape(), 4);
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be positive");
  const std::size_t n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
  const std::size_t oh = h * factor, ow = w * factor;
  const auto& xv = x.value();
  std::vector<T> out(n * oh * ow * c);
  auto src = [=](std::size_t b, std::size_t oy, std::size_t ox) {
    return ((b * h + oy / factor) * w + ox / factor) * c;
  };
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(src(b, oy, ox)), c,
                    out.begin() + static_cast<std::ptrdiff_t>(((b * oh + oy) * ow + ox) * c));
      }
    }
  }
  const std::size_t id = x.id();
  return tape.record("upsample_nearest", {id}, Shape{n, oh, ow, c}, std::move(out),
                     [id, src, n, oh, ow, c](Tape<T>& t, std::size_t self) {
                       T* gx = t.grad_sink(id);
                       if (!gx) return;
                       const auto g = t.out_grad(self);
                       for (std::size_t b = 0; b < n; ++b) {
                         for (std::size_t oy = 0; oy < oh; ++oy) {
                           for (std::size_t ox = 0; ox < ow; ++ox) {
                             const std::size_t i = src(b, oy, ox);
                             const std::size_t o = ((b * oh + oy) * ow + ox) * c;
                             for (std::size_t k = 0; k < c; ++k) gx[i + k] += g[o + k];
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------- softmax

template <typename T>
Var<T> softmax(const Var<T>& x) {
  Tape<T>& tape = tape_of(x);
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.size() / k;
  const auto& xv = x.value();
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * k;
    T* o = out.data() + r * k;
    const T peak = *std::max_element(in, in + k);
    T total = 0;
    for (std::size_t i = 0; i < k; ++i) {
      o[i] = std::exp(in[i] - peak);
      total += o[i];
    }
    for (std::size_t i = 0; i < k; ++i) o[i] /= total;
  }
  const std::size_t id = x.id();
  return tape.record("softmax", {id}, x.shape(), std::move(out), [id, k, rows](Tape<T>& t, std::size_t self) {
    T* gx = t.grad_sink(id);
    if (!gx) return;
    const auto g = t.out_grad(self);
    const auto& y = t.value(self);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t i = 0; i < k; ++i) dot += g[r * k + i] * y[r * k + i];
      for (std::size_t i = 0; i < k; ++i) gx[r * k + i] += y[r * k + i] * (g[r * k + i] - dot);
    }
  });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Var<T> sum(const Var<T>& x, std::vector<int> axes, bool keepdims) {
  return reduce_sum<T>("sum", x, axes, keepdims, false);
}

template <typename T>
Var<T> mean(const Var<T>& x, std::vector<int> axes, bool keepdims) {
  return reduce_sum<T>("mean", x, axes, keepdims, true);
}

template <typename T>
Var<T> min(const Var<T>& x, std::vector<int> axes, bool keepdims) {
  return reduce_extreme<T>("min", x, axes, keepdims, false);
}

template <typename T>
Var<T> max(const Var<T>& x, std::vector<int> axes, bool keepdims) {
  return reduce_extreme<T>("max", x, axes, keepdims, true);
}

// ---------------------------------------------------------------- structure

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape<T>& tape = tape_of(parts[0]);
  const Shape& first = parts[0].shape();
  const int r = static_cast<int>(first.size());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("concat: axis out of range");
  const auto ax = static_cast<std::size_t>(a);
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= first[d];
  for (std::size_t d = ax + 1; d < first.size(); ++d) inner *= first[d];

  Shape out_shape = first;
  out_shape[ax] = 0;
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw std::invalid_argument("concat: operands on different tapes");
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != ax && s[d] != first[d]) {
        throw ShapeError("concat: " + to_string(s) + " incompatible with " + to_string(first));
      }
    }
    out_shape[ax] += s[ax];
    ids.push_back(p.id());
    widths.push_back(s[ax] * inner);
  }
  const std::size_t row = out_shape[ax] * inner;
  std::vector<T> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = parts[p].value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * widths[p]), widths[p],
                  out.begin() + static_cast<std::ptrdiff_t>(o * row + offset));
    }
    offset += widths[p];
  }
  std::vector<std::size_t> inputs = ids;
  return tape.record("concat", std::move(inputs), std::move(out_shape), std::move(out),
                     [ids, widths, outer, row](Tape<T>& t, std::size_t self) {
                       const auto g = t.out_grad(self);
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < ids.size(); ++p) {
                         if (T* gp = t.grad_sink(ids[p])) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t i = 0; i < widths[p]; ++i) {
                               gp[o * widths[p] + i] += g[o * row + offset + i];
                             }
                           }
                         }
                         offset += widths[p];
                       }
                     });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tape<T>& tape = tape_of(x);
  if (numel(shape) != x.size() || shape.empty()) {
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  const std::size_t id = x.id();
  return tape.record("reshape", {id}, std::move(shape), x.value(), [id](Tape<T>& t, std::size_t self) {
    T* gx = t.grad_sink(id);
    if (!gx) return;
    const auto g = t.out_grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var<T> stop_gradient(const Var<T>& x) {
  Tape<T>& tape = tape_of(x);
  // No inputs are linked, so the node is a constant as far as backward cares.
  return tape.record("stop_gradient", {}, x.shape(), x.value(), nullptr);
}

template <typename T>
Var<T> scalar_like(const Var<T>& x, std::type_identity_t<T> value) {
  return tape_of(x).constant(Tensor<T>::scalar(value));
}

// ---------------------------------------------------------------- dispatch

template <typename T>
Var<T> forward_op(std::string_view id, std::span<const Var<T>> in, const OpAttrs& attrs) {
  const OpInfo& info = OpCatalog::builtin().at(id);
  if (info.arity >= 0 && in.size() != static_cast<std::size_t>(info.arity)) {
    throw ShapeError(std::string(id) + ": expected " + std::to_string(info.arity) + " inputs, got " +
                     std::to_string(in.size()));
  }
  if (id == "add") return add(in[0], in[1]);
  if (id == "sub") return sub(in[0], in[1]);
  if (id == "mul") return mul(in[0], in[1]);
  if (id == "div") return div(in[0], in[1]);
  if (id == "atan2") return atan2(in[0], in[1]);
  if (id == "abs") return abs(in[0]);
  if (id == "exp") return exp(in[0]);
  if (id == "log") return log(in[0]);
  if (id == "sqrt") return sqrt(in[0]);
  if (id == "square") return square(in[0]);
  if (id == "elu") return elu(in[0]);
  if (id == "tanh") return tanh(in[0]);
  if (id == "matmul") return matmul(in[0], in[1]);
  if (id == "conv2d") {
    if (attrs.stride != 1) throw std::invalid_argument("conv2d: only stride 1 is supported");
    return conv2d(in[0], in[1]);
  }
  if (id == "avg_pool") return avg_pool(in[0], attrs.window, attrs.stride, attrs.same_padding);
  if (id == "upsample_nearest") return upsample_nearest(in[0], attrs.factor);
  if (id == "softmax") return softmax(in[0]);
  if (id == "sum") return sum(in[0], attrs.axes, attrs.keepdims);
  if (id == "mean") return mean(in[0], attrs.axes, attrs.keepdims);
  if (id == "min") return min(in[0], attrs.axes, attrs.keepdims);
  if (id == "max") return max(in[0], attrs.axes, attrs.keepdims);
  if (id == "concat") return concat(in, attrs.axis);
  if (id == "reshape") return reshape(in[0], attrs.shape);
  if (id == "stop_gradient") return stop_gradient(in[0]);
  throw UnknownOpError("operator '" + std::string(id) + "' has no kernel");
}

#define UCG_INSTANTIATE_OPS(T)                                                              \
  template Var<T> forward_op(std::string_view, std::span<const Var<T>>, const OpAttrs&);   \
  template Var<T> add(const Var<T>&, const Var<T>&);                                        \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                        \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                        \
  template Var<T> div(const Var<T>&, const Var<T>&);                                        \
  template Var<T> atan2(const Var<T>&, const Var<T>&);                                      \
  template Var<T> abs(const Var<T>&);                                                       \
  template Var<T> exp(const Var<T>&);                                                       \
  template Var<T> log(const Var<T>&);                                                       \
  template Var<T> sqrt(const Var<T>&);                                                      \
  template Var<T> square(const Var<T>&);                                                    \
  template Var<T> elu(const Var<T>&);                                                       \
  template Var<T> tanh(const Var<T>&);                                                      \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                     \
  template Var<T> conv2d(const Var<T>&, const Var<T>&);                                     \
  template Var<T> avg_pool(const Var<T>&, std::size_t, std::size_t, bool);                  \
  template Var<T> upsample_nearest(const Var<T>&, std::size_t);                             \
  template Var<T> softmax(const Var<T>&);                                                   \
  template Var<T> sum(const Var<T>&, std::vector<int>, bool);                               \
  template Var<T> mean(const Var<T>&, std::vector<int>, bool);                              \
  template Var<T> min(const Var<T>&, std::vector<int>, bool);                               \
  template Var<T> max(const Var<T>&, std::vector<int>, bool);                               \
  template Var<T> concat(std::span<const Var<T>>, int);                                     \
  template Var<T> reshape(const Var<T>&, Shape);                                            \
  template Var<T> stop_gradient(const Var<T>&);                                             \
  template Var<T> scalar_like(const Var<T>&, std::type_identity_t<T>);

UCG_INSTANTIATE_OPS(float)
UCG_INSTANTIATE_OPS(double)

}  // namespace ucg::ad
