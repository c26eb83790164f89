#include "ucg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ucg::losses {

using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr double kPi = std::numbers::pi;

struct Slot {
  std::size_t lower;  // node index below the angle
  double frac;        // weight carried by the node above
};

Slot locate(double angle, std::size_t k) {
  if (!std::isfinite(angle)) throw ad::NonFiniteError("cyclic_histogram: non-finite angle");
  const double spacing = 2.0 * kPi / static_cast<double>(k);
  const double pos = (angle + kPi) / spacing;
  const double base = std::floor(pos);
  const auto kk = static_cast<long long>(k);
  const long long r = ((static_cast<long long>(base) % kk) + kk) % kk;
  return {static_cast<std::size_t>(r), pos - base};
}

void check_hist_args(std::size_t n, std::size_t k) {
  if (n == 0) throw std::invalid_argument("cyclic_histogram: no angles");
  if (k < 2) throw std::invalid_argument("cyclic_histogram: need k >= 2, got " + std::to_string(k));
}

std::size_t kept_count(std::size_t m, double keep_ratio) {
  if (m == 0) throw std::invalid_argument("loss_max_pool: empty input");
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) {
    throw std::invalid_argument("loss_max_pool: keep ratio must lie in (0, 1]");
  }
  // The small slack keeps q*M that is integral up to rounding from rounding up.
  const double raw = std::ceil(keep_ratio * static_cast<double>(m) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(raw), 1, m);
}

template <typename V>
std::vector<std::size_t> top_indices(const V& values, std::size_t count) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto before = [&](std::size_t a, std::size_t b) {
    return values[a] != values[b] ? values[a] > values[b] : a < b;
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count - 1), idx.end(), before);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) throw ad::ShapeError(std::string(op) + ": shapes " + ad::to_string(a) + " and " + ad::to_string(b));
}

template <typename T>
void check_labels(const char* op, const Var<T>& x, std::span<const std::size_t> labels) {
  const Shape& s = x.shape();
  if (s.size() != 2) throw ad::ShapeError(std::string(op) + ": expected [B, k], got " + ad::to_string(s));
  if (labels.size() != s[0]) {
    throw ad::ShapeError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(s[0]));
  }
  for (std::size_t y : labels) {
    if (y >= s[1]) {
      throw std::out_of_range(std::string(op) + ": label " + std::to_string(y) + " outside [0, " +
                              std::to_string(s[1]) + ")");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- histogram

std::vector<double> histogram_nodes(std::size_t k) {
  std::vector<double> nodes(k);
  for (std::size_t r = 0; r < k; ++r) nodes[r] = -kPi + 2.0 * kPi * static_cast<double>(r) / static_cast<double>(k);
  return nodes;
}

CyclicHistogram cyclic_histogram(std::span<const double> angles, std::size_t k) {
  check_hist_args(angles.size(), k);
  CyclicHistogram h{k, histogram_nodes(k), std::vector<double>(k, 0.0)};
  const double share = 1.0 / static_cast<double>(angles.size());
  for (double a : angles) {
    const Slot s = locate(a, k);
    h.mass[s.lower] += share * (1.0 - s.frac);
    h.mass[(s.lower + 1) % k] += share * s.frac;
  }
  return h;
}

std::vector<double> binned_histogram(std::span<const double> angles, std::size_t k) {
  check_hist_args(angles.size(), k);
  std::vector<double> mass(k, 0.0);
  const double share = 1.0 / static_cast<double>(angles.size());
  for (double a : angles) mass[locate(a, k).lower] += share;
  return mass;
}

double entropy_loss(std::span<const double> mass) {
  double total = 0.0;
  for (double h : mass) total += h * std::log(h + kLogEpsilon);
  return total;
}

template <typename T>
Var<T> cyclic_histogram(const Var<T>& angles, std::size_t k) {
  const Shape& shape = angles.shape();
  if (shape.empty() || shape.size() > 2) {
    throw ad::ShapeError("cyclic_histogram: expected [N] or [N, d] angles, got " + ad::to_string(shape));
  }
  const std::size_t n = shape[0];
  const std::size_t d = shape.size() == 2 ? shape[1] : 1;
  check_hist_args(n, k);
  auto& tape = *angles.tape();
  const std::size_t m = n * d;

  // Interpolation weights are differentiable; the node assignment is a
  // piecewise-constant selection recorded as constant one-hot matrices.
  Tensor<T> base(Shape{1, m});
  Tensor<T> lower(Shape{m, d * k});
  Tensor<T> upper(Shape{m, d * k});
  const auto& av = angles.value();
  const double spacing = 2.0 * kPi / static_cast<double>(k);
  const auto kk = static_cast<long long>(k);
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(static_cast<double>(av[i]))) throw ad::NonFiniteError("cyclic_histogram: non-finite angle");
    // Same arithmetic as the recorded position below, so the fraction is
    // exactly in [0, 1) at this precision.
    const T pos = (av[i] + static_cast<T>(kPi)) / static_cast<T>(spacing);
    const T floor_pos = std::floor(pos);
    const long long r = ((static_cast<long long>(floor_pos) % kk) + kk) % kk;
    const std::size_t col = i % d;
    base[i] = floor_pos;
    lower[i * d * k + col * k + static_cast<std::size_t>(r)] = T(1);
    upper[i * d * k + col * k + (static_cast<std::size_t>(r) + 1) % k] = T(1);
  }
  auto pos = (ad::reshape(angles, {1, m}) + static_cast<T>(kPi)) / static_cast<T>(spacing);
  auto frac = pos - tape.constant(std::move(base));
  auto mass = ad::matmul(T(1) - frac, tape.constant(std::move(lower))) +
              ad::matmul(frac, tape.constant(std::move(upper)));
  mass = mass / static_cast<T>(n);
  return shape.size() == 1 ? ad::reshape(mass, {k}) : ad::reshape(mass, {d, k});
}

template <typename T>
Var<T> entropy_loss(const Var<T>& mass) {
  const std::size_t rows = mass.size() / mass.shape().back();
  auto terms = mass * ad::log(mass + static_cast<T>(kLogEpsilon));
  return ad::sum(terms) / static_cast<T>(rows);
}

template <typename T>
Var<T> latent_entropy_loss(const Var<T>& angles, std::size_t k) {
  return entropy_loss(cyclic_histogram(angles, k));
}

// ---------------------------------------------------------------- reconstruction

template <typename T>
Var<T> luma_gradient_magnitude(const Var<T>& image) {
  const Shape& s = image.shape();
  if (s.size() != 4 || s[3] != 3) {
    throw ad::ShapeError("luma_gradient_magnitude: expected [B, H, W, 3], got " + ad::to_string(s));
  }
  const std::size_t b = s[0], h = s[1], w = s[2];
  auto& tape = *image.tape();
  auto luma = ad::sum(image * tape.constant(Tensor<T>({3}, {T(0.299), T(0.587), T(0.114)})), {3}, true);

  // Zero-padded central differences, corrected at the border so the
  // outermost pixel acts as replicated.
  Tensor<T> edge_u(Shape{1, 1, w, 1});
  Tensor<T> edge_v(Shape{1, h, 1, 1});
  if (w > 1) {
    edge_u[0] = T(-0.5);
    edge_u[w - 1] = T(0.5);
  }
  if (h > 1) {
    edge_v[0] = T(-0.5);
    edge_v[h - 1] = T(0.5);
  }
  auto du = ad::conv2d(luma, tape.constant(Tensor<T>({1, 3, 1, 1}, {T(-0.5), T(0), T(0.5)}))) +
            luma * tape.constant(std::move(edge_u));
  auto dv = ad::conv2d(luma, tape.constant(Tensor<T>({3, 1, 1, 1}, {T(-0.5), T(0), T(0.5)}))) +
            luma * tape.constant(std::move(edge_v));
  return ad::reshape(ad::abs(du) + ad::abs(dv), {b, h, w});
}

template <typename T>
Var<T> recon_image_loss(const Var<T>& x, const Var<T>& y) {
  require_same_shape("recon_image_loss", x.shape(), y.shape());
  auto colour = T(2) * ad::sum(ad::abs(x - y), {3});
  return colour + ad::abs(luma_gradient_magnitude(x) - luma_gradient_magnitude(y));
}

template <typename T>
Var<T> recon_vector_loss(const Var<T>& x, const Var<T>& y) {
  require_same_shape("recon_vector_loss", x.shape(), y.shape());
  if (x.shape().size() != 2) throw ad::ShapeError("recon_vector_loss: expected [B, D] points");
  return T(2) * ad::sum(ad::abs(x - y), {1});
}

template <typename T>
Var<T> loss_max_pool(const Var<T>& losses, double keep_ratio) {
  const std::size_t kept = kept_count(losses.size(), keep_ratio);
  Tensor<T> mask(losses.shape());
  for (std::size_t i : top_indices(losses.value(), kept)) mask[i] = T(1);
  return ad::sum(losses * losses.tape()->constant(std::move(mask))) / static_cast<T>(kept);
}

double loss_max_pool(std::span<const double> losses, double keep_ratio) {
  const std::size_t kept = kept_count(losses.size(), keep_ratio);
  double total = 0.0;
  for (std::size_t i : top_indices(losses, kept)) total += losses[i];
  return total / static_cast<double>(kept);
}

// ---------------------------------------------------------------- latent

template <typename T>
Var<T> latent_identity_loss(const Var<T>& target, const Var<T>& pred) {
  require_same_shape("latent_identity_loss", target.shape(), pred.shape());
  if (target.shape().back() % 2 != 0) {
    throw ad::ShapeError("latent_identity_loss: codes must hold whole pairs");
  }
  return T(2) * ad::mean(ad::square(target - pred));
}

// ---------------------------------------------------------------- attributes

template <typename T>
Var<T> locality_loss(const Var<T>& logits, std::span<const std::size_t> true_bins, double beta) {
  check_labels("locality_loss", logits, true_bins);
  if (!(beta > 0)) throw std::invalid_argument("locality_loss: beta must be positive");
  const std::size_t b = logits.shape()[0], k = logits.shape()[1];
  Tensor<T> dist(Shape{b, k});
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t i = 0; i < k; ++i) {
      dist[r * k + i] = static_cast<T>(i > true_bins[r] ? i - true_bins[r] : true_bins[r] - i);
    }
  }
  auto probs = ad::softmax(logits * static_cast<T>(beta));
  return ad::sum(probs * logits.tape()->constant(std::move(dist))) / static_cast<T>(b);
}

template <typename T>
Var<T> softargmax(const Var<T>& logits, double beta) {
  if (!(beta > 0)) throw std::invalid_argument("softargmax: beta must be positive");
  const std::size_t k = logits.shape().back();
  Tensor<T> index(Shape{k});
  for (std::size_t i = 0; i < k; ++i) index[i] = static_cast<T>(i);
  auto probs = ad::softmax(logits * static_cast<T>(beta));
  return ad::sum(probs * logits.tape()->constant(std::move(index)), {-1});
}

template <typename T>
Var<T> focal_loss(const Var<T>& probs, std::span<const std::size_t> labels, double gamma) {
  check_labels("focal_loss", probs, labels);
  if (!(gamma >= 0)) throw std::invalid_argument("focal_loss: gamma must be non-negative");
  const std::size_t b = probs.shape()[0], n = probs.shape()[1];
  Tensor<T> onehot(Shape{b, n});
  for (std::size_t r = 0; r < b; ++r) onehot[r * n + labels[r]] = T(1);
  auto p_true = ad::sum(probs * probs.tape()->constant(std::move(onehot)), {1});
  auto ce = ad::log(p_true + static_cast<T>(kLogEpsilon));
  if (gamma == 0) return -ad::mean(ce);
  auto focus = ad::exp(static_cast<T>(gamma) * ad::log(T(1) - p_true + static_cast<T>(kLogEpsilon)));
  return -ad::mean(focus * ce);
}

double focal_loss(double p_true, double gamma) {
  return -std::pow(1.0 - p_true, gamma) * std::log(p_true + kLogEpsilon);
}

// ---------------------------------------------------------------- mixing

void MixerState::update(std::span<const double> v) {
  constexpr double floor = 1e-12;
  if (v.empty()) throw std::invalid_argument("adaptive_mix: no losses");
  for (double x : v) {
    if (!(x >= 0) || !std::isfinite(x)) throw std::invalid_argument("adaptive_mix: losses must be finite and >= 0");
  }
  if (smoothed.empty()) {
    smoothed.assign(v.begin(), v.end());
  } else {
    if (smoothed.size() != v.size()) throw std::invalid_argument("adaptive_mix: loss count changed");
    for (std::size_t i = 0; i < v.size(); ++i) smoothed[i] = rho * smoothed[i] + (1.0 - rho) * v[i];
  }
  for (double& s : smoothed) s = std::max(s, floor);
}

std::vector<double> MixerState::weights() const {
  const double total = std::accumulate(smoothed.begin(), smoothed.end(), 0.0);
  const double n = static_cast<double>(smoothed.size());
  std::vector<double> w(smoothed.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = total / (n * smoothed[i]);
  return w;
}

template <typename T>
Var<T> mix_losses(std::span<const Var<T>> losses, const Var<T>& gamma, std::span<const double> weights) {
  const std::size_t n = losses.size();
  if (n == 0 || gamma.size() != n || weights.size() != n) {
    throw ad::ShapeError("adaptive_mix: need one gamma and one weight per loss");
  }
  const auto& g = gamma.value();
  if (std::all_of(g.begin(), g.end(), [](T x) { return x == T(0); })) {
    throw std::invalid_argument("adaptive_mix: all mixing weights are zero");
  }
  std::vector<Var<T>> flat;
  for (const auto& l : losses) flat.push_back(ad::reshape(l, {1}));
  auto v = ad::concat<T>(flat, 0);
  Tensor<T> w(Shape{n});
  for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<T>(weights[i]);
  auto g2 = ad::square(ad::reshape(gamma, {n}));
  return ad::sum(g2 * v * gamma.tape()->constant(std::move(w))) / ad::sum(g2);
}

template <typename T>
Var<T> adaptive_mix(MixerState& state, std::span<const Var<T>> losses, const Var<T>& gamma) {
  std::vector<double> v;
  for (const auto& l : losses) v.push_back(static_cast<double>(l.item()));
  state.update(v);
  return mix_losses(losses, gamma, state.weights());
}

// ---------------------------------------------------------------- BEGAN

BeganStep began_update(BeganState& state, double loss_real, double loss_fake) {
  if (!(loss_real >= 0) || !(loss_fake >= 0) || !std::isfinite(loss_real) || !std::isfinite(loss_fake)) {
    throw std::invalid_argument("began_update: reconstruction losses must be finite and >= 0");
  }
  const double balance = state.gamma_b * loss_real - loss_fake;
  BeganStep step{state.k, loss_real - state.k * loss_fake, loss_fake, loss_real + std::abs(balance)};
  state.k = std::clamp(state.k + state.lambda_k * balance, 0.0, 1.0);
  state.convergence = step.convergence;
  return step;
}

#define UCG_INSTANTIATE_LOSSES(T)                                                                  \
  template Var<T> cyclic_histogram(const Var<T>&, std::size_t);                                    \
  template Var<T> entropy_loss(const Var<T>&);                                                     \
  template Var<T> latent_entropy_loss(const Var<T>&, std::size_t);                                 \
  template Var<T> luma_gradient_magnitude(const Var<T>&);                                          \
  template Var<T> recon_image_loss(const Var<T>&, const Var<T>&);                                  \
  template Var<T> recon_vector_loss(const Var<T>&, const Var<T>&);                                 \
  template Var<T> loss_max_pool(const Var<T>&, double);                                            \
  template Var<T> latent_identity_loss(const Var<T>&, const Var<T>&);                              \
  template Var<T> locality_loss(const Var<T>&, std::span<const std::size_t>, double);              \
  template Var<T> softargmax(const Var<T>&, double);                                               \
  template Var<T> focal_loss(const Var<T>&, std::span<const std::size_t>, double);                 \
  template Var<T> mix_losses(std::span<const Var<T>>, const Var<T>&, std::span<const double>);     \
  template Var<T> adaptive_mix(MixerState&, std::span<const Var<T>>, const Var<T>&);

UCG_INSTANTIATE_LOSSES(float)
UCG_INSTANTIATE_LOSSES(double)

}  // namespace ucg::losses
