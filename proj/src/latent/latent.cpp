#include "ucg/latent.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ucg::latent {

using ad::Shape;
using ad::Tensor;
using ad::Var;

LatentKind parse_latent_kind(std::string_view name) {
  if (name == "unit-complex") return LatentKind::unit_complex;
  if (name == "uniform-box") return LatentKind::uniform_box;
  if (name == "gaussian") return LatentKind::gaussian;
  throw std::invalid_argument("unknown latent space '" + std::string(name) + "'");
}

std::string_view to_string(LatentKind kind) {
  switch (kind) {
    case LatentKind::unit_complex: return "unit-complex";
    case LatentKind::uniform_box: return "uniform-box";
    case LatentKind::gaussian: return "gaussian";
  }
  return "?";
}

std::size_t code_width(LatentKind kind, std::size_t dims) {
  return kind == LatentKind::unit_complex ? 2 * dims : dims;
}

double LatentCode::max_pair_deviation() const {
  double worst = 0;
  for (std::size_t i = 0; i + 1 < values.size(); i += 2) {
    const double r2 = values[i] * values[i] + values[i + 1] * values[i + 1];
    worst = std::max(worst, std::abs(r2 - 1.0));
  }
  return worst;
}

LatentCode sample_latent(std::size_t dims, Rng& rng) {
  std::vector<double> angles(dims);
  for (auto& a : angles) a = uniform(rng, -std::numbers::pi, std::numbers::pi);
  return pairs_of(angles);
}

LatentCode pairs_of(std::span<const double> angles) {
  LatentCode code;
  code.dims = angles.size();
  code.values.reserve(2 * angles.size());
  for (double a : angles) {
    code.values.push_back(std::cos(a));
    code.values.push_back(std::sin(a));
  }
  return code;
}

LatentCode normalize_pairs(std::span<const double> raw) {
  if (raw.size() % 2 != 0) {
    throw std::invalid_argument("normalize_pairs: odd input length " + std::to_string(raw.size()));
  }
  LatentCode code;
  code.dims = raw.size() / 2;
  code.values.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); i += 2) {
    const double norm = std::sqrt(raw[i] * raw[i] + raw[i + 1] * raw[i + 1] + kPairEpsilon);
    code.values[i] = raw[i] / norm;
    code.values[i + 1] = raw[i + 1] / norm;
  }
  return code;
}

std::vector<double> angles_of(const LatentCode& code) {
  std::vector<double> angles(code.dims);
  for (std::size_t i = 0; i < code.dims; ++i) {
    angles[i] = std::atan2(code.values[2 * i + 1], code.values[2 * i]);
  }
  return angles;
}

std::vector<double> sample_baseline(LatentKind kind, std::size_t dims, Rng& rng) {
  std::vector<double> out(dims);
  switch (kind) {
    case LatentKind::uniform_box:
      for (auto& v : out) v = uniform(rng, -1.0, 1.0);
      return out;
    case LatentKind::gaussian:
      for (auto& v : out) v = standard_normal(rng);
      return out;
    case LatentKind::unit_complex:
      break;
  }
  throw std::invalid_argument("sample_baseline: unit-complex codes come from sample_latent");
}

template <typename T>
Tensor<T> sample_codes(LatentKind kind, std::size_t batch, std::size_t dims, Rng& rng) {
  const std::size_t width = code_width(kind, dims);
  Tensor<T> out(Shape{batch, width});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto row = kind == LatentKind::unit_complex ? sample_latent(dims, rng).values
                                                      : sample_baseline(kind, dims, rng);
    for (std::size_t j = 0; j < width; ++j) out[b * width + j] = static_cast<T>(row[j]);
  }
  return out;
}

template <typename T>
Var<T> normalize_pairs(const Var<T>& raw) {
  const Shape shape = raw.shape();
  if (shape.back() % 2 != 0) {
    throw std::invalid_argument("normalize_pairs: odd trailing extent " + ad::to_string(shape));
  }
  const std::size_t pairs = raw.size() / 2;
  auto p = ad::reshape(raw, {pairs, 2});
  auto norm = ad::sqrt(ad::sum(ad::square(p), {1}, true) + static_cast<T>(kPairEpsilon));
  return ad::reshape(p / norm, shape);
}

template <typename T>
Var<T> angles_of(const Var<T>& codes) {
  const Shape& shape = codes.shape();
  if (shape.size() != 2 || shape[1] % 2 != 0) {
    throw std::invalid_argument("angles_of: expected [N, 2d] codes, got " + ad::to_string(shape));
  }
  const std::size_t n = shape[0], d = shape[1] / 2;
  auto& tape = *codes.tape();
  auto p = ad::reshape(codes, {n, d, 2});
  auto x = ad::sum(p * tape.constant(Tensor<T>({2}, {T(1), T(0)})), {2});
  auto y = ad::sum(p * tape.constant(Tensor<T>({2}, {T(0), T(1)})), {2});
  return ad::atan2(y, x);
}

template <typename T>
Var<T> apply_normalizer(LatentKind kind, const Var<T>& raw) {
  switch (kind) {
    case LatentKind::unit_complex: return normalize_pairs(raw);
    case LatentKind::uniform_box: return ad::tanh(raw);
    case LatentKind::gaussian: return raw;
  }
  return raw;
}

#define UCG_INSTANTIATE_LATENT(T)                                                   \
  template Tensor<T> sample_codes<T>(LatentKind, std::size_t, std::size_t, Rng&);   \
  template Var<T> normalize_pairs(const Var<T>&);                                   \
  template Var<T> angles_of(const Var<T>&);                                         \
  template Var<T> apply_normalizer(LatentKind, const Var<T>&);

UCG_INSTANTIATE_LATENT(float)
UCG_INSTANTIATE_LATENT(double)

}  // namespace ucg::latent
