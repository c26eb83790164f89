#ifndef UCG_LATENT_HPP
#define UCG_LATENT_HPP

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ucg/autodiff/ops.hpp"
#include "ucg/rng.hpp"

namespace ucg::latent {

enum class LatentKind { unit_complex, uniform_box, gaussian };

LatentKind parse_latent_kind(std::string_view name);  // "unit-complex", "uniform-box", "gaussian"
std::string_view to_string(LatentKind kind);

/// Values per code: two per angle for unit-complex, one per dimension
/// otherwise.
std::size_t code_width(LatentKind kind, std::size_t dims);

inline constexpr double kPairEpsilon = 1e-8;

/// d points on the unit circle stored as (x0, y0, x1, y1, ...).
struct LatentCode {
  std::size_t dims = 0;
  std::vector<double> values;

  double max_pair_deviation() const;  // max_i |x_i^2 + y_i^2 - 1|
  bool is_unit(double tolerance = 1e-5) const { return max_pair_deviation() <= tolerance; }
};

/// Angles uniform on [-pi, pi), projected onto the axes.
LatentCode sample_latent(std::size_t dims, Rng& rng);
LatentCode pairs_of(std::span<const double> angles);
/// Each pair divided by sqrt(x^2 + y^2 + eps). Throws on odd length.
LatentCode normalize_pairs(std::span<const double> raw);
/// atan2(y, x) per pair, in (-pi, pi].
std::vector<double> angles_of(const LatentCode& code);

/// Uniform U[-1, 1] or standard normal draws. Unit-complex codes come from
/// sample_latent instead.
std::vector<double> sample_baseline(LatentKind kind, std::size_t dims, Rng& rng);

/// [batch, code_width] draws from the prior of `kind`.
template <typename T>
ad::Tensor<T> sample_codes(LatentKind kind, std::size_t batch, std::size_t dims, Rng& rng);

/// Differentiable pair normalizer over the last axis (even extent).
template <typename T>
ad::Var<T> normalize_pairs(const ad::Var<T>& raw);

/// [N, 2d] codes -> [N, d] angles.
template <typename T>
ad::Var<T> angles_of(const ad::Var<T>& codes);

/// Maps raw encoder output onto the latent domain of `kind`: pair
/// normalization, tanh into the box, or identity for the Gaussian prior.
template <typename T>
ad::Var<T> apply_normalizer(LatentKind kind, const ad::Var<T>& raw);

}  // namespace ucg::latent

#endif  // UCG_LATENT_HPP
