#ifndef UCG_LOSSES_HPP
#define UCG_LOSSES_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "ucg/autodiff/ops.hpp"

namespace ucg::losses {

inline constexpr double kLogEpsilon = 1e-12;

// ---------------------------------------------------------------- histogram

/// Soft histogram over the circle. Node r sits at -pi + 2*pi*r/k (0-based),
/// so the k nodes are distinct under wrap-around.
struct CyclicHistogram {
  std::size_t k = 0;
  std::vector<double> nodes;
  std::vector<double> mass;
};

std::vector<double> histogram_nodes(std::size_t k);

/// Each angle in (-pi, pi] splits 1/N between its two neighbouring nodes by
/// linear interpolation, wrapping from the last node to the first.
CyclicHistogram cyclic_histogram(std::span<const double> angles, std::size_t k);

/// Hard binning into k equal arcs starting at -pi.
std::vector<double> binned_histogram(std::span<const double> angles, std::size_t k);

/// sum_r h_r ln(h_r + eps); the negative entropy.
double entropy_loss(std::span<const double> mass);

/// Differentiable version over angles [N] or [N, d]. Returns [k] or one
/// histogram per column, [d, k].
template <typename T>
ad::Var<T> cyclic_histogram(const ad::Var<T>& angles, std::size_t k);

/// Negative entropy along the last axis, averaged over the leading ones.
template <typename T>
ad::Var<T> entropy_loss(const ad::Var<T>& mass);

/// entropy_loss of the per-dimension histograms of [N, d] angles.
template <typename T>
ad::Var<T> latent_entropy_loss(const ad::Var<T>& angles, std::size_t k);

// ---------------------------------------------------------------- reconstruction

/// Per-pixel distance between [B, H, W, 3] images: twice the L1 colour
/// difference plus the difference of luma gradient magnitudes. Returns
/// [B, H, W].
template <typename T>
ad::Var<T> recon_image_loss(const ad::Var<T>& x, const ad::Var<T>& y);

/// Luma gradient magnitude |d/du Y| + |d/dv Y| with central differences and
/// replicated borders, [B, H, W, 3] -> [B, H, W].
template <typename T>
ad::Var<T> luma_gradient_magnitude(const ad::Var<T>& image);

/// Twice the L1 distance per row of [B, D] points. Returns [B].
template <typename T>
ad::Var<T> recon_vector_loss(const ad::Var<T>& x, const ad::Var<T>& y);

/// Mean of the ceil(q * M) largest entries over all M elements. Ties are
/// broken towards lower flat indices. Only selected entries get gradient.
template <typename T>
ad::Var<T> loss_max_pool(const ad::Var<T>& losses, double keep_ratio);

double loss_max_pool(std::span<const double> losses, double keep_ratio);

// ---------------------------------------------------------------- latent

/// Mean over pairs of the squared chordal distance between [N, 2d] codes.
template <typename T>
ad::Var<T> latent_identity_loss(const ad::Var<T>& target, const ad::Var<T>& pred);

// ---------------------------------------------------------------- attributes

/// Expected |i - y| under softmax(beta * logits) for [B, k] logits, averaged
/// over the batch.
template <typename T>
ad::Var<T> locality_loss(const ad::Var<T>& logits, std::span<const std::size_t> true_bins, double beta);

/// Expected index under softmax(beta * logits). [B, k] -> [B].
template <typename T>
ad::Var<T> softargmax(const ad::Var<T>& logits, double beta);

/// -(1 - p_t)^gamma ln(p_t + eps) for [B, n] class probabilities, averaged
/// over the batch.
template <typename T>
ad::Var<T> focal_loss(const ad::Var<T>& probs, std::span<const std::size_t> labels, double gamma);

double focal_loss(double p_true, double gamma);

// ---------------------------------------------------------------- mixing

/// Exponentially smoothed loss magnitudes behind the adaptive mixer.
struct MixerState {
  double rho = 0.99;
  std::vector<double> smoothed;  // empty until the first update

  explicit MixerState(double rho_ = 0.99) : rho(rho_) {}

  /// The first update copies v; later ones blend. Values are floored at
  /// 1e-12 so the weights stay finite.
  void update(std::span<const double> v);
  /// w_i = sum(s) / (n * s_i)
  std::vector<double> weights() const;
};

/// sum_i gamma_i^2 w_i v_i / sum_k gamma_k^2 with the weights held constant.
template <typename T>
ad::Var<T> mix_losses(std::span<const ad::Var<T>> losses, const ad::Var<T>& gamma,
                      std::span<const double> weights);

/// Updates `state` with the current loss values, then mixes.
template <typename T>
ad::Var<T> adaptive_mix(MixerState& state, std::span<const ad::Var<T>> losses, const ad::Var<T>& gamma);

// ---------------------------------------------------------------- BEGAN

struct BeganState {
  double k = 0.0;
  double lambda_k = 0.001;
  double gamma_b = 0.7;
  double convergence = 0.0;  // M_t of the last update
};

struct BeganStep {
  double k_used;  // k_t the losses were formed with
  double loss_d;
  double loss_g;
  double convergence;
};

/// L_D = L_real - k L_fake, L_G = L_fake, then
/// k <- clamp(k + lambda_k (gamma_b L_real - L_fake), 0, 1).
BeganStep began_update(BeganState& state, double loss_real, double loss_fake);

}  // namespace ucg::losses

#endif  // UCG_LOSSES_HPP
