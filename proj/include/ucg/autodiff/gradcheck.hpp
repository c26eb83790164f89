#ifndef UCG_AUTODIFF_GRADCHECK_HPP
#define UCG_AUTODIFF_GRADCHECK_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ucg/autodiff/tape.hpp"

namespace ucg::ad {

struct GradCheckOptions {
  double step = 1e-5;       // central difference half-width
  double tolerance = 1e-4;  // on relative_error
  // Coordinates checked per input; 0 checks all of them. A subset is drawn
  // with `seed`.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = false;
};

/// |a - n| / max(|a|, |n|, 1e-4): relative for gradients of ordinary
/// magnitude, absolute below the floor.
double relative_error(double analytic, double numeric);

/// Builds a scalar loss from leaves on a fresh tape. Called once for the
/// analytic gradient and twice per checked coordinate, so it must be a pure
/// function of the leaf values.
using LossBuilder = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

GradCheckReport check_gradients(std::string name, const std::vector<Tensor<double>>& inputs,
                                const LossBuilder& loss, const GradCheckOptions& options = {});

}  // namespace ucg::ad

#endif  // UCG_AUTODIFF_GRADCHECK_HPP
