#ifndef UCG_HARNESS_GRADSUITE_HPP
#define UCG_HARNESS_GRADSUITE_HPP

#include <cstdint>
#include <vector>

#include "ucg/autodiff/gradcheck.hpp"

namespace ucg::harness {

/// Central-difference checks in double precision of every catalog operator,
/// every loss and every model layer kind plus the four networks. Inputs are
/// redrawn until each non-smooth point (abs arguments, max-pool selection
/// boundary, histogram node crossings) is at least `kink_margin` away.
std::vector<ad::GradCheckReport> run_gradient_suite(std::uint64_t seed, double kink_margin = 1e-3);

}  // namespace ucg::harness

#endif  // UCG_HARNESS_GRADSUITE_HPP
