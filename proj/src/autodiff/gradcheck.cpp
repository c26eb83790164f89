#include "ucg/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ucg::ad {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const std::vector<Tensor<double>>& inputs, const LossBuilder& loss) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.constant(t));
  return loss(tape, leaves).item();
}

}  // namespace

GradCheckReport check_gradients(std::string name, const std::vector<Tensor<double>>& inputs,
                                const LossBuilder& loss, const GradCheckOptions& options) {
  GradCheckReport report;
  report.name = std::move(name);

  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    auto l = loss(tape, leaves);
    tape.backward(l);
    for (const auto& v : leaves) analytic.push_back(tape.grad(v));
  }

  std::mt19937_64 rng(options.seed);
  auto probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<std::size_t> coords(inputs[k].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords > 0 && coords.size() > options.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords);
    }
    for (std::size_t c : coords) {
      const double x0 = inputs[k][c];
      probe[k][c] = x0 + options.step;
      const double up = evaluate(probe, loss);
      probe[k][c] = x0 - options.step;
      const double down = evaluate(probe, loss);
      probe[k][c] = x0;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][c];
      report.max_abs_error = std::max(report.max_abs_error, std::abs(a - numeric));
      report.max_rel_error = std::max(report.max_rel_error, relative_error(a, numeric));
      ++report.checked;
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

}  // namespace ucg::ad
