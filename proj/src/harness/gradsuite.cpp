#include "ucg/harness/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ucg/latent.hpp"
#include "ucg/losses.hpp"
#include "ucg/models.hpp"
#include "ucg/rng.hpp"

namespace ucg::harness {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

using Inputs = std::vector<Tensor<double>>;
using Args = std::span<const Var<double>>;

struct Case {
  std::string name;
  std::function<Inputs(Rng&)> draw;
  ad::LossBuilder loss;
  // Distance of the drawn inputs to the nearest non-smooth point beyond the
  // abs arguments found on the tape.
  std::function<double(const Inputs&)> margin;
  std::size_t max_coords = 0;
};

Tensor<double> uniform_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = uniform(rng, lo, hi);
  return t;
}

// Sum of the output times fixed random weights, so errors cannot cancel.
Var<double> weigh(const Var<double>& v, const Tensor<double>& w) {
  auto flat = ad::reshape(v, {v.size()});
  Tensor<double> cut(Shape{v.size()}, std::vector<double>(w.data.begin(), w.data.begin() + static_cast<std::ptrdiff_t>(v.size())));
  return ad::sum(flat * v.tape()->constant(std::move(cut)));
}

double abs_margin(const Inputs& in, const ad::LossBuilder& loss) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : in) vars.push_back(tape.constant(t));
  loss(tape, vars);
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t id = 0; id < tape.size(); ++id) {
    const auto& node = tape.node(id);
    if (node.op != "abs") continue;
    for (double v : tape.value(node.inputs[0])) m = std::min(m, std::fabs(v));
  }
  return m;
}

double selection_margin(std::vector<double> v, std::size_t kept) {
  if (kept >= v.size()) return std::numeric_limits<double>::infinity();
  std::sort(v.begin(), v.end(), std::greater<>());
  return v[kept - 1] - v[kept];
}

double node_margin(const std::vector<double>& angles, std::size_t k) {
  const double spacing = 2.0 * std::numbers::pi / static_cast<double>(k);
  double m = std::numeric_limits<double>::infinity();
  for (double a : angles) {
    const double pos = (a + std::numbers::pi) / spacing;
    m = std::min(m, std::fabs(pos - std::round(pos)) * spacing);
  }
  return m;
}

models::ModelConfig tiny_model(models::Mode mode) {
  models::ModelConfig cfg;
  cfg.mode = mode;
  cfg.resolution = 8;
  cfg.latent_dims = 2;
  cfg.base_channels = 2;
  cfg.max_channels = 4;
  cfg.min_channels = 2;
  cfg.classifier_channels = 1;
  cfg.hidden = 5;
  cfg.attributes = {{"age_bin", models::AttributeSpec::Kind::quantized, 3},
                    {"gender", models::AttributeSpec::Kind::categorical, 2}};
  return cfg;
}

// Trainable parameters become the checked inputs; buffers stay constants.
Case network_case(std::string name, models::Network<double> net, Tensor<double> x, Tensor<double> attrs,
                  std::uint64_t seed, bool heads) {
  auto shared = std::make_shared<models::Network<double>>(std::move(net));
  Rng wrng = derive(seed, 77);
  auto weights = uniform_tensor({4096}, wrng);
  Case c;
  c.name = std::move(name);
  c.max_coords = 4;
  c.draw = [shared](Rng&) {
    Inputs in;
    for (const auto& p : shared->params) {
      if (p.trainable) in.push_back(p.value);
    }
    return in;
  };
  c.loss = [shared, x, attrs, weights, seed, heads](Tape<double>& t, Args in) {
    models::Binding<double> b;
    std::size_t slot = 0;
    for (const auto& p : shared->params) b.vars.push_back(p.trainable ? in[slot++] : t.constant(p.value));
    Rng mask = derive(seed, 78);  // same dropout masks on every evaluation
    const models::ForwardOptions opts{true, false, &mask};
    const auto xv = t.constant(x);
    if (heads) {
      Var<double> total;
      for (const auto& h : shared->forward_heads(b, xv, opts)) {
        const auto w = weigh(h, weights);
        total = total.valid() ? total + w : w;
      }
      return total;
    }
    const auto a = t.constant(attrs);
    return weigh(shared->forward(b, xv, opts, attrs.empty() ? nullptr : &a), weights);
  };
  return c;
}

Tensor<double> attribute_batch(const models::ModelConfig& cfg, std::size_t batch, Rng& rng) {
  Tensor<double> out(Shape{batch, cfg.attribute_width()});
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<std::size_t> labels;
    for (const auto& a : cfg.attributes) labels.push_back(uniform_index(rng, a.arity));
    const auto row = models::encode_attributes(cfg.attributes, labels);
    std::copy(row.begin(), row.end(), out.data.begin() + static_cast<std::ptrdiff_t>(b * row.size()));
  }
  return out;
}

std::vector<Case> build_cases(std::uint64_t seed) {
  Rng setup = derive(seed, 70);
  const auto w = uniform_tensor({256}, setup);
  std::vector<Case> cases;
  const auto add = [&](std::string name, std::function<Inputs(Rng&)> draw, ad::LossBuilder loss,
                       std::function<double(const Inputs&)> margin = {}) {
    cases.push_back({std::move(name), std::move(draw), std::move(loss), std::move(margin), 0});
  };
  const auto unary = [&](std::string name, double lo, double hi, std::function<Var<double>(const Var<double>&)> f) {
    add(std::move(name), [lo, hi](Rng& r) { return Inputs{uniform_tensor({2, 3}, r, lo, hi)}; },
        [f, w](Tape<double>&, Args in) { return weigh(f(in[0]), w); });
  };

  // ---- catalog operators
  add("add", [](Rng& r) { return Inputs{uniform_tensor({2, 3}, r), uniform_tensor({3}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(in[0] + in[1], w); });
  add("sub", [](Rng& r) { return Inputs{uniform_tensor({2, 3}, r), uniform_tensor({2, 1}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(in[0] - in[1], w); });
  add("mul", [](Rng& r) { return Inputs{uniform_tensor({2, 3}, r), uniform_tensor({2, 3}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(in[0] * in[1], w); });
  add("div", [](Rng& r) { return Inputs{uniform_tensor({2, 3}, r), uniform_tensor({2, 3}, r, 0.5, 2)}; },
      [w](Tape<double>&, Args in) { return weigh(in[0] / in[1], w); });
  add("atan2", [](Rng& r) { return Inputs{uniform_tensor({6}, r), uniform_tensor({6}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::atan2(in[0], in[1]), w); },
      [](const Inputs& in) {
        // Branch cut on the negative x axis.
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < 6; ++i) {
          m = std::min(m, std::hypot(in[0][i], in[1][i]));
          if (in[1][i] < 0) m = std::min(m, std::fabs(in[0][i]));
        }
        return m;
      });
  unary("abs", -1, 1, [](const Var<double>& x) { return ad::abs(x); });
  unary("exp", -1, 1, [](const Var<double>& x) { return ad::exp(x); });
  unary("log", 0.2, 3, [](const Var<double>& x) { return ad::log(x); });
  unary("sqrt", 0.2, 3, [](const Var<double>& x) { return ad::sqrt(x); });
  unary("square", -1, 1, [](const Var<double>& x) { return ad::square(x); });
  unary("elu", -2, 2, [](const Var<double>& x) { return ad::elu(x); });
  unary("tanh", -2, 2, [](const Var<double>& x) { return ad::tanh(x); });
  add("matmul", [](Rng& r) { return Inputs{uniform_tensor({2, 3}, r), uniform_tensor({3, 4}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::matmul(in[0], in[1]), w); });
  add("conv2d", [](Rng& r) { return Inputs{uniform_tensor({2, 4, 3, 2}, r), uniform_tensor({3, 3, 2, 2}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::conv2d(in[0], in[1]), w); });
  add("conv2d_1x3", [](Rng& r) { return Inputs{uniform_tensor({1, 3, 4, 1}, r), uniform_tensor({1, 3, 1, 2}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::conv2d(in[0], in[1]), w); });
  add("avg_pool", [](Rng& r) { return Inputs{uniform_tensor({1, 4, 4, 2}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::avg_pool(in[0], 2, 2, false), w); });
  add("avg_pool_same", [](Rng& r) { return Inputs{uniform_tensor({1, 5, 4, 1}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::avg_pool(in[0], 3, 2, true), w); });
  add("upsample_nearest", [](Rng& r) { return Inputs{uniform_tensor({1, 2, 2, 2}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::upsample_nearest(in[0], 2), w); });
  add("softmax", [](Rng& r) { return Inputs{uniform_tensor({2, 4}, r, -2, 2)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::softmax(in[0]), w); });
  add("sum", [](Rng& r) { return Inputs{uniform_tensor({2, 3, 2}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::sum(in[0], {1}), w); });
  add("mean", [](Rng& r) { return Inputs{uniform_tensor({2, 3, 2}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::mean(in[0], {0, 2}, true), w); });
  const auto gap_of = [](const Inputs& in, std::size_t rows, std::size_t cols, bool along_rows) {
    double m = std::numeric_limits<double>::infinity();
    const std::size_t groups = along_rows ? rows : cols, len = along_rows ? cols : rows;
    for (std::size_t g = 0; g < groups; ++g) {
      std::vector<double> v;
      for (std::size_t e = 0; e < len; ++e) v.push_back(in[0][along_rows ? g * cols + e : e * cols + g]);
      std::sort(v.begin(), v.end());
      m = std::min({m, v[1] - v[0], v[len - 1] - v[len - 2]});
    }
    return m;
  };
  add("min", [](Rng& r) { return Inputs{uniform_tensor({2, 3}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::min(in[0], {1}), w); },
      [gap_of](const Inputs& in) { return gap_of(in, 2, 3, true); });
  add("max", [](Rng& r) { return Inputs{uniform_tensor({3, 2}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::max(in[0], {0}), w); },
      [gap_of](const Inputs& in) { return gap_of(in, 3, 2, false); });
  add("concat", [](Rng& r) { return Inputs{uniform_tensor({2, 2}, r), uniform_tensor({2, 1}, r)}; },
      [w](Tape<double>&, Args in) {
        std::vector<Var<double>> parts{in[0], in[1]};
        return weigh(ad::concat<double>(parts, 1), w);
      });
  add("reshape", [](Rng& r) { return Inputs{uniform_tensor({2, 3}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(ad::square(ad::reshape(in[0], {3, 2})), w); });

  // ---- latent
  add("normalize_pairs", [](Rng& r) { return Inputs{uniform_tensor({3, 4}, r, 0.3, 1.5)}; },
      [w](Tape<double>&, Args in) { return weigh(latent::normalize_pairs(in[0]), w); });
  add("angles_of", [](Rng& r) { return Inputs{uniform_tensor({3, 4}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(latent::angles_of(in[0]), w); },
      [](const Inputs& in) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < 6; ++p) {
          const double x = in[0][2 * p], y = in[0][2 * p + 1];
          m = std::min(m, std::hypot(x, y));
          if (x < 0) m = std::min(m, std::fabs(y));
        }
        return m;
      });

  // ---- losses
  add("cyclic_histogram_entropy", [](Rng& r) { return Inputs{uniform_tensor({12, 2}, r, -3.1, 3.1)}; },
      [](Tape<double>&, Args in) { return losses::latent_entropy_loss(in[0], 8); },
      [](const Inputs& in) { return node_margin(in[0].data, 8); });
  add("recon_image_loss", [](Rng& r) { return Inputs{uniform_tensor({2, 4, 3, 3}, r, 0, 1), uniform_tensor({2, 4, 3, 3}, r, 0, 1)}; },
      [w](Tape<double>&, Args in) { return weigh(losses::recon_image_loss(in[0], in[1]), w); });
  add("recon_vector_loss", [](Rng& r) { return Inputs{uniform_tensor({4, 2}, r), uniform_tensor({4, 2}, r)}; },
      [w](Tape<double>&, Args in) { return weigh(losses::recon_vector_loss(in[0], in[1]), w); });
  add("loss_max_pool", [](Rng& r) { return Inputs{uniform_tensor({3, 4}, r, 0, 2)}; },
      [](Tape<double>&, Args in) { return losses::loss_max_pool(ad::square(in[0]), 0.3); },
      [](const Inputs& in) {
        std::vector<double> sq;
        for (double v : in[0].data) sq.push_back(v * v);
        return selection_margin(sq, 4);
      });
  add("latent_identity_loss", [](Rng& r) { return Inputs{uniform_tensor({3, 4}, r), uniform_tensor({3, 4}, r)}; },
      [](Tape<double>&, Args in) { return losses::latent_identity_loss(in[0], in[1]); });
  const std::vector<std::size_t> bins{0, 3, 1};
  add("locality_loss", [](Rng& r) { return Inputs{uniform_tensor({3, 4}, r, -2, 2)}; },
      [bins](Tape<double>&, Args in) { return losses::locality_loss(in[0], bins, 1.5); });
  add("softargmax", [](Rng& r) { return Inputs{uniform_tensor({3, 4}, r, -2, 2)}; },
      [w](Tape<double>&, Args in) { return weigh(losses::softargmax(in[0], 2.0), w); });
  const std::vector<std::size_t> labels{1, 0, 2};
  add("focal_loss", [](Rng& r) { return Inputs{uniform_tensor({3, 3}, r, -2, 2)}; },
      [labels](Tape<double>&, Args in) { return losses::focal_loss(ad::softmax(in[0]), labels, 2.0); });
  add("cross_entropy", [](Rng& r) { return Inputs{uniform_tensor({3, 3}, r, -2, 2)}; },
      [labels](Tape<double>&, Args in) { return losses::focal_loss(ad::softmax(in[0]), labels, 0.0); });
  add("mix_losses", [](Rng& r) { return Inputs{uniform_tensor({3}, r, 0.1, 2), uniform_tensor({3}, r, 0.3, 1.5)}; },
      [](Tape<double>& t, Args in) {
        std::vector<Var<double>> parts;
        for (std::size_t i = 0; i < 3; ++i) {
          Tensor<double> pick(Shape{3});
          pick[i] = 1;
          parts.push_back(ad::sum(in[0] * t.constant(pick)));
        }
        const std::vector<double> weights{0.5, 2.0, 1.25};
        return losses::mix_losses<double>(parts, in[1], weights);
      });

  // ---- networks
  const std::size_t batch = 3;
  const auto image = tiny_model(models::Mode::image);
  const auto vec = tiny_model(models::Mode::vector);
  Rng net_rng = derive(seed, 71);
  const auto pick = [&net_rng] { return net_rng(); };
  cases.push_back(network_case("encoder", models::build_encoder<double>(image, pick()),
                               uniform_tensor({batch, 8, 8, 3}, setup, 0, 1), {}, seed, false));
  cases.push_back(network_case("generator", models::build_generator<double>(image, pick()),
                               latent::sample_codes<double>(image.latent, batch, image.latent_dims, setup),
                               attribute_batch(image, batch, setup), seed, false));
  cases.push_back(network_case("discriminator", models::build_discriminator<double>(image, pick()),
                               uniform_tensor({batch, 8, 8, 3}, setup, 0, 1), attribute_batch(image, batch, setup),
                               seed, false));
  cases.push_back(network_case("attribute_classifier", models::build_attribute_classifier<double>(image, pick()),
                               uniform_tensor({batch, 8, 8, 3}, setup, 0, 1), {}, seed, true));
  cases.push_back(network_case("vector_encoder", models::build_encoder<double>(vec, pick()),
                               uniform_tensor({batch, 2}, setup, -2, 2), {}, seed, false));
  cases.push_back(network_case("vector_generator", models::build_generator<double>(vec, pick()),
                               latent::sample_codes<double>(vec.latent, batch, vec.latent_dims, setup),
                               attribute_batch(vec, batch, setup), seed, false));
  cases.push_back(network_case("vector_discriminator", models::build_discriminator<double>(vec, pick()),
                               uniform_tensor({batch, 2}, setup, -2, 2), attribute_batch(vec, batch, setup), seed,
                               false));
  return cases;
}

}  // namespace

std::vector<ad::GradCheckReport> run_gradient_suite(std::uint64_t seed, double kink_margin) {
  std::vector<ad::GradCheckReport> out;
  auto cases = build_cases(seed);
  for (std::size_t idx = 0; idx < cases.size(); ++idx) {
    const auto& c = cases[idx];
    Rng rng = derive(seed, 100 + idx);
    Inputs in = c.draw(rng);
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double m = std::min(abs_margin(in, c.loss), c.margin ? c.margin(in) : std::numeric_limits<double>::infinity());
      if (m >= kink_margin) break;
      if (attempt == 199) throw std::runtime_error("gradient suite: no kink-free draw for " + c.name);
      in = c.draw(rng);
    }
    ad::GradCheckOptions opts;
    opts.max_coords = c.max_coords;
    opts.seed = seed;
    out.push_back(ad::check_gradients(c.name, in, c.loss, opts));
  }
  return out;
}

}  // namespace ucg::harness
