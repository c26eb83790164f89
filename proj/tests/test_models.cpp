#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "ucg/autodiff/gradcheck.hpp"
#include "ucg/models.hpp"

using namespace ucg;
using namespace ucg::models;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

ModelConfig desk(std::size_t resolution = 32) {
  ModelConfig cfg;
  cfg.resolution = resolution;
  return cfg;
}

ModelConfig tiny(std::size_t resolution = 8) {
  ModelConfig cfg;
  cfg.resolution = resolution;
  cfg.latent_dims = 2;
  cfg.base_channels = 2;
  cfg.max_channels = 4;
  cfg.min_channels = 2;
  cfg.classifier_channels = 1;
  cfg.attributes = {{"age_bin", AttributeSpec::Kind::quantized, 3}, {"gender", AttributeSpec::Kind::categorical, 2}};
  return cfg;
}

ModelConfig full_scale() {
  ModelConfig cfg;
  cfg.resolution = 128;
  cfg.latent_dims = 50;
  cfg.base_channels = 64;
  cfg.max_channels = 1024;
  cfg.classifier_channels = 16;
  return cfg;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(uniform(rng, lo, hi));
  return t;
}

template <typename T>
Tensor<T> random_attributes(const ModelConfig& cfg, std::size_t batch, Rng& rng) {
  Tensor<T> out(Shape{batch, cfg.attribute_width()});
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<std::size_t> labels;
    for (const auto& a : cfg.attributes) labels.push_back(uniform_index(rng, a.arity));
    const auto enc = encode_attributes(cfg.attributes, labels);
    std::copy(enc.begin(), enc.end(), out.data.begin() + static_cast<std::ptrdiff_t>(b * enc.size()));
  }
  return out;
}

std::size_t peak_side(const std::vector<Layer>& layers) {
  std::size_t peak = 0;
  for (const auto& l : layers) {
    if (l.output.size() == 3) peak = std::max(peak, l.output[0]);
  }
  return peak;
}

std::size_t count_kind(const std::vector<Layer>& layers, LayerKind kind) {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [&](const Layer& l) { return l.kind == kind; }));
}

}  // namespace

TEST_CASE("attribute encoding") {
  const auto spec = default_attributes(4);
  const std::size_t labels[] = {2, 1, 3};
  const auto v = encode_attributes(spec, labels);
  REQUIRE(v.size() == 5 + 2 + 5);
  CHECK(v[0] == doctest::Approx(2.0 / 3.0));
  CHECK(v[3] == 1.0f);
  CHECK(v[6] == 1.0f);
  CHECK(v[10] == 1.0f);
  const std::size_t bad[] = {4, 0, 0};
  CHECK_THROWS_AS(encode_attributes(spec, bad), std::out_of_range);
}

TEST_CASE("config validation") {
  auto cfg = desk();
  cfg.resolution = 24;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.resolution = 4;
  CHECK_THROWS_AS(build_encoder<float>(cfg, 0), std::invalid_argument);
  CHECK(desk(32).blocks() == 3);
  CHECK(full_scale().blocks() == 5);
}

TEST_CASE("encoder: full-scale and desk shape rules") {
  const auto full = build_encoder<float>(full_scale(), 1);
  CHECK(full.trunk.back().kind == LayerKind::normalizer);
  CHECK(full.trunk[full.trunk.size() - 2].output == Shape{100});
  CHECK(count_kind(full.trunk, LayerKind::avg_pool) == 5);

  auto enc = build_encoder<float>(desk(), 1);
  CHECK(count_kind(enc.trunk, LayerKind::avg_pool) == 3);
  CHECK(enc.trunk.back().output == Shape{32});

  Rng rng(3);
  Tape<float> tape;
  auto z = enc.forward(enc.bind(tape), tape.constant(random_tensor<float>({2, 32, 32, 3}, rng, 0, 1)), {true});
  REQUIRE(z.shape() == Shape{2, 32});
  for (std::size_t i = 0; i < z.size(); i += 2) {
    const float r = z.value()[i] * z.value()[i] + z.value()[i + 1] * z.value()[i + 1];
    CHECK(std::abs(r - 1.0f) < 1e-5f);
  }
}

TEST_CASE("generator: full-scale tail and desk peak resolution") {
  const auto full = build_generator<float>(full_scale(), 1);
  const auto& t = full.trunk;
  CHECK(peak_side(t) == 256);
  CHECK(t.back().kind == LayerKind::squash);
  CHECK(t[t.size() - 2].kind == LayerKind::avg_pool);
  CHECK(t[t.size() - 2].output == Shape{128, 128, 3});
  CHECK(t[t.size() - 3].output == Shape{256, 256, 3});
  CHECK(full.params.front().value.shape == Shape{100 + 12, 16384});

  auto cfg = desk();
  auto gen = build_generator<float>(cfg, 2);
  CHECK(peak_side(gen.trunk) == 64);
  Rng rng(4);
  Tape<float> tape;
  auto attrs = tape.constant(random_attributes<float>(cfg, 3, rng));
  auto z = tape.constant(latent::sample_codes<float>(cfg.latent, 3, cfg.latent_dims, rng));
  auto img = gen.forward(gen.bind(tape), z, {true}, &attrs);
  CHECK(img.shape() == Shape{3, 32, 32, 3});
  std::size_t peak = 0;
  for (std::size_t i = 0; i < tape.size(); ++i) {
    const auto& s = tape.node(i).shape;
    if (s.size() == 4) peak = std::max(peak, s[1]);
  }
  CHECK(peak == 64);
  CHECK(std::all_of(img.value().begin(), img.value().end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
}

TEST_CASE("discriminator: bottleneck, unfold channels, shape preservation") {
  auto cfg = desk(16);
  auto d = build_discriminator<float>(cfg, 5);
  const auto cond = std::find_if(d.trunk.begin(), d.trunk.end(),
                                 [](const Layer& l) { return l.kind == LayerKind::concat_attributes; });
  REQUIRE(cond != d.trunk.end());
  CHECK(cond->output == Shape{4, 4, cfg.top_channels() + cfg.attribute_width()});
  // The dense layer right after the encoder part is the 2d bottleneck.
  const auto bottleneck = std::find_if(d.trunk.begin(), d.trunk.end(),
                                       [](const Layer& l) { return l.kind == LayerKind::dense; });
  CHECK(bottleneck->output == Shape{cfg.code_width()});
  CHECK(count_kind(d.trunk, LayerKind::normalizer) == 0);

  Rng rng(6);
  Tape<float> tape;
  auto x = tape.constant(random_tensor<float>({2, 16, 16, 3}, rng, 0, 1));
  auto a = tape.constant(random_attributes<float>(cfg, 2, rng));
  auto bound = d.bind(tape);
  auto once = d.forward(bound, x, {true}, &a);
  auto twice = d.forward(bound, once, {true}, &a);
  CHECK(once.shape() == x.shape());
  CHECK(twice.shape() == x.shape());
}

TEST_CASE("attribute classifier: heads, dropout only in training") {
  auto cfg = desk(16);
  auto net = build_attribute_classifier<float>(cfg, 7);
  REQUIRE(net.heads.size() == 3);
  Rng rng(8);
  Tape<float> tape;
  auto x = tape.constant(random_tensor<float>({2, 16, 16, 3}, rng, 0, 1));
  auto bound = net.bind(tape);
  auto eval1 = net.forward_heads(bound, x, {});
  auto eval2 = net.forward_heads(bound, x, {});
  CHECK(eval1[0].shape() == Shape{2, 4});
  CHECK(eval1[1].shape() == Shape{2, 2});
  CHECK(eval1[2].shape() == Shape{2, 5});
  for (std::size_t h = 0; h < 3; ++h) CHECK(eval1[h].value() == eval2[h].value());

  Rng drop_a(1), drop_b(2);
  auto t1 = net.forward_heads(bound, x, {true, false, &drop_a});
  auto t2 = net.forward_heads(bound, x, {true, false, &drop_b});
  CHECK(t1[2].value() != t2[2].value());
  CHECK_THROWS_AS(net.forward_heads(bound, x, {true}), std::invalid_argument);
}

TEST_CASE("catalog and shape audits across resolutions") {
  for (std::size_t r : {8u, 16u, 32u}) {
    CAPTURE(r);
    auto cfg = desk(r);
    auto enc = build_encoder<float>(cfg, 1);
    auto gen = build_generator<float>(cfg, 2);
    auto dis = build_discriminator<float>(cfg, 3);
    auto cls = build_attribute_classifier<float>(cfg, 4);
    for (auto* n : std::vector<const Network<float>*>{&enc, &gen, &dis, &cls}) {
      CHECK_NOTHROW(n->audit());
      CHECK_FALSE(n->ops().contains("max_pool"));
    }
    Tape<float> tape;
    auto img = tape.constant(Tensor<float>({2, r, r, 3}, 0.0f));
    auto attrs = tape.constant(Tensor<float>({2, cfg.attribute_width()}, 0.0f));
    auto code = tape.constant(Tensor<float>({2, cfg.code_width()}, 0.0f));
    CHECK(enc.forward(enc.bind(tape), img, {}).shape() == Shape{2, cfg.code_width()});
    CHECK(gen.forward(gen.bind(tape), code, {}, &attrs).shape() == Shape{2, r, r, 3});
    CHECK(dis.forward(dis.bind(tape), img, {}, &attrs).shape() == Shape{2, r, r, 3});
    auto heads = cls.forward_heads(cls.bind(tape), img, {});
    for (std::size_t h = 0; h < heads.size(); ++h) CHECK(heads[h].shape() == Shape{2, cfg.attributes[h].arity});
    CHECK_NOTHROW(audit_tape(tape));
  }
}

TEST_CASE("generator is differentiable end to end and feeds the encoder") {
  auto cfg = desk(16);
  auto gen = build_generator<float>(cfg, 11);
  auto enc = build_encoder<float>(cfg, 12);
  Rng rng(13);
  Tape<float> tape;
  auto bound = gen.bind(tape);
  auto attrs = tape.constant(random_attributes<float>(cfg, 4, rng));
  auto z = tape.constant(latent::sample_codes<float>(cfg.latent, 4, cfg.latent_dims, rng));
  auto img = gen.forward(bound, z, {true}, &attrs);
  tape.backward(ad::sum(img));
  const auto grads = gen.gradients(tape, bound);
  std::size_t i = 0;
  for (const auto& p : gen.params) {
    if (!p.trainable) continue;
    CAPTURE(p.name);
    const auto& g = grads[i++].data;
    CHECK(std::all_of(g.begin(), g.end(), [](float v) { return std::isfinite(v); }));
    CHECK(std::any_of(g.begin(), g.end(), [](float v) { return v != 0.0f; }));
  }
  CHECK(enc.forward(enc.bind(tape), img, {true}).shape() == Shape{4, cfg.code_width()});
}

TEST_CASE("vector mode networks") {
  ModelConfig cfg;
  cfg.mode = Mode::vector;
  cfg.latent_dims = 1;
  cfg.hidden = 16;
  cfg.attributes = {};
  auto enc = build_encoder<float>(cfg, 1);
  auto gen = build_generator<float>(cfg, 2);
  auto dis = build_discriminator<float>(cfg, 3);
  CHECK_THROWS_AS(build_attribute_classifier<float>(cfg, 4), std::invalid_argument);
  Tape<float> tape;
  Rng rng(1);
  auto pts = tape.constant(random_tensor<float>({5, 2}, rng));
  auto z = enc.forward(enc.bind(tape), pts, {true});
  CHECK(z.shape() == Shape{5, 2});
  CHECK(gen.forward(gen.bind(tape), z, {true}).shape() == Shape{5, 2});
  CHECK(dis.forward(dis.bind(tape), pts, {true}).shape() == Shape{5, 2});
  CHECK(count_kind(dis.trunk, LayerKind::dense) == 4);
}

TEST_CASE("frozen bindings pass values and block gradients") {
  auto cfg = tiny();
  auto enc = build_encoder<double>(cfg, 1);
  Rng rng(2);
  Tape<double> tape;
  auto live = enc.bind(tape);
  auto frozen = Network<double>::frozen(live);
  auto x = tape.constant(random_tensor<double>({3, 8, 8, 3}, rng, 0, 1));
  auto a = enc.forward(live, x, {true});
  auto b = enc.forward(frozen, x, {true});
  CHECK(a.value() == b.value());
  tape.backward(ad::sum(ad::square(b)));
  for (const auto& g : enc.gradients(tape, live)) {
    CHECK(std::all_of(g.data.begin(), g.data.end(), [](double v) { return v == 0.0; }));
  }
}

TEST_CASE("batch norm running statistics update only on request") {
  auto cfg = tiny();
  auto enc = build_encoder<float>(cfg, 1);
  const auto before = enc.params;
  Rng rng(3);
  Tape<float> tape;
  auto x = tape.constant(random_tensor<float>({4, 8, 8, 3}, rng, 0, 1));
  enc.forward(enc.bind(tape), x, {true});
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(enc.params[i].value == before[i].value);
  enc.forward(enc.bind(tape), x, {true, true});
  bool moved = false;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (!before[i].trainable && enc.params[i].value != before[i].value) moved = true;
  }
  CHECK(moved);
}

TEST_CASE("parameters round-trip through checkpoint entries") {
  auto cfg = tiny();
  auto gen = build_generator<float>(cfg, 1);
  std::vector<ad::NamedTensor> entries;
  append_parameters(gen, entries);
  CHECK(entries.front().name.rfind("G/", 0) == 0);
  auto other = build_generator<float>(cfg, 99);
  load_parameters<float>(other, entries);
  for (std::size_t i = 0; i < gen.params.size(); ++i) CHECK(other.params[i].value == gen.params[i].value);
  entries.pop_back();
  CHECK_THROWS_AS(load_parameters<float>(other, entries), ad::CheckpointError);
}

TEST_CASE("network gradients match finite differences") {
  auto cfg = tiny();
  Rng rng(5);
  auto check = [&](Network<double>& net, bool with_attrs, const Tensor<double>& input) {
    std::vector<Tensor<double>> inputs;
    std::vector<std::size_t> slot;
    for (const auto& p : net.params) {
      slot.push_back(p.trainable ? inputs.size() : SIZE_MAX);
      if (p.trainable) inputs.push_back(p.value);
    }
    const auto attrs = random_attributes<double>(cfg, input.shape[0], rng);
    const auto weights = random_tensor<double>({1}, rng);
    ad::GradCheckOptions opts;
    opts.max_coords = 6;
    opts.seed = 17;
    const auto report = ad::check_gradients(net.name, inputs, [&](auto& t, auto in) {
      Binding<double> b;
      for (std::size_t i = 0; i < net.params.size(); ++i) {
        b.vars.push_back(slot[i] == SIZE_MAX ? t.constant(net.params[i].value) : in[slot[i]]);
      }
      auto a = t.constant(attrs);
      auto out = net.forward(b, t.constant(input), {true}, with_attrs ? &a : nullptr);
      return ad::sum(ad::square(out)) * weights[0];
    }, opts);
    CHECK(report.max_rel_error <= 1e-4);
  };
  auto enc = build_encoder<double>(cfg, 1);
  auto gen = build_generator<double>(cfg, 2);
  auto dis = build_discriminator<double>(cfg, 3);
  check(enc, false, random_tensor<double>({3, 8, 8, 3}, rng, 0, 1));
  check(gen, true, latent::sample_codes<double>(cfg.latent, 3, cfg.latent_dims, rng));
  check(dis, true, random_tensor<double>({3, 8, 8, 3}, rng, 0, 1));
}
