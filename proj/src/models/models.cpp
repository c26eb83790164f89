#include "ucg/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <stdexcept>

namespace ucg::models {

using ad::Shape;
using ad::Tensor;
using ad::Var;

std::vector<AttributeSpec> default_attributes(std::size_t age_bins) {
  return {{"age_bin", AttributeSpec::Kind::quantized, age_bins},
          {"gender", AttributeSpec::Kind::categorical, 2},
          {"ethnicity", AttributeSpec::Kind::categorical, 5}};
}

std::vector<float> encode_attributes(const std::vector<AttributeSpec>& spec, std::span<const std::size_t> labels) {
  if (labels.size() != spec.size()) {
    throw std::invalid_argument("encode_attributes: expected " + std::to_string(spec.size()) + " labels");
  }
  std::vector<float> out;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const auto& a = spec[i];
    if (labels[i] >= a.arity) {
      throw std::out_of_range("attribute " + a.name + ": label " + std::to_string(labels[i]) + " out of range");
    }
    if (a.kind == AttributeSpec::Kind::quantized) {
      out.push_back(a.arity > 1 ? static_cast<float>(labels[i]) / static_cast<float>(a.arity - 1) : 0.0f);
    }
    for (std::size_t c = 0; c < a.arity; ++c) out.push_back(c == labels[i] ? 1.0f : 0.0f);
  }
  return out;
}

std::size_t ModelConfig::attribute_width() const {
  std::size_t w = 0;
  for (const auto& a : attributes) w += a.width();
  return w;
}

std::size_t ModelConfig::blocks() const {
  return static_cast<std::size_t>(std::bit_width(resolution)) - 3;
}

std::size_t ModelConfig::top_channels() const {
  return std::min(base_channels << (blocks() - 1), max_channels);
}

void ModelConfig::validate() const {
  if (latent_dims == 0) throw std::invalid_argument("model: latent_dims must be positive");
  if (mode == Mode::vector) {
    if (hidden == 0 || point_dims == 0) throw std::invalid_argument("model: vector widths must be positive");
    return;
  }
  if (resolution < 8 || !std::has_single_bit(resolution)) {
    throw std::invalid_argument("model: resolution must be a power of two >= 8, got " + std::to_string(resolution));
  }
  if (base_channels == 0 || max_channels == 0 || min_channels == 0 || classifier_channels == 0) {
    throw std::invalid_argument("model: channel counts must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("model: dropout must lie in [0, 1)");
  for (const auto& a : attributes) {
    if (a.arity == 0) throw std::invalid_argument("model: attribute " + a.name + " has no classes");
  }
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv: return "conv";
    case LayerKind::conv_bias: return "conv_bias";
    case LayerKind::batch_norm: return "bn";
    case LayerKind::elu: return "elu";
    case LayerKind::avg_pool: return "avg_pool";
    case LayerKind::upsample: return "upsample";
    case LayerKind::reshape: return "reshape";
    case LayerKind::concat_attributes: return "concat_attributes";
    case LayerKind::normalizer: return "normalizer";
    case LayerKind::squash: return "squash";
    case LayerKind::dropout: return "dropout";
  }
  return "?";
}

std::vector<std::string_view> Layer::ops() const {
  switch (kind) {
    case LayerKind::dense: return {"matmul", "add"};
    case LayerKind::conv: return {"conv2d"};
    case LayerKind::conv_bias: return {"conv2d", "add"};
    case LayerKind::batch_norm: return {"mean", "sub", "square", "add", "sqrt", "div", "mul"};
    case LayerKind::elu: return {"elu"};
    case LayerKind::avg_pool: return {"avg_pool"};
    case LayerKind::upsample: return {"upsample_nearest"};
    case LayerKind::reshape: return {"reshape"};
    case LayerKind::concat_attributes: return {"reshape", "mul", "concat"};
    case LayerKind::normalizer: return {"reshape", "square", "sum", "add", "sqrt", "div", "tanh"};
    case LayerKind::squash: return {"tanh", "add", "mul"};
    case LayerKind::dropout: return {"mul"};
  }
  return {};
}

// ---------------------------------------------------------------- network

template <typename T>
Binding<T> Network<T>::bind(ad::Tape<T>& tape) const {
  Binding<T> b;
  for (const auto& p : params) b.vars.push_back(p.trainable ? tape.leaf(p.value) : tape.constant(p.value));
  return b;
}

template <typename T>
Binding<T> Network<T>::bind_constant(ad::Tape<T>& tape) const {
  Binding<T> b;
  for (const auto& p : params) b.vars.push_back(tape.constant(p.value));
  return b;
}

template <typename T>
Binding<T> Network<T>::frozen(const Binding<T>& live) {
  Binding<T> b;
  for (const auto& v : live.vars) b.vars.push_back(v.requires_grad() ? ad::stop_gradient(v) : v);
  return b;
}

template <typename T>
Var<T> Network<T>::forward(const Binding<T>& bound, const Var<T>& x, const ForwardOptions& opts,
                           const Var<T>* attributes) {
  if (!heads.empty()) throw std::logic_error(name + ": network has heads, use forward_heads");
  return run(trunk, bound, x, opts, attributes);
}

template <typename T>
std::vector<Var<T>> Network<T>::forward_heads(const Binding<T>& bound, const Var<T>& x, const ForwardOptions& opts) {
  auto shared = run(trunk, bound, x, opts, nullptr);
  std::vector<Var<T>> out;
  for (const auto& head : heads) out.push_back(run(head, bound, shared, opts, nullptr));
  return out;
}

template <typename T>
Var<T> Network<T>::run(const std::vector<Layer>& layers, const Binding<T>& bound, Var<T> x,
                       const ForwardOptions& opts, const Var<T>* attributes) {
  if (bound.vars.size() != params.size()) throw std::invalid_argument(name + ": binding does not match network");
  Shape expected{x.shape().front()};
  expected.insert(expected.end(), input_shape.begin(), input_shape.end());
  if (&layers == &trunk && x.shape() != expected) {
    throw ad::ShapeError(name + ": input " + ad::to_string(x.shape()) + ", expected " + ad::to_string(expected));
  }
  auto& tape = *x.tape();
  const std::size_t batch = x.shape().front();
  auto p = [&](const Layer& l, std::size_t i) { return bound.vars[l.params[i]]; };

  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::dense:
        x = ad::matmul(x, p(l, 0)) + p(l, 1);
        break;
      case LayerKind::conv:
        x = ad::conv2d(x, p(l, 0));
        break;
      case LayerKind::conv_bias:
        x = ad::conv2d(x, p(l, 0)) + p(l, 1);
        break;
      case LayerKind::batch_norm: {
        std::vector<int> axes;
        for (std::size_t a = 0; a + 1 < x.shape().size(); ++a) axes.push_back(static_cast<int>(a));
        const auto eps = static_cast<T>(norm_epsilon);
        if (opts.training) {
          auto mu = ad::mean(x, axes, true);
          auto centered = x - mu;
          auto var = ad::mean(ad::square(centered), axes, true);
          x = centered / ad::sqrt(var + eps) * p(l, 0) + p(l, 1);
          if (opts.update_stats) {
            const auto m = static_cast<T>(stats_momentum);
            auto& rm = params[l.params[2]].value.data;
            auto& rv = params[l.params[3]].value.data;
            for (std::size_t c = 0; c < rm.size(); ++c) {
              rm[c] = (T(1) - m) * rm[c] + m * mu.value()[c];
              rv[c] = (T(1) - m) * rv[c] + m * var.value()[c];
            }
          }
        } else {
          x = (x - p(l, 2)) / ad::sqrt(p(l, 3) + eps) * p(l, 0) + p(l, 1);
        }
        break;
      }
      case LayerKind::elu:
        x = ad::elu(x);
        break;
      case LayerKind::avg_pool:
        x = ad::avg_pool(x, l.window, l.stride, l.same_padding);
        break;
      case LayerKind::upsample:
        x = ad::upsample_nearest(x, l.factor);
        break;
      case LayerKind::reshape: {
        Shape s{batch};
        s.insert(s.end(), l.shape.begin(), l.shape.end());
        x = ad::reshape(x, std::move(s));
        break;
      }
      case LayerKind::concat_attributes: {
        if (!attributes) throw std::invalid_argument(name + ": attribute vector required");
        const auto& as = attributes->shape();
        if (as.size() != 2 || as[0] != batch) {
          throw ad::ShapeError(name + ": attributes " + ad::to_string(as) + " for batch " + std::to_string(batch));
        }
        std::vector<Var<T>> parts{x};
        if (x.shape().size() == 2) {
          parts.push_back(*attributes);
          x = ad::concat<T>(parts, 1);
        } else {
          const Shape& s = x.shape();
          auto planes = ad::reshape(*attributes, {batch, 1, 1, as[1]}) *
                        tape.constant(Tensor<T>(Shape{1, s[1], s[2], 1}, T(1)));
          parts.push_back(planes);
          x = ad::concat<T>(parts, 3);
        }
        break;
      }
      case LayerKind::normalizer:
        x = latent::apply_normalizer(latent, x);
        break;
      case LayerKind::squash:
        x = T(0.5) * (ad::tanh(x) + T(1));
        break;
      case LayerKind::dropout: {
        if (!opts.training || l.rate <= 0) break;
        if (!opts.rng) throw std::invalid_argument(name + ": dropout in training needs an rng");
        Tensor<T> mask(x.shape());
        const T keep = static_cast<T>(1.0 - l.rate);
        std::bernoulli_distribution draw(1.0 - l.rate);
        for (auto& m : mask.data) m = draw(*opts.rng) ? T(1) / keep : T(0);
        x = x * tape.constant(std::move(mask));
        break;
      }
    }
  }
  return x;
}

template <typename T>
std::vector<Tensor<T>> Network<T>::gradients(const ad::Tape<T>& tape, const Binding<T>& bound) const {
  std::vector<Tensor<T>> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].trainable) out.push_back(tape.grad(bound.vars[i]));
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>*> Network<T>::trainable() {
  std::vector<Tensor<T>*> out;
  for (auto& p : params) {
    if (p.trainable) out.push_back(&p.value);
  }
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

template <typename T>
std::set<std::string_view> Network<T>::ops() const {
  std::set<std::string_view> out;
  auto collect = [&](const std::vector<Layer>& layers) {
    for (const auto& l : layers) {
      for (auto op : l.ops()) out.insert(op);
    }
  };
  collect(trunk);
  for (const auto& h : heads) collect(h);
  return out;
}

template <typename T>
void Network<T>::audit() const {
  const auto& catalog = ad::OpCatalog::builtin();
  for (auto op : ops()) {
    if (ad::OpCatalog::is_forbidden(op) || !catalog.contains(op)) {
      throw ad::UnknownOpError(name + ": operator '" + std::string(op) + "' is not in the catalog");
    }
  }
}

template <typename T>
void audit_tape(const ad::Tape<T>& tape) {
  const auto& catalog = ad::OpCatalog::builtin();
  for (std::size_t i = 0; i < tape.size(); ++i) {
    const auto op = tape.node(i).op;
    if (op == "leaf" || op == "constant") continue;
    if (!catalog.contains(op)) throw ad::UnknownOpError("tape records non-catalog operator '" + std::string(op) + "'");
  }
}

// ---------------------------------------------------------------- builders

namespace {

// Appends layers while tracking the activation shape and naming parameters.
template <typename T>
class Builder {
 public:
  Builder(Network<T>& net, std::uint64_t seed, Shape input) : net_(net), rng_(seed), shape_(std::move(input)) {
    net_.input_shape = shape_;
  }

  /// Starts a new head reading from the activation shape `from`.
  void into_head(Shape from) {
    net_.heads.emplace_back();
    ++head_;
    shape_ = std::move(from);
  }

  const Shape& shape() const { return shape_; }

  void dense(std::size_t out) {
    const std::size_t in = shape_.back();
    const auto id = layer_id("dense");
    Layer l{LayerKind::dense};
    l.params = {weight(id, {in, out}, in), filled(id + "/b", {out}, T(0), true)};
    shape_ = {out};
    push(l);
  }

  // "conv" in the architecture tables: convolution, batch norm, ELU.
  void conv(std::size_t out, bool normalized = true) {
    const std::size_t in = shape_.back();
    const auto id = layer_id("conv");
    // A bias in front of batch norm is cancelled by the normalization.
    Layer l{normalized ? LayerKind::conv : LayerKind::conv_bias};
    l.params = {weight(id, {3, 3, in, out}, 9 * in)};
    if (!normalized) l.params.push_back(filled(id + "/b", {out}, T(0), true));
    shape_.back() = out;
    push(l);
    if (!normalized) return;
    const auto bn_id = layer_id("bn");
    Layer bn{LayerKind::batch_norm};
    bn.params = {filled(bn_id + "/gamma", {out}, T(1), true), filled(bn_id + "/beta", {out}, T(0), true),
                 filled(bn_id + "/running_mean", {out}, T(0), false),
                 filled(bn_id + "/running_var", {out}, T(1), false)};
    push(bn);
    elu();
  }

  void elu() { push(Layer{LayerKind::elu}); }

  void avg_pool(std::size_t window, std::size_t stride, bool same) {
    Layer l{LayerKind::avg_pool};
    l.window = window;
    l.stride = stride;
    l.same_padding = same;
    for (std::size_t a = 0; a < 2; ++a) {
      shape_[a] = same ? (shape_[a] + stride - 1) / stride : (shape_[a] - window) / stride + 1;
    }
    push(l);
  }

  void upsample() {
    shape_[0] *= 2;
    shape_[1] *= 2;
    push(Layer{LayerKind::upsample});
  }

  void reshape(Shape s) {
    Layer l{LayerKind::reshape};
    l.shape = s;
    shape_ = std::move(s);
    push(l);
  }

  void concat_attributes(std::size_t width) {
    if (width == 0) return;
    shape_.back() += width;
    push(Layer{LayerKind::concat_attributes});
  }

  void normalizer() { push(Layer{LayerKind::normalizer}); }
  void squash() { push(Layer{LayerKind::squash}); }

  void dropout(double rate) {
    Layer l{LayerKind::dropout};
    l.rate = rate;
    push(l);
  }

 private:
  std::string layer_id(const std::string& kind) {
    const std::string scope = head_ > 0 ? "head" + std::to_string(head_ - 1) + "/" : "";
    return scope + kind + std::to_string(count_[scope + kind]++);
  }

  std::size_t add(std::string pname, Tensor<T> value, bool trainable) {
    net_.params.push_back({std::move(pname), std::move(value), trainable});
    return net_.params.size() - 1;
  }

  // He-normal initialization.
  std::size_t weight(const std::string& id, Shape s, std::size_t fan_in) {
    Tensor<T> w(std::move(s));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (auto& v : w.data) v = static_cast<T>(dist(rng_));
    return add(id + "/w", std::move(w), true);
  }

  std::size_t filled(std::string pname, Shape s, T value, bool trainable) {
    return add(std::move(pname), Tensor<T>(std::move(s), value), trainable);
  }

  void push(Layer l) {
    l.output = shape_;
    (head_ > 0 ? net_.heads.back() : net_.trunk).push_back(std::move(l));
  }

  Network<T>& net_;
  Rng rng_;
  Shape shape_;
  std::size_t head_ = 0;
  std::map<std::string, std::size_t> count_;
};

template <typename T>
void encoder_blocks(Builder<T>& b, const ModelConfig& cfg) {
  for (std::size_t i = 0; i < cfg.blocks(); ++i) {
    const std::size_t c = std::min(cfg.base_channels << i, cfg.max_channels);
    b.conv(c);
    b.conv(c);
    b.avg_pool(2, 2, false);
    b.conv(c);
  }
  b.reshape({4 * 4 * b.shape().back()});
  b.dense(cfg.code_width());
}

template <typename T>
void generator_blocks(Builder<T>& b, const ModelConfig& cfg) {
  for (std::size_t i = 0; i < cfg.blocks(); ++i) {
    const std::size_t c = std::max(cfg.top_channels() >> (i + 1), cfg.min_channels);
    b.conv(c);
    b.conv(c);
    b.upsample();
  }
}

}  // namespace

template <typename T>
Network<T> build_encoder(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Network<T> net;
  net.name = "E";
  net.latent = cfg.latent;
  if (cfg.mode == Mode::vector) {
    Builder<T> b(net, seed, {cfg.point_dims});
    b.dense(cfg.hidden);
    b.elu();
    b.dense(cfg.hidden);
    b.elu();
    b.dense(cfg.code_width());
    b.normalizer();
    return net;
  }
  Builder<T> b(net, seed, {cfg.resolution, cfg.resolution, 3});
  encoder_blocks(b, cfg);
  b.normalizer();
  return net;
}

template <typename T>
Network<T> build_generator(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Network<T> net;
  net.name = "G";
  net.latent = cfg.latent;
  Builder<T> b(net, seed, {cfg.code_width()});
  b.concat_attributes(cfg.attribute_width());
  if (cfg.mode == Mode::vector) {
    b.dense(cfg.hidden);
    b.elu();
    b.dense(cfg.hidden);
    b.elu();
    b.dense(cfg.point_dims);
    return net;
  }
  const std::size_t top = cfg.top_channels();
  b.dense(4 * 4 * top);
  b.reshape({4, 4, top});
  generator_blocks(b, cfg);
  // Render at twice the resolution, then average back down.
  const std::size_t c = b.shape().back();
  b.conv(c);
  b.upsample();
  b.conv(c);
  b.conv(3, false);
  b.avg_pool(3, 2, true);
  b.squash();
  return net;
}

template <typename T>
Network<T> build_discriminator(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Network<T> net;
  net.name = "D";
  net.latent = cfg.latent;
  if (cfg.mode == Mode::vector) {
    Builder<T> b(net, seed, {cfg.point_dims});
    b.dense(cfg.hidden);
    b.elu();
    b.dense(cfg.code_width());
    b.concat_attributes(cfg.attribute_width());
    b.dense(cfg.hidden);
    b.elu();
    b.dense(cfg.point_dims);
    return net;
  }
  Builder<T> b(net, seed, {cfg.resolution, cfg.resolution, 3});
  encoder_blocks(b, cfg);
  const std::size_t top = cfg.top_channels();
  b.dense(4 * 4 * top);
  b.reshape({4, 4, top});
  b.concat_attributes(cfg.attribute_width());
  generator_blocks(b, cfg);
  b.conv(3, false);
  b.squash();
  return net;
}

template <typename T>
Network<T> build_attribute_classifier(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (cfg.mode != Mode::image) throw std::invalid_argument("attribute classifier needs image mode");
  if (cfg.attributes.empty()) throw std::invalid_argument("attribute classifier needs attributes");
  Network<T> net;
  net.name = "A";
  Builder<T> b(net, seed, {cfg.resolution, cfg.resolution, 3});
  static constexpr std::size_t multipliers[] = {1, 1, 2, 3, 4};
  const std::size_t c = cfg.classifier_channels;
  for (std::size_t i = 0; i < cfg.blocks(); ++i) {
    b.conv(c * multipliers[std::min<std::size_t>(i, 4)]);
    b.avg_pool(2, 2, false);
  }
  b.conv(6 * c);
  b.conv(8 * c);
  const Shape trunk = b.shape();
  for (const auto& a : cfg.attributes) {
    b.into_head(trunk);
    b.conv(12 * c);
    b.avg_pool(4, 1, false);
    b.reshape({12 * c});
    b.dense(12 * c);
    b.elu();
    b.dropout(cfg.dropout);
    b.dense(12 * c);
    b.elu();
    b.dropout(cfg.dropout);
    b.dense(a.arity);
  }
  return net;
}

template <typename T>
void append_parameters(const Network<T>& net, std::vector<ad::NamedTensor>& out) {
  for (const auto& p : net.params) out.push_back({net.name + "/" + p.name, p.value.template cast<float>()});
}

template <typename T>
void load_parameters(Network<T>& net, std::span<const ad::NamedTensor> entries) {
  std::map<std::string_view, const Tensor<float>*> index;
  for (const auto& e : entries) index[e.name] = &e.tensor;
  for (auto& p : net.params) {
    const std::string key = net.name + "/" + p.name;
    auto it = index.find(key);
    if (it == index.end()) throw ad::CheckpointError("checkpoint lacks " + key);
    if (it->second->shape != p.value.shape) {
      throw ad::CheckpointError("checkpoint entry " + key + " has shape " + ad::to_string(it->second->shape));
    }
    p.value = it->second->template cast<T>();
  }
}

#define UCG_INSTANTIATE_MODELS(T)                                                        \
  template class Network<T>;                                                             \
  template Network<T> build_encoder<T>(const ModelConfig&, std::uint64_t);               \
  template Network<T> build_generator<T>(const ModelConfig&, std::uint64_t);             \
  template Network<T> build_discriminator<T>(const ModelConfig&, std::uint64_t);         \
  template Network<T> build_attribute_classifier<T>(const ModelConfig&, std::uint64_t);  \
  template void append_parameters(const Network<T>&, std::vector<ad::NamedTensor>&);     \
  template void load_parameters(Network<T>&, std::span<const ad::NamedTensor>);          \
  template void audit_tape(const ad::Tape<T>&);

UCG_INSTANTIATE_MODELS(float)
UCG_INSTANTIATE_MODELS(double)

}  // namespace ucg::models
