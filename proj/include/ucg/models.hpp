#ifndef UCG_MODELS_HPP
#define UCG_MODELS_HPP

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ucg/autodiff/checkpoint.hpp"
#include "ucg/autodiff/ops.hpp"
#include "ucg/autodiff/parameter.hpp"
#include "ucg/latent.hpp"
#include "ucg/rng.hpp"

namespace ucg::models {

struct AttributeSpec {
  enum class Kind { categorical, quantized };

  std::string name;
  Kind kind = Kind::categorical;
  std::size_t arity = 2;  // classes, or bins for quantized attributes

  /// One-hot for categories; a normalized scalar followed by the bin
  /// one-hot for quantized values.
  std::size_t width() const { return kind == Kind::quantized ? arity + 1 : arity; }
};

/// age_bin (quantized), gender (2 classes), ethnicity (5 classes).
std::vector<AttributeSpec> default_attributes(std::size_t age_bins = 4);

/// Encodes one label per attribute into the conditioning vector.
std::vector<float> encode_attributes(const std::vector<AttributeSpec>& spec, std::span<const std::size_t> labels);

enum class Mode { image, vector };

struct ModelConfig {
  Mode mode = Mode::image;
  std::size_t resolution = 32;
  std::size_t latent_dims = 16;
  latent::LatentKind latent = latent::LatentKind::unit_complex;
  std::size_t base_channels = 16;
  std::size_t max_channels = 128;
  std::size_t min_channels = 8;
  std::size_t classifier_channels = 8;
  double dropout = 0.5;
  std::size_t hidden = 64;      // vector mode layer width
  std::size_t point_dims = 2;   // vector mode data width
  std::vector<AttributeSpec> attributes = default_attributes();

  std::size_t code_width() const { return latent::code_width(latent, latent_dims); }
  std::size_t attribute_width() const;
  /// Pooling blocks of the encoder: log2(resolution) - 2.
  std::size_t blocks() const;
  std::size_t top_channels() const;
  void validate() const;  // throws std::invalid_argument
};

enum class LayerKind {
  dense,
  conv,       // no bias; always followed by batch norm
  conv_bias,
  batch_norm,
  elu,
  avg_pool,
  upsample,
  reshape,
  concat_attributes,
  normalizer,
  squash,
  dropout,
};

std::string_view to_string(LayerKind kind);

struct Layer {
  explicit Layer(LayerKind k) : kind(k) {}

  LayerKind kind;
  std::vector<std::size_t> params;  // indices into Network::params
  ad::Shape shape;                  // reshape target without the batch axis
  std::size_t window = 2;
  std::size_t stride = 2;
  bool same_padding = false;
  std::size_t factor = 2;
  double rate = 0.0;  // dropout
  ad::Shape output;   // activation shape after this layer, without the batch axis

  /// Catalog operators this layer records.
  std::vector<std::string_view> ops() const;
};

struct ForwardOptions {
  bool training = false;
  // Folds batch statistics into the running averages.
  bool update_stats = false;
  Rng* rng = nullptr;  // dropout masks, required when training with dropout
};

template <typename T>
struct Binding {
  std::vector<ad::Var<T>> vars;  // one per parameter, buffers included
};

/// Ordered layers over a parameter registry. Networks with heads run the
/// trunk once and each head on the trunk output.
template <typename T>
class Network {
 public:
  std::string name;
  std::vector<ad::Parameter<T>> params;
  std::vector<Layer> trunk;
  std::vector<std::vector<Layer>> heads;
  ad::Shape input_shape;  // without the batch axis
  latent::LatentKind latent = latent::LatentKind::unit_complex;
  double norm_epsilon = 1e-5;
  double stats_momentum = 0.1;

  /// Trainable parameters as leaves and buffers as constants.
  Binding<T> bind(ad::Tape<T>& tape) const;
  /// Every parameter as a constant.
  Binding<T> bind_constant(ad::Tape<T>& tape) const;
  /// The same leaves behind stop-gradient, so no loss through this binding
  /// reaches them.
  static Binding<T> frozen(const Binding<T>& live);

  ad::Var<T> forward(const Binding<T>& bound, const ad::Var<T>& x, const ForwardOptions& opts,
                     const ad::Var<T>* attributes = nullptr);
  std::vector<ad::Var<T>> forward_heads(const Binding<T>& bound, const ad::Var<T>& x,
                                        const ForwardOptions& opts);

  /// Gradients of the trainable parameters after a backward sweep.
  std::vector<ad::Tensor<T>> gradients(const ad::Tape<T>& tape, const Binding<T>& bound) const;
  std::vector<ad::Tensor<T>*> trainable();
  std::size_t parameter_count() const;

  std::set<std::string_view> ops() const;
  /// Throws unless every layer uses catalog operators only.
  void audit() const;

 private:
  ad::Var<T> run(const std::vector<Layer>& layers, const Binding<T>& bound, ad::Var<T> x,
                 const ForwardOptions& opts, const ad::Var<T>* attributes);
};

/// Image mode: [B, R, R, 3] -> [B, code_width]. Vector mode: [B, 2] -> codes.
template <typename T>
Network<T> build_encoder(const ModelConfig& cfg, std::uint64_t seed);
/// codes ++ attributes -> [B, R, R, 3] in [0, 1], or [B, 2] points.
template <typename T>
Network<T> build_generator(const ModelConfig& cfg, std::uint64_t seed);
/// Conditional autoencoder: input and attributes -> reconstruction.
template <typename T>
Network<T> build_discriminator(const ModelConfig& cfg, std::uint64_t seed);
/// One logit head per attribute, head width = arity.
template <typename T>
Network<T> build_attribute_classifier(const ModelConfig& cfg, std::uint64_t seed);

/// Checkpoint entries named "<net.name>/<param>".
template <typename T>
void append_parameters(const Network<T>& net, std::vector<ad::NamedTensor>& out);
/// Restores every parameter of `net` from a name lookup; throws on a
/// missing entry or shape mismatch.
template <typename T>
void load_parameters(Network<T>& net, std::span<const ad::NamedTensor> entries);

/// Throws unless every recorded node is a leaf, a constant, or a catalog
/// operator.
template <typename T>
void audit_tape(const ad::Tape<T>& tape);

}  // namespace ucg::models

#endif  // UCG_MODELS_HPP
