#ifndef UCG_TRAINER_HPP
#define UCG_TRAINER_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ucg/autodiff/adam.hpp"
#include "ucg/dataset.hpp"
#include "ucg/losses.hpp"
#include "ucg/models.hpp"

namespace ucg::trainer {

struct LossWeights {
  double eq3 = 1.0;        // image identity x vs G(E(x) | y)
  double eq8a = 1.0;       // z vs E(G(z | c))
  double eq8b = 1.0;       // E(x) vs E(G(E(x) | y))
  double entropy = 1.0;    // angle histogram of E on real samples
  double attribute = 1.0;  // frozen classifier on generated samples
};

enum class Net { E, G, D };

struct TrainConfig {
  std::size_t batch = 32;
  std::size_t steps = 2000;
  ad::AdamConfig adam;
  double began_lambda = 0.001;
  double began_gamma = 0.7;
  LossWeights weights;
  double keep_ratio = 0.3;
  std::size_t hist_bins = 32;
  // Adaptive mixing of the generator objective, off by default.
  bool mix_generator = false;
  double mixer_rho = 0.99;
  std::size_t checkpoint_every = 500;
  std::uint64_t seed = 0;
  // Order the three optimizers are applied in; the result must not depend on it.
  std::array<Net, 3> update_order{Net::E, Net::G, Net::D};
  // Extra backward pass measuring any gradient reaching E from losses on
  // generated samples.
  bool audit_isolation = false;

  void validate(const models::ModelConfig& model) const;
};

struct StepReport {
  std::size_t step = 0;
  double loss_real = 0, loss_fake = 0, loss_d = 0, loss_g = 0;
  double eq3 = 0, eq8a = 0, eq8b = 0, entropy = 0, attribute = 0;
  double k = 0;            // after the update
  double convergence = 0;  // M_t
  std::vector<double> gammas;
  double encoder_grad = 0;  // max |grad| of the encoder objective
  double encoder_leak = 0;  // max |grad| into E from generated-sample losses (audit only)
  double wall_ms = 0;
};

/// Explicit inputs of one step; `train` draws them from seeded streams.
struct StepInputs {
  ad::Tensor<float> x;                    // [B, sample...]
  ad::Tensor<float> y;                    // [B, attribute width]
  ad::Tensor<float> z;                    // [B, code width]
  ad::Tensor<float> c;                    // [B, attribute width]
  std::vector<std::size_t> c_labels;      // B * attribute count
};

class GanTrainer {
 public:
  GanTrainer(models::ModelConfig model, TrainConfig cfg, std::optional<models::Network<float>> classifier = {});

  /// One simultaneous update of E, G and D. Throws ad::NonFiniteError on a
  /// non-finite loss before touching any parameter.
  StepReport step(const StepInputs& in);
  /// Draws a batch and latents from the trainer's streams.
  StepInputs draw(const Dataset& data);

  const models::ModelConfig& model_config() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const losses::BeganState& began() const { return began_; }
  losses::BeganState& began() { return began_; }
  std::size_t steps_done() const { return steps_; }

  models::Network<float> E, G, D;
  std::optional<models::Network<float>> A;

  std::vector<ad::NamedTensor> checkpoint() const;
  /// Names of the generator terms behind StepReport::gammas.
  std::vector<std::string> mixed_terms() const;

 private:
  models::ModelConfig model_;
  TrainConfig cfg_;
  ad::AdamState<float> opt_e_, opt_g_, opt_d_, opt_gamma_;
  losses::BeganState began_;
  losses::MixerState mixer_;
  ad::Tensor<float> gamma_;
  std::optional<BatchSampler> sampler_;
  Rng latent_rng_;
  std::size_t steps_ = 0;
};

/// Column header of the metrics CSV.
std::vector<std::string> metrics_columns(const GanTrainer& trainer);
std::string metrics_row(const StepReport& r);

struct TrainResult {
  std::vector<StepReport> reports;
  std::vector<ad::NamedTensor> final_checkpoint;
};

/// Runs cfg.steps steps. With an output directory, writes metrics.csv,
/// checkpoint_<step>.ucg every cfg.checkpoint_every steps and checkpoint.ucg.
TrainResult train(GanTrainer& trainer, const Dataset& data, const std::optional<std::filesystem::path>& out_dir = {});

// ---------------------------------------------------------------- classifier

struct AttributeTrainConfig {
  std::size_t batch = 32;
  std::size_t steps = 2000;
  ad::AdamConfig adam{1e-3};
  double focal_gamma = 2.0;
  double softargmax_beta = 1.0;
  double locality_beta = 1.0;
  double mixer_rho = 0.99;
  int max_shift = 2;
  double noise_sigma = 0.02;
  double contractive_sigma = 0.01;
  double contractive_weight = 1e-3;
  std::uint64_t seed = 0;
};

struct AttributeStep {
  std::vector<double> terms;  // per-head losses, then the contractive penalty
  double mixed = 0;
  std::vector<double> gammas;
};

struct AttributeTrainResult {
  models::Network<float> network;
  std::vector<std::string> columns;
  std::vector<AttributeStep> trace;
};

/// Flip, shift by up to `max_shift` pixels with replicated borders, and add
/// clipped Gaussian noise. [B, R, R, 3] in and out.
ad::Tensor<float> augment(const ad::Tensor<float>& images, int max_shift, double noise_sigma, Rng& rng);

/// Batch mean of ||(f(x + sigma u) - f(x)) / sigma||^2 over the
/// concatenated head outputs, given the heads evaluated at both inputs.
ad::Var<float> contractive_penalty(std::span<const ad::Var<float>> at_x, std::span<const ad::Var<float>> at_shifted,
                                   double sigma);

AttributeTrainResult pretrain_attribute_classifier(const Dataset& data, const models::ModelConfig& model,
                                                   const AttributeTrainConfig& cfg);

/// Held-out accuracy per attribute with the classifier in evaluation mode.
std::vector<double> attribute_accuracy(models::Network<float>& net, const Dataset& data, std::size_t batch = 64);

}  // namespace ucg::trainer

#endif  // UCG_TRAINER_HPP
