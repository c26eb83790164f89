#ifndef UCG_DIVERSITY_HPP
#define UCG_DIVERSITY_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ucg/autodiff/tensor.hpp"
#include "ucg/models.hpp"
#include "ucg/rng.hpp"

namespace ucg::diversity {

/// Row-major [rows, dim] embeddings in double precision.
struct Embeddings {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const { return std::span<const double>(values).subspan(i * dim, dim); }
};

enum class EmbeddingKind { raw_pixel, encoder_bottleneck };

EmbeddingKind parse_embedding_kind(std::string_view name);  // "raw-pixel", "encoder-bottleneck"
std::string_view to_string(EmbeddingKind kind);

struct Pair {
  std::size_t i = 0;
  std::size_t j = 0;  // i < j
  double distance = 0;  // squared Euclidean

  bool operator==(const Pair&) const = default;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

/// The k closest pairs by squared distance, ascending, ties broken by (i, j).
std::vector<Pair> top_k_pairs(const Embeddings& e, std::size_t k);

/// distance < tau.
bool duplicate_decision(double distance, double tau);

/// All N(N-1)/2 squared distances in (i, j) order.
std::vector<double> pairwise_distances(const Embeddings& e);

/// Nearest-rank q-quantile of the pairwise distances.
double percentile_threshold(const Embeddings& e, double q = 0.01);

/// Flattened samples.
Embeddings raw_pixel_embedding(const ad::Tensor<float>& samples);
/// Encoder codes in evaluation mode.
Embeddings encoder_embedding(models::Network<float>& encoder, const ad::Tensor<float>& samples,
                             std::size_t batch = 64);

/// Probability that n draws from m equally likely items contain a repeat.
double birthday_probability(std::size_t m, std::size_t n);

using Sampler = std::function<ad::Tensor<float>(std::size_t n, Rng& rng)>;
using Embedder = std::function<Embeddings(const ad::Tensor<float>& samples)>;

struct BirthdayOptions {
  std::size_t n0 = 15;
  std::size_t trials = 20;
  double confidence = 0.5;  // p*
  std::size_t top_k = 10;
  std::size_t max_n = 4096;
  std::uint64_t seed = 0;
};

struct TrialLog {
  std::size_t n = 0;
  double duplicate_rate = 0;
};

struct SupportEstimate {
  std::size_t final_n = 0;
  double estimate = 0;       // final_n squared
  bool lower_bound = false;  // the cap was hit before duplicates were confirmed
  double tau = 0;
  std::vector<TrialLog> trials;
  std::vector<Pair> pairs;   // top pairs of the reported trial
  ad::Tensor<float> evidence;  // that trial's samples, indexed by the pairs
};

/// Doubles N from n0 until at least `confidence` of the trials show a
/// duplicate among their top-k pairs.
SupportEstimate birthday_estimate(const Sampler& sampler, const Embedder& embed, double tau,
                                  const BirthdayOptions& opts = {});

/// {final_n, estimate, lower_bound, tau, trials: [{n, duplicate_rate}], pairs: [{i, j, distance, duplicate}]}
nlohmann::json to_json(const SupportEstimate& s);

}  // namespace ucg::diversity

#endif  // UCG_DIVERSITY_HPP
