#include "ucg/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>

namespace ucg::diversity {

namespace {

bool before(const Pair& a, const Pair& b) {
  return std::tie(a.distance, a.i, a.j) < std::tie(b.distance, b.i, b.j);
}

std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

}  // namespace

EmbeddingKind parse_embedding_kind(std::string_view name) {
  if (name == "raw-pixel") return EmbeddingKind::raw_pixel;
  if (name == "encoder-bottleneck") return EmbeddingKind::encoder_bottleneck;
  throw std::invalid_argument("unknown embedding kind '" + std::string(name) + "'");
}

std::string_view to_string(EmbeddingKind kind) {
  return kind == EmbeddingKind::raw_pixel ? "raw-pixel" : "encoder-bottleneck";
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ad::ShapeError("squared_distance: length mismatch");
  double d = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double e = a[k] - b[k];
    d += e * e;
  }
  return d;
}

std::vector<Pair> top_k_pairs(const Embeddings& e, std::size_t k) {
  if (e.rows < 2) throw std::invalid_argument("top_k_pairs: need at least two rows");
  if (k > pair_count(e.rows)) throw std::invalid_argument("top_k_pairs: k exceeds the number of pairs");
  // Max-heap of the best k so far; the root is the worst kept pair.
  std::priority_queue<Pair, std::vector<Pair>, decltype(&before)> heap(&before);
  if (k == 0) return {};
  for (std::size_t i = 0; i < e.rows; ++i) {
    for (std::size_t j = i + 1; j < e.rows; ++j) {
      const Pair p{i, j, squared_distance(e.row(i), e.row(j))};
      if (heap.size() < k) {
        heap.push(p);
      } else if (before(p, heap.top())) {
        heap.pop();
        heap.push(p);
      }
    }
  }
  std::vector<Pair> out;
  out.reserve(k);
  while (!heap.empty()) {
    out.push_back(heap.top());
    heap.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

bool duplicate_decision(double distance, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("duplicate_decision: tau must be positive");
  return distance < tau;
}

std::vector<double> pairwise_distances(const Embeddings& e) {
  std::vector<double> out;
  out.reserve(e.rows < 2 ? 0 : pair_count(e.rows));
  for (std::size_t i = 0; i < e.rows; ++i) {
    for (std::size_t j = i + 1; j < e.rows; ++j) out.push_back(squared_distance(e.row(i), e.row(j)));
  }
  return out;
}

double percentile_threshold(const Embeddings& e, double q) {
  if (e.rows < 2) throw std::invalid_argument("percentile_threshold: need at least two rows");
  if (!(q > 0 && q <= 1)) throw std::invalid_argument("percentile_threshold: q must be in (0, 1]");
  std::vector<double> d = pairwise_distances(e);
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(d.size()) - 1e-9));
  const auto at = d.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(rank, 1) - 1);
  std::nth_element(d.begin(), at, d.end());
  return *at;
}

Embeddings raw_pixel_embedding(const ad::Tensor<float>& samples) {
  if (samples.rank() < 2) throw ad::ShapeError("raw_pixel_embedding: expected [n, ...] samples");
  Embeddings e;
  e.rows = samples.shape[0];
  e.dim = samples.size() / e.rows;
  e.values.assign(samples.data.begin(), samples.data.end());
  return e;
}

Embeddings encoder_embedding(models::Network<float>& encoder, const ad::Tensor<float>& samples, std::size_t batch) {
  if (samples.rank() < 2) throw ad::ShapeError("encoder_embedding: expected [n, ...] samples");
  const std::size_t n = samples.shape[0];
  const std::size_t per = samples.size() / n;
  Embeddings e;
  e.rows = n;
  for (std::size_t first = 0; first < n; first += batch) {
    const std::size_t count = std::min(batch, n - first);
    ad::Shape shape = samples.shape;
    shape[0] = count;
    const auto begin = samples.data.begin() + static_cast<std::ptrdiff_t>(first * per);
    ad::Tensor<float> chunk(shape, std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(count * per)));
    ad::Tape<float> tape;
    const auto bound = encoder.bind_constant(tape);
    const auto code = encoder.forward(bound, tape.constant(std::move(chunk)), models::ForwardOptions{});
    e.dim = code.shape().back();
    e.values.insert(e.values.end(), code.value().begin(), code.value().end());
  }
  return e;
}

double birthday_probability(std::size_t m, std::size_t n) {
  if (m == 0) throw std::invalid_argument("birthday_probability: empty support");
  if (n > m) return 1.0;
  double none = 1.0;
  for (std::size_t i = 0; i < n; ++i) none *= static_cast<double>(m - i) / static_cast<double>(m);
  return 1.0 - none;
}

SupportEstimate birthday_estimate(const Sampler& sampler, const Embedder& embed, double tau,
                                  const BirthdayOptions& opts) {
  if (opts.n0 < 2) throw std::invalid_argument("birthday_estimate: n0 must be at least 2");
  if (opts.trials == 0) throw std::invalid_argument("birthday_estimate: need at least one trial");
  if (!(opts.confidence > 0 && opts.confidence <= 1)) {
    throw std::invalid_argument("birthday_estimate: confidence must be in (0, 1]");
  }
  if (opts.top_k == 0) throw std::invalid_argument("birthday_estimate: top_k must be positive");
  if (!(tau > 0)) throw std::invalid_argument("birthday_estimate: tau must be positive");

  Rng rng = derive(opts.seed, 40);
  SupportEstimate out;
  out.tau = tau;
  for (std::size_t n = opts.n0; n <= opts.max_n; n *= 2) {
    std::size_t hits = 0;
    bool kept = false;
    std::vector<Pair> last_pairs;
    ad::Tensor<float> last_samples;
    for (std::size_t t = 0; t < opts.trials; ++t) {
      ad::Tensor<float> samples = sampler(n, rng);
      if (samples.rank() < 1 || samples.shape[0] != n) throw std::runtime_error("birthday_estimate: sampler returned the wrong count");
      const Embeddings e = embed(samples);
      auto pairs = top_k_pairs(e, std::min(opts.top_k, pair_count(n)));
      const bool dup = std::any_of(pairs.begin(), pairs.end(), [&](const Pair& p) { return duplicate_decision(p.distance, tau); });
      if (dup) ++hits;
      if (dup && !kept) {
        out.pairs = pairs;
        out.evidence = samples;
        kept = true;
      }
      last_pairs = std::move(pairs);
      last_samples = std::move(samples);
    }
    const double rate = static_cast<double>(hits) / static_cast<double>(opts.trials);
    out.trials.push_back({n, rate});
    out.final_n = n;
    out.estimate = static_cast<double>(n) * static_cast<double>(n);
    if (rate >= opts.confidence) return out;
    out.pairs = std::move(last_pairs);
    out.evidence = std::move(last_samples);
  }
  out.lower_bound = true;
  return out;
}

nlohmann::json to_json(const SupportEstimate& s) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : s.trials) trials.push_back({{"n", t.n}, {"duplicate_rate", t.duplicate_rate}});
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : s.pairs) {
    pairs.push_back({{"i", p.i}, {"j", p.j}, {"distance", p.distance}, {"duplicate", p.distance < s.tau}});
  }
  return {{"final_n", s.final_n}, {"estimate", s.estimate}, {"lower_bound", s.lower_bound},
          {"tau", s.tau},         {"trials", trials},        {"pairs", pairs}};
}

}  // namespace ucg::diversity
