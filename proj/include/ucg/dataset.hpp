#ifndef UCG_DATASET_HPP
#define UCG_DATASET_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ucg/autodiff/tensor.hpp"
#include "ucg/rng.hpp"

namespace ucg {

/// Samples of one fixed shape ([R, R, 3] images in [0, 1] or points), with
/// one integer label per attribute.
struct Dataset {
  ad::Shape sample_shape;
  std::vector<float> values;
  std::size_t attribute_count = 0;
  std::vector<std::size_t> labels;  // size() * attribute_count, row-major
  std::vector<std::size_t> template_ids;  // ground-truth identity, when known
  std::vector<std::string> filenames;

  std::size_t sample_size() const { return ad::numel(sample_shape); }
  std::size_t size() const;
  std::span<const float> sample(std::size_t i) const;
  std::span<const std::size_t> labels_of(std::size_t i) const;

  void push(std::span<const float> sample, std::span<const std::size_t> sample_labels);

  /// Stacks the chosen samples into [n, sample_shape...].
  ad::Tensor<float> gather(std::span<const std::size_t> indices) const;
  /// Samples [first, first + count).
  Dataset slice(std::size_t first, std::size_t count) const;
};

/// Draws minibatch indices epoch by epoch from seeded permutations.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, Rng rng);
  std::vector<std::size_t> next(std::size_t batch);

 private:
  void reshuffle();

  std::size_t n_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace ucg

#endif  // UCG_DATASET_HPP
