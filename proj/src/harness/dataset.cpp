#include "ucg/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ucg {

std::size_t Dataset::size() const {
  const std::size_t s = sample_size();
  return s == 0 ? 0 : values.size() / s;
}

std::span<const float> Dataset::sample(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("dataset: sample " + std::to_string(i) + " out of range");
  return std::span<const float>(values).subspan(i * sample_size(), sample_size());
}

std::span<const std::size_t> Dataset::labels_of(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("dataset: sample " + std::to_string(i) + " out of range");
  return std::span<const std::size_t>(labels).subspan(i * attribute_count, attribute_count);
}

void Dataset::push(std::span<const float> s, std::span<const std::size_t> sample_labels) {
  if (s.size() != sample_size()) throw ad::ShapeError("dataset: sample has the wrong size");
  if (sample_labels.size() != attribute_count) throw std::invalid_argument("dataset: wrong label count");
  values.insert(values.end(), s.begin(), s.end());
  labels.insert(labels.end(), sample_labels.begin(), sample_labels.end());
}

ad::Tensor<float> Dataset::gather(std::span<const std::size_t> indices) const {
  ad::Shape shape{indices.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  ad::Tensor<float> out(std::move(shape));
  const std::size_t s = sample_size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = sample(indices[k]);
    std::copy(src.begin(), src.end(), out.data.begin() + static_cast<std::ptrdiff_t>(k * s));
  }
  return out;
}

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw std::out_of_range("dataset: slice out of range");
  Dataset out;
  out.sample_shape = sample_shape;
  out.attribute_count = attribute_count;
  const std::size_t s = sample_size();
  const auto at = [](std::size_t i) { return static_cast<std::ptrdiff_t>(i); };
  out.values.assign(values.begin() + at(first * s), values.begin() + at((first + count) * s));
  out.labels.assign(labels.begin() + at(first * attribute_count),
                    labels.begin() + at((first + count) * attribute_count));
  if (!template_ids.empty()) {
    out.template_ids.assign(template_ids.begin() + at(first), template_ids.begin() + at(first + count));
  }
  if (!filenames.empty()) out.filenames.assign(filenames.begin() + at(first), filenames.begin() + at(first + count));
  return out;
}

BatchSampler::BatchSampler(std::size_t n, Rng rng) : n_(n), rng_(std::move(rng)), order_(n) {
  if (n == 0) throw std::invalid_argument("batch sampler: empty dataset");
  std::iota(order_.begin(), order_.end(), 0);
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  pos_ = 0;
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch) {
  std::vector<std::size_t> out;
  out.reserve(batch);
  while (out.size() < batch) {
    if (pos_ == n_) reshuffle();
    out.push_back(order_[pos_++]);
  }
  return out;
}

}  // namespace ucg
