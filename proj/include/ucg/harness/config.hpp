#ifndef UCG_HARNESS_CONFIG_HPP
#define UCG_HARNESS_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ucg/diversity.hpp"
#include "ucg/harness/data.hpp"
#include "ucg/models.hpp"
#include "ucg/trainer.hpp"

namespace ucg::harness {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DataKind { sprites, ring };

struct DataConfig {
  DataKind kind = DataKind::sprites;
  std::size_t n = 4000;
  std::size_t heldout_n = 0;  // extra samples written under heldout/
  SpriteSpec sprite;
  RingSpec ring;
};

struct DiversityConfig {
  diversity::EmbeddingKind embedding = diversity::EmbeddingKind::raw_pixel;
  diversity::BirthdayOptions birthday;
  std::optional<double> threshold;  // otherwise a percentile of real pairs
  double percentile = 0.01;
  std::size_t reference_samples = 1000;
  std::size_t batch = 64;
};

/// Resolved run configuration. Seeds of every stage come from `seed`; the
/// model's mode, resolution and attributes follow the data section.
struct RunConfig {
  std::uint64_t seed = 0;
  models::ModelConfig model;
  trainer::TrainConfig train;
  trainer::AttributeTrainConfig attribute;
  DiversityConfig diversity;
  DataConfig data;
  nlohmann::json resolved;
};

/// Sections seed, model, latent, losses, train, diversity, data.
nlohmann::json default_config();

/// Recursive merge. Every key must already exist in `base` with a
/// compatible type.
void merge_config(nlohmann::json& base, const nlohmann::json& patch);

/// "train.batch=64"; the value is parsed as JSON, or taken as a string.
void apply_override(nlohmann::json& base, std::string_view assignment);

RunConfig resolve_config(const nlohmann::json& config);

/// Defaults, then the file, then the overrides.
RunConfig load_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);

}  // namespace ucg::harness

#endif  // UCG_HARNESS_CONFIG_HPP
