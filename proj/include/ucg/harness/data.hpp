#ifndef UCG_HARNESS_DATA_HPP
#define UCG_HARNESS_DATA_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ucg/dataset.hpp"
#include "ucg/models.hpp"

namespace ucg::harness {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- sprites

inline constexpr std::size_t kSpriteShapes = 2;    // gender analog: disc, ring
inline constexpr std::size_t kSpritePalettes = 5;  // ethnicity analog

/// Factor grid of the synthetic sprites. Every (shape, palette, size bin,
/// x offset, y offset, background shade) combination is one template.
struct SpriteSpec {
  std::size_t resolution = 32;
  std::size_t size_bins = 4;          // age analog
  std::size_t jitter = 2;             // offsets in [-jitter, jitter] pixels
  std::size_t background_shades = 1;
  std::size_t supersample = 4;        // per axis

  std::size_t template_count() const;
  void validate() const;
  /// age_bin (quantized over the size bins), gender, ethnicity.
  std::vector<models::AttributeSpec> attributes() const;
};

struct SpriteFactors {
  std::size_t shape, palette, size_bin;
  int dx, dy;
  std::size_t background;
};

SpriteFactors sprite_factors(const SpriteSpec& spec, std::size_t template_id);
/// Labels in attribute order: age_bin, gender, ethnicity.
std::vector<std::size_t> sprite_labels(const SpriteSpec& spec, std::size_t template_id);

/// [R, R, 3] values, quantized to multiples of 1/255 so PPM storage is exact.
std::vector<float> render_sprite(const SpriteSpec& spec, std::size_t template_id);

/// Every template once, in id order.
Dataset sprite_templates(const SpriteSpec& spec);

/// n sprites drawn uniformly from the templates accepted by `allow` (all by
/// default). Template ids and file names are recorded.
Dataset gen_sprites(const SpriteSpec& spec, std::size_t n, std::uint64_t seed,
                    const std::function<bool(std::size_t)>& allow = {});

/// Smallest raw-pixel squared distance between two distinct templates.
double min_template_distance(const SpriteSpec& spec);

// ---------------------------------------------------------------- ring of Gaussians

struct RingSpec {
  std::size_t modes = 8;
  double radius = 2.0;
  double sigma = 0.05;
};

std::vector<double> ring_center(const RingSpec& ring, std::size_t mode);

/// Points from equally weighted isotropic Gaussians centered on a circle.
/// The mode of each point is stored as its template id.
Dataset gen_ring_gaussians(const RingSpec& ring, std::size_t n, std::uint64_t seed);

/// Points within 3 sigma of each center, for [n, 2] points.
std::vector<std::size_t> mode_counts(const RingSpec& ring, std::span<const float> points);
/// Modes holding at least `min_fraction` of all points.
std::size_t covered_modes(const RingSpec& ring, std::span<const float> points, double min_fraction = 0.01);

// ---------------------------------------------------------------- files

/// Binary PPM (P6). Values are scaled by maxval on read and rounded to
/// 8 bits on write.
ad::Tensor<float> read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, std::span<const float> hwc, std::size_t height, std::size_t width);

/// Writes images/<filename>, labels.csv ("filename,<attribute>...") and,
/// when known, templates.csv ("filename,template").
void write_image_dataset(const std::filesystem::path& dir, const Dataset& data,
                         const std::vector<models::AttributeSpec>& attributes);
/// Loads a directory written by write_image_dataset, or any directory with
/// a labels.csv naming every attribute and PPM images under images/.
Dataset load_image_dataset(const std::filesystem::path& dir, const std::vector<models::AttributeSpec>& attributes);

/// "x,y,mode" rows.
void write_points_csv(const std::filesystem::path& path, const Dataset& data);
Dataset load_points_csv(const std::filesystem::path& path);

}  // namespace ucg::harness

#endif  // UCG_HARNESS_DATA_HPP
