#include "ucg/harness/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace ucg::harness {

namespace {

constexpr std::array<std::array<float, 3>, kSpritePalettes> kPalettes{{
    {0.90f, 0.20f, 0.20f},
    {0.20f, 0.80f, 0.30f},
    {0.20f, 0.30f, 0.90f},
    {0.95f, 0.85f, 0.20f},
    {0.70f, 0.30f, 0.80f},
}};

std::size_t offsets(const SpriteSpec& spec) { return 2 * spec.jitter + 1; }

float quantize(double v) { return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f; }

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream s(line);
  while (std::getline(s, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

std::size_t parse_index(const std::string& field, const std::string& what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(field, &pos);
  } catch (const std::exception&) {
    throw DataError(what + ": '" + field + "' is not a non-negative integer");
  }
  if (pos != field.size() || field.empty() || field[0] == '-') {
    throw DataError(what + ": '" + field + "' is not a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

std::string sprite_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sprite_%05zu.ppm", i);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- sprites

std::size_t SpriteSpec::template_count() const {
  return kSpriteShapes * kSpritePalettes * size_bins * offsets(*this) * offsets(*this) * background_shades;
}

void SpriteSpec::validate() const {
  if (resolution < 8) throw std::invalid_argument("sprite spec: resolution must be at least 8");
  if (size_bins < 1) throw std::invalid_argument("sprite spec: need at least one size bin");
  if (background_shades < 1) throw std::invalid_argument("sprite spec: need at least one background shade");
  if (supersample < 1) throw std::invalid_argument("sprite spec: supersample must be positive");
  // Largest sprite plus offset must stay inside the frame.
  const double reach = 0.34 * static_cast<double>(resolution) + static_cast<double>(jitter);
  if (reach >= 0.5 * static_cast<double>(resolution)) throw std::invalid_argument("sprite spec: jitter too large");
}

std::vector<models::AttributeSpec> SpriteSpec::attributes() const {
  return models::default_attributes(size_bins);
}

SpriteFactors sprite_factors(const SpriteSpec& spec, std::size_t id) {
  if (id >= spec.template_count()) throw std::out_of_range("sprite template " + std::to_string(id) + " out of range");
  const std::size_t o = offsets(spec);
  SpriteFactors f{};
  f.background = id % spec.background_shades;
  id /= spec.background_shades;
  f.dx = static_cast<int>(id % o) - static_cast<int>(spec.jitter);
  id /= o;
  f.dy = static_cast<int>(id % o) - static_cast<int>(spec.jitter);
  id /= o;
  f.size_bin = id % spec.size_bins;
  id /= spec.size_bins;
  f.palette = id % kSpritePalettes;
  f.shape = id / kSpritePalettes;
  return f;
}

std::vector<std::size_t> sprite_labels(const SpriteSpec& spec, std::size_t id) {
  const SpriteFactors f = sprite_factors(spec, id);
  return {f.size_bin, f.shape, f.palette};
}

std::vector<float> render_sprite(const SpriteSpec& spec, std::size_t id) {
  spec.validate();
  const SpriteFactors f = sprite_factors(spec, id);
  const std::size_t R = spec.resolution;
  const double r_px = static_cast<double>(R);
  const double t = spec.size_bins > 1 ? static_cast<double>(f.size_bin) / static_cast<double>(spec.size_bins - 1) : 0.5;
  const double radius = r_px * (0.14 + 0.20 * t);
  const double hole = 0.5 * radius;
  const double cx = 0.5 * r_px + f.dx, cy = 0.5 * r_px + f.dy;
  const double bg = 0.10 + 0.12 * static_cast<double>(f.background);
  const auto& colour = kPalettes[f.palette];
  const std::size_t ss = spec.supersample;

  std::vector<float> out(R * R * 3);
  for (std::size_t i = 0; i < R; ++i) {
    for (std::size_t j = 0; j < R; ++j) {
      std::size_t inside = 0;
      for (std::size_t a = 0; a < ss; ++a) {
        for (std::size_t b = 0; b < ss; ++b) {
          const double py = static_cast<double>(i) + (static_cast<double>(a) + 0.5) / static_cast<double>(ss) - cy;
          const double px = static_cast<double>(j) + (static_cast<double>(b) + 0.5) / static_cast<double>(ss) - cx;
          const double d2 = px * px + py * py;
          const bool hit = d2 <= radius * radius && (f.shape == 0 || d2 > hole * hole);
          inside += hit ? 1 : 0;
        }
      }
      const double cover = static_cast<double>(inside) / static_cast<double>(ss * ss);
      for (std::size_t c = 0; c < 3; ++c) out[(i * R + j) * 3 + c] = quantize(cover * colour[c] + (1.0 - cover) * bg);
    }
  }
  return out;
}

Dataset sprite_templates(const SpriteSpec& spec) {
  spec.validate();
  Dataset data;
  data.sample_shape = {spec.resolution, spec.resolution, 3};
  data.attribute_count = 3;
  for (std::size_t id = 0; id < spec.template_count(); ++id) {
    data.push(render_sprite(spec, id), sprite_labels(spec, id));
    data.template_ids.push_back(id);
    data.filenames.push_back(sprite_name(id));
  }
  return data;
}

Dataset gen_sprites(const SpriteSpec& spec, std::size_t n, std::uint64_t seed,
                    const std::function<bool(std::size_t)>& allow) {
  spec.validate();
  std::vector<std::size_t> pool;
  for (std::size_t id = 0; id < spec.template_count(); ++id) {
    if (!allow || allow(id)) pool.push_back(id);
  }
  if (pool.empty()) throw std::invalid_argument("gen_sprites: no template accepted");
  std::vector<std::vector<float>> cache(spec.template_count());
  Rng rng = derive(seed, 30);
  Dataset data;
  data.sample_shape = {spec.resolution, spec.resolution, 3};
  data.attribute_count = 3;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t id = pool[uniform_index(rng, pool.size())];
    if (cache[id].empty()) cache[id] = render_sprite(spec, id);
    data.push(cache[id], sprite_labels(spec, id));
    data.template_ids.push_back(id);
    data.filenames.push_back(sprite_name(i));
  }
  return data;
}

double min_template_distance(const SpriteSpec& spec) {
  const Dataset t = sprite_templates(spec);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < t.size(); ++a) {
    const auto x = t.sample(a);
    for (std::size_t b = a + 1; b < t.size(); ++b) {
      const auto y = t.sample(b);
      double d = 0;
      for (std::size_t k = 0; k < x.size() && d < best; ++k) {
        const double e = static_cast<double>(x[k]) - static_cast<double>(y[k]);
        d += e * e;
      }
      best = std::min(best, d);
    }
  }
  return best;
}

// ---------------------------------------------------------------- ring of Gaussians

std::vector<double> ring_center(const RingSpec& ring, std::size_t mode) {
  const double a = 2.0 * std::numbers::pi * static_cast<double>(mode) / static_cast<double>(ring.modes);
  return {ring.radius * std::cos(a), ring.radius * std::sin(a)};
}

Dataset gen_ring_gaussians(const RingSpec& ring, std::size_t n, std::uint64_t seed) {
  if (ring.modes < 2) throw std::invalid_argument("ring: need at least two modes");
  if (!(ring.sigma > 0)) throw std::invalid_argument("ring: sigma must be positive");
  Rng rng = derive(seed, 31);
  Dataset data;
  data.sample_shape = {2};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = uniform_index(rng, ring.modes);
    const auto c = ring_center(ring, m);
    const float p[2] = {static_cast<float>(c[0] + ring.sigma * standard_normal(rng)),
                        static_cast<float>(c[1] + ring.sigma * standard_normal(rng))};
    data.push(p, {});
    data.template_ids.push_back(m);
  }
  return data;
}

std::vector<std::size_t> mode_counts(const RingSpec& ring, std::span<const float> points) {
  if (points.size() % 2 != 0) throw ad::ShapeError("mode_counts: expected [n, 2] points");
  std::vector<std::size_t> counts(ring.modes, 0);
  const double reach = 9.0 * ring.sigma * ring.sigma;
  for (std::size_t m = 0; m < ring.modes; ++m) {
    const auto c = ring_center(ring, m);
    for (std::size_t i = 0; i < points.size(); i += 2) {
      const double dx = points[i] - c[0], dy = points[i + 1] - c[1];
      if (dx * dx + dy * dy <= reach) ++counts[m];
    }
  }
  return counts;
}

std::size_t covered_modes(const RingSpec& ring, std::span<const float> points, double min_fraction) {
  const auto counts = mode_counts(ring, points);
  const double n = static_cast<double>(points.size() / 2);
  return static_cast<std::size_t>(
      std::count_if(counts.begin(), counts.end(), [&](std::size_t c) { return c > 0 && c >= min_fraction * n; }));
}

// ---------------------------------------------------------------- files

ad::Tensor<float> read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  const auto token = [&]() {
    std::string t;
    char ch;
    while (f.get(ch)) {
      if (ch == '#') {
        std::string rest;
        std::getline(f, rest);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  if (token() != "P6") throw DataError(path.string() + ": not a binary PPM (P6)");
  const std::size_t w = parse_index(token(), path.string() + " width");
  const std::size_t h = parse_index(token(), path.string() + " height");
  const std::size_t maxval = parse_index(token(), path.string() + " maxval");
  if (w == 0 || h == 0) throw DataError(path.string() + ": empty image");
  if (maxval == 0 || maxval > 255) throw DataError(path.string() + ": only 8-bit PPM is supported");
  std::vector<unsigned char> bytes(w * h * 3);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size())) throw DataError(path.string() + ": truncated pixel data");
  ad::Tensor<float> out(ad::Shape{h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    out.data[i] = static_cast<float>(bytes[i]) / static_cast<float>(maxval);
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, std::span<const float> hwc, std::size_t height, std::size_t width) {
  if (hwc.size() != height * width * 3) throw ad::ShapeError("write_ppm: expected height * width * 3 values");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << "P6\n" << width << ' ' << height << "\n255\n";
  std::vector<unsigned char> bytes(hwc.size());
  for (std::size_t i = 0; i < hwc.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(static_cast<double>(hwc[i]), 0.0, 1.0) * 255.0));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing " + path.string());
}

void write_image_dataset(const std::filesystem::path& dir, const Dataset& data,
                         const std::vector<models::AttributeSpec>& attributes) {
  if (data.sample_shape.size() != 3 || data.sample_shape[2] != 3) {
    throw ad::ShapeError("write_image_dataset: samples must be [H, W, 3]");
  }
  if (data.attribute_count != attributes.size()) throw DataError("write_image_dataset: attribute count mismatch");
  if (data.filenames.size() != data.size()) throw DataError("write_image_dataset: every sample needs a file name");
  std::filesystem::create_directories(dir / "images");
  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw DataError("cannot write " + (dir / "labels.csv").string());
  labels << "filename";
  for (const auto& a : attributes) labels << ',' << a.name;
  labels << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    write_ppm(dir / "images" / data.filenames[i], data.sample(i), data.sample_shape[0], data.sample_shape[1]);
    labels << data.filenames[i];
    for (auto l : data.labels_of(i)) labels << ',' << l;
    labels << '\n';
  }
  if (!labels) throw DataError("failed writing labels.csv");
  if (data.template_ids.size() == data.size()) {
    std::ofstream t(dir / "templates.csv");
    t << "filename,template\n";
    for (std::size_t i = 0; i < data.size(); ++i) t << data.filenames[i] << ',' << data.template_ids[i] << '\n';
    if (!t) throw DataError("failed writing templates.csv");
  }
}

Dataset load_image_dataset(const std::filesystem::path& dir, const std::vector<models::AttributeSpec>& attributes) {
  std::ifstream labels(dir / "labels.csv");
  if (!labels) throw DataError("missing " + (dir / "labels.csv").string());
  std::string line;
  if (!std::getline(labels, line)) throw DataError("labels.csv: empty file");
  const auto header = split(trim(line));
  const auto find = [&](const std::string& name) {
    const auto it = std::find_if(header.begin(), header.end(), [&](const std::string& h) { return trim(h) == name; });
    if (it == header.end()) throw DataError("labels.csv: missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t file_column = find("filename");
  std::vector<std::size_t> column(attributes.size());
  for (std::size_t a = 0; a < attributes.size(); ++a) column[a] = find(attributes[a].name);

  Dataset data;
  data.attribute_count = attributes.size();
  std::size_t row = 1;
  while (std::getline(labels, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      throw DataError("labels.csv line " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                      " fields");
    }
    std::vector<std::size_t> l(attributes.size());
    for (std::size_t a = 0; a < attributes.size(); ++a) {
      l[a] = parse_index(trim(fields[column[a]]), "labels.csv line " + std::to_string(row));
      if (l[a] >= attributes[a].arity) {
        throw DataError("labels.csv line " + std::to_string(row) + ": " + attributes[a].name + " out of range");
      }
    }
    const std::string name = trim(fields[file_column]);
    const auto path = dir / "images" / name;
    if (!std::filesystem::exists(path)) throw DataError("labels.csv line " + std::to_string(row) + ": missing " + path.string());
    const ad::Tensor<float> img = read_ppm(path);
    if (data.sample_shape.empty()) data.sample_shape = img.shape;
    if (img.shape != data.sample_shape) throw DataError(path.string() + ": image size differs from the first image");
    data.push(img.data, l);
    data.filenames.push_back(name);
  }
  if (data.size() == 0) throw DataError("labels.csv: no samples");

  std::ifstream templates(dir / "templates.csv");
  if (templates) {
    std::getline(templates, line);
    std::vector<std::size_t> ids;
    while (std::getline(templates, line)) {
      line = trim(line);
      if (line.empty()) continue;
      const auto fields = split(line);
      if (fields.size() != 2) throw DataError("templates.csv: expected two fields");
      ids.push_back(parse_index(trim(fields[1]), "templates.csv"));
    }
    if (ids.size() == data.size()) data.template_ids = std::move(ids);
  }
  return data;
}

void write_points_csv(const std::filesystem::path& path, const Dataset& data) {
  if (data.sample_shape != ad::Shape{2}) throw ad::ShapeError("write_points_csv: samples must be 2-vectors");
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << "x,y,mode\n";
  f.precision(9);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = data.sample(i);
    f << p[0] << ',' << p[1] << ',' << (data.template_ids.size() == data.size() ? data.template_ids[i] : 0) << '\n';
  }
  if (!f) throw DataError("failed writing " + path.string());
}

Dataset load_points_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("missing " + path.string());
  std::string line;
  if (!std::getline(f, line) || split(trim(line)).size() < 2) throw DataError(path.string() + ": missing header");
  Dataset data;
  data.sample_shape = {2};
  std::size_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() < 2) throw DataError(path.string() + " line " + std::to_string(row) + ": expected x,y");
    float p[2];
    for (int k = 0; k < 2; ++k) {
      try {
        std::size_t pos = 0;
        p[k] = std::stof(fields[static_cast<std::size_t>(k)], &pos);
      } catch (const std::exception&) {
        throw DataError(path.string() + " line " + std::to_string(row) + ": bad number");
      }
    }
    data.push(p, {});
    if (fields.size() > 2) data.template_ids.push_back(parse_index(trim(fields[2]), path.string()));
  }
  if (data.template_ids.size() != data.size()) data.template_ids.clear();
  return data;
}

}  // namespace ucg::harness
