#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ucg/harness/data.hpp"
#include "ucg/harness/gradsuite.hpp"

using namespace ucg;
using namespace ucg::harness;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ucg_test_harness_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("ring: degenerate mixture, symmetry, per-mode counts") {
  const auto tight = gen_ring_gaussians({8, 2.0, 1e-12}, 1000, 1);
  std::set<std::pair<long, long>> distinct;
  for (std::size_t i = 0; i < tight.size(); ++i) {
    distinct.insert({std::lround(tight.sample(i)[0] * 1e6), std::lround(tight.sample(i)[1] * 1e6)});
  }
  CHECK(distinct.size() == 8);

  const RingSpec ring{8, 2.0, 0.05};
  const std::size_t n = 10000;
  const auto d = gen_ring_gaussians(ring, n, 2);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += d.sample(i)[0];
    my += d.sample(i)[1];
  }
  mx /= n;
  my /= n;
  // Per-coordinate spread of the mixture: radius^2 / 2 + sigma^2.
  const double sd = std::sqrt(ring.radius * ring.radius / 2 + ring.sigma * ring.sigma);
  CHECK(std::fabs(mx) <= 3 * sd / std::sqrt(double(n)));
  CHECK(std::fabs(my) <= 3 * sd / std::sqrt(double(n)));

  std::vector<double> counts(8, 0);
  for (auto m : d.template_ids) counts[m] += 1;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - n / 8.0) * (c - n / 8.0) / (n / 8.0);
  CHECK(chi2 < 18.475);  // 99% quantile, 7 degrees of freedom

  CHECK(covered_modes(ring, d.values) == 8);
  const auto counted = mode_counts(ring, d.values);
  std::size_t total = 0;
  for (auto c : counted) total += c;
  CHECK(total >= 0.99 * n);
  CHECK_THROWS_AS(gen_ring_gaussians({1, 2.0, 0.1}, 10, 0), std::invalid_argument);
  CHECK_THROWS_AS(gen_ring_gaussians({8, 2.0, 0.0}, 10, 0), std::invalid_argument);
}

TEST_CASE("coverage counts only modes above the fraction") {
  const RingSpec ring{4, 1.0, 0.1};
  std::vector<float> pts;
  for (int i = 0; i < 98; ++i) pts.insert(pts.end(), {1.0f, 0.0f});
  pts.insert(pts.end(), {0.0f, 1.0f});
  pts.insert(pts.end(), {0.0f, 0.0f});
  CHECK(mode_counts(ring, pts) == std::vector<std::size_t>{98, 1, 0, 0});
  CHECK(covered_modes(ring, pts, 0.01) == 2);
  CHECK(covered_modes(ring, pts, 0.02) == 1);
}

TEST_CASE("sprites: factor grid without jitter gives distinct templates") {
  SpriteSpec spec;
  spec.size_bins = 10;
  spec.jitter = 0;
  CHECK(spec.template_count() == 100);
  const Dataset t = sprite_templates(spec);
  std::set<std::vector<float>> distinct;
  for (std::size_t i = 0; i < t.size(); ++i) distinct.insert(std::vector<float>(t.sample(i).begin(), t.sample(i).end()));
  CHECK(distinct.size() == 100);
  CHECK(min_template_distance(spec) > 0.0);
}

TEST_CASE("sprites: labels follow the factors") {
  SpriteSpec spec;
  spec.resolution = 16;
  CHECK(spec.template_count() == 1000);
  std::set<std::vector<std::size_t>> triples;
  for (std::size_t id = 0; id < spec.template_count(); ++id) {
    const auto f = sprite_factors(spec, id);
    const auto l = sprite_labels(spec, id);
    CHECK(l == std::vector<std::size_t>{f.size_bin, f.shape, f.palette});
    CHECK(std::abs(f.dx) <= 2);
    triples.insert(l);
  }
  CHECK(triples.size() == 40);
  CHECK_THROWS_AS(sprite_factors(spec, 1000), std::out_of_range);
  const auto attrs = spec.attributes();
  REQUIRE(attrs.size() == 3);
  CHECK(attrs[0].name == "age_bin");
  CHECK(attrs[0].arity == 4);

  const Dataset d = gen_sprites(spec, 50, 3, [](std::size_t id) { return id % 2 == 0; });
  CHECK(d.size() == 50);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d.template_ids[i] % 2 == 0);
    const auto l = d.labels_of(i);
    CHECK(std::vector<std::size_t>(l.begin(), l.end()) == sprite_labels(spec, d.template_ids[i]));
  }
  const Dataset again = gen_sprites(spec, 50, 3, [](std::size_t id) { return id % 2 == 0; });
  CHECK(again.values == d.values);
  spec.jitter = 5;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("ppm: scaling and exact round trip") {
  const auto dir = scratch("ppm");
  {
    std::ofstream f(dir / "white.ppm", std::ios::binary);
    f << "P6\n# comment\n2 1\n255\n";
    const unsigned char px[6] = {255, 255, 255, 0, 128, 255};
    f.write(reinterpret_cast<const char*>(px), 6);
  }
  const auto img = read_ppm(dir / "white.ppm");
  CHECK(img.shape == ad::Shape{1, 2, 3});
  CHECK(img.data[0] == 1.0f);
  CHECK(img.data[3] == 0.0f);
  CHECK(img.data[4] == 128.0f / 255.0f);

  SpriteSpec spec;
  spec.resolution = 16;
  const auto sprite = render_sprite(spec, 123);
  write_ppm(dir / "s.ppm", sprite, 16, 16);
  CHECK(read_ppm(dir / "s.ppm").data == sprite);

  {
    std::ofstream f(dir / "short.ppm", std::ios::binary);
    f << "P6\n4 4\n255\nabc";
  }
  CHECK_THROWS_AS(read_ppm(dir / "short.ppm"), DataError);
  {
    std::ofstream f(dir / "p3.ppm");
    f << "P3\n1 1\n255\n1 2 3\n";
  }
  CHECK_THROWS_AS(read_ppm(dir / "p3.ppm"), DataError);
  CHECK_THROWS_AS(read_ppm(dir / "missing.ppm"), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("image dataset directory round trip and errors") {
  const auto dir = scratch("data");
  SpriteSpec spec;
  spec.resolution = 16;
  const Dataset d = gen_sprites(spec, 20, 5);
  write_image_dataset(dir, d, spec.attributes());
  const Dataset back = load_image_dataset(dir, spec.attributes());
  CHECK(back.values == d.values);
  CHECK(back.labels == d.labels);
  CHECK(back.template_ids == d.template_ids);
  CHECK(back.filenames == d.filenames);
  std::ifstream labels(dir / "labels.csv");
  std::string header;
  std::getline(labels, header);
  CHECK(header == "filename,age_bin,gender,ethnicity");
  std::size_t rows = 0;
  for (std::string line; std::getline(labels, line);) ++rows;
  CHECK(rows == 20);

  // Column order in the CSV is free.
  {
    std::ofstream f(dir / "labels.csv");
    f << "gender,filename,ethnicity,age_bin\n1," << d.filenames[0] << ",4,3\n";
  }
  const Dataset one = load_image_dataset(dir, spec.attributes());
  CHECK(one.labels == std::vector<std::size_t>{3, 1, 4});

  const auto rewrite = [&](const std::string& body) {
    std::ofstream f(dir / "labels.csv");
    f << "filename,age_bin,gender,ethnicity\n" << body;
  };
  rewrite(d.filenames[0] + ",9,0,0\n");
  CHECK_THROWS_AS(load_image_dataset(dir, spec.attributes()), DataError);
  rewrite(d.filenames[0] + ",1,0\n");
  CHECK_THROWS_AS(load_image_dataset(dir, spec.attributes()), DataError);
  rewrite("nope.ppm,1,0,0\n");
  CHECK_THROWS_AS(load_image_dataset(dir, spec.attributes()), DataError);
  rewrite(d.filenames[0] + ",x,0,0\n");
  CHECK_THROWS_AS(load_image_dataset(dir, spec.attributes()), DataError);
  std::filesystem::remove(dir / "labels.csv");
  CHECK_THROWS_AS(load_image_dataset(dir, spec.attributes()), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("points csv round trip") {
  const auto dir = scratch("points");
  const auto d = gen_ring_gaussians({8, 2.0, 0.05}, 100, 6);
  write_points_csv(dir / "ring.csv", d);
  const auto back = load_points_csv(dir / "ring.csv");
  CHECK(back.values == d.values);
  CHECK(back.template_ids == d.template_ids);
  std::filesystem::remove_all(dir);
}

TEST_CASE("shuffled batches are seed-determined") {
  BatchSampler a(50, derive(9, 1)), b(50, derive(9, 1)), c(50, derive(10, 1));
  const auto x = a.next(120), y = b.next(120), z = c.next(120);
  CHECK(x == y);
  CHECK(x != z);
  std::vector<std::size_t> epoch(x.begin(), x.begin() + 50);
  std::sort(epoch.begin(), epoch.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(epoch[i] == i);
}

TEST_CASE("gradient suite passes for two seeds") {
  for (std::uint64_t seed : {0u, 1u}) {
    const auto reports = run_gradient_suite(seed);
    CHECK(reports.size() > 40);
    for (const auto& r : reports) {
      CAPTURE(r.name);
      CAPTURE(r.max_rel_error);
      CHECK(r.checked > 0);
      CHECK(r.passed);
    }
  }
}
