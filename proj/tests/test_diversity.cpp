#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "ucg/diversity.hpp"
#include "ucg/harness/data.hpp"

using namespace ucg;
using namespace ucg::diversity;
using ad::Shape;
using ad::Tensor;

namespace {

Embeddings rows(std::vector<std::vector<double>> r) {
  Embeddings e;
  e.rows = r.size();
  e.dim = r.empty() ? 0 : r[0].size();
  for (const auto& x : r) e.values.insert(e.values.end(), x.begin(), x.end());
  return e;
}

std::vector<Pair> brute_force(const Embeddings& e, std::size_t k) {
  std::vector<Pair> all;
  for (std::size_t i = 0; i < e.rows; ++i) {
    for (std::size_t j = i + 1; j < e.rows; ++j) {
      double d = 0;
      for (std::size_t c = 0; c < e.dim; ++c) d += std::pow(e.values[i * e.dim + c] - e.values[j * e.dim + c], 2);
      all.push_back({i, j, d});
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const Pair& a, const Pair& b) { return a.distance < b.distance; });
  all.resize(k);
  return all;
}

// Uniform draws over m items, each item a distinct integer in one dimension.
Sampler uniform_items(std::size_t m) {
  return [m](std::size_t n, Rng& rng) {
    Tensor<float> out(Shape{n, 1});
    for (auto& v : out.data) v = static_cast<float>(uniform_index(rng, m));
    return out;
  };
}

const Embedder raw = [](const Tensor<float>& s) { return raw_pixel_embedding(s); };

harness::SpriteSpec sprite_spec() {
  harness::SpriteSpec spec;
  spec.resolution = 16;
  return spec;  // 2 x 5 x 4 x 25 = 1000 templates
}

}  // namespace

TEST_CASE("top_k_pairs examples") {
  const auto same = top_k_pairs(rows({{1, 2}, {5, 5}, {1, 2}}), 1);
  REQUIRE(same.size() == 1);
  CHECK(same[0] == Pair{0, 2, 0.0});

  const auto line = top_k_pairs(rows({{0}, {1}, {3}}), 1);
  CHECK(line == std::vector<Pair>{{0, 1, 1.0}});

  const auto all = top_k_pairs(rows({{0}, {1}, {3}, {7}, {8}}), 10);
  CHECK(all.size() == 10);
  CHECK(std::is_sorted(all.begin(), all.end(), [](const Pair& a, const Pair& b) { return a.distance < b.distance; }));

  CHECK_THROWS_AS(top_k_pairs(rows({{0}}), 0), std::invalid_argument);
  CHECK_THROWS_AS(top_k_pairs(rows({{0}, {1}}), 2), std::invalid_argument);
}

TEST_CASE("top_k_pairs matches brute force, ties included") {
  Rng rng = derive(3, 0);
  for (std::size_t n : {2u, 3u, 17u, 120u, 500u}) {
    Embeddings e;
    e.rows = n;
    e.dim = 3;
    // Small integer grid so equal distances are common.
    for (std::size_t i = 0; i < n * e.dim; ++i) e.values.push_back(static_cast<double>(uniform_index(rng, 4)));
    const std::size_t total = n * (n - 1) / 2;
    for (std::size_t k : {std::size_t{1}, std::min<std::size_t>(10, total), total}) {
      CAPTURE(n);
      CAPTURE(k);
      CHECK(top_k_pairs(e, k) == brute_force(e, k));
    }
  }
}

TEST_CASE("duplicate decision is a strict threshold") {
  CHECK(duplicate_decision(0.0, 1e-9));
  CHECK(duplicate_decision(0.0, 5.0));
  CHECK_FALSE(duplicate_decision(0.25, 0.25));
  CHECK(duplicate_decision(0.2499, 0.25));
  CHECK_THROWS_AS(duplicate_decision(0.0, 0.0), std::invalid_argument);
}

TEST_CASE("sprite threshold separates duplicates without errors") {
  const auto spec = sprite_spec();
  const double tau = 0.5 * harness::min_template_distance(spec);
  REQUIRE(tau > 0);
  const Dataset d = harness::gen_sprites(spec, 300, 4);
  const Embeddings e = raw_pixel_embedding(d.gather(std::vector<std::size_t>([&] {
    std::vector<std::size_t> idx(d.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }())));
  std::size_t dup = 0, errors = 0;
  for (std::size_t i = 0; i < e.rows; ++i) {
    for (std::size_t j = i + 1; j < e.rows; ++j) {
      const bool same = d.template_ids[i] == d.template_ids[j];
      dup += same ? 1 : 0;
      errors += duplicate_decision(squared_distance(e.row(i), e.row(j)), tau) != same ? 1 : 0;
    }
  }
  CHECK(dup > 0);
  CHECK(errors == 0);
}

TEST_CASE("exact birthday probability") {
  CHECK(birthday_probability(365, 23) == doctest::Approx(0.507297).epsilon(1e-5));
  CHECK(birthday_probability(365, 1) == 0.0);
  CHECK(birthday_probability(365, 0) == 0.0);
  CHECK(birthday_probability(3, 4) == 1.0);
}

TEST_CASE("measured duplicate rate on 365 items at N = 23") {
  BirthdayOptions opts;
  opts.n0 = 23;
  opts.max_n = 23;
  opts.trials = 1000;
  opts.confidence = 1.0;
  opts.seed = 1;
  const auto s = birthday_estimate(uniform_items(365), raw, 0.5, opts);
  REQUIRE(s.trials.size() == 1);
  CHECK(std::fabs(s.trials[0].duplicate_rate - 0.507) <= 0.1);
  CHECK(s.lower_bound);
}

TEST_CASE("a support far above N squared at the first step gives N squared") {
  BirthdayOptions opts;
  opts.n0 = 250;
  opts.seed = 2;
  const auto s = birthday_estimate(uniform_items(10000), raw, 0.5, opts);
  CHECK(s.final_n == 250);
  CHECK(s.estimate == 62500.0);
  CHECK(s.estimate / 20000.0 == doctest::Approx(3.125));
  CHECK_FALSE(s.lower_bound);
}

TEST_CASE("known sprite support is recovered within a factor of four") {
  const auto spec = sprite_spec();
  const Dataset templates = harness::sprite_templates(spec);
  REQUIRE(templates.size() == 1000);
  const double tau = 0.5 * harness::min_template_distance(spec);
  const Sampler sprites = [&](std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = uniform_index(rng, templates.size());
    return templates.gather(idx);
  };
  std::size_t inside = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    BirthdayOptions opts;
    opts.seed = seed;
    const auto s = birthday_estimate(sprites, raw, tau, opts);
    inside += (!s.lower_bound && s.estimate >= 250 && s.estimate <= 4000) ? 1 : 0;
    // Duplicate frequency grows with N, up to sampling noise.
    for (std::size_t t = 1; t < s.trials.size(); ++t) {
      CHECK(s.trials[t].duplicate_rate >= s.trials[t - 1].duplicate_rate - 0.15);
    }
    for (const auto& p : s.pairs) {
      if (p.distance < tau) CHECK(p.distance == 0.0);
    }
  }
  CHECK(inside >= 19);
}

TEST_CASE("hitting the cap reports a lower bound") {
  const Sampler distinct = [](std::size_t n, Rng& rng) {
    Tensor<float> out(Shape{n, 2});
    for (auto& v : out.data) v = static_cast<float>(uniform(rng, 0, 100));
    return out;
  };
  BirthdayOptions opts;
  opts.max_n = 60;
  const auto s = birthday_estimate(distinct, raw, 1e-9, opts);
  CHECK(s.lower_bound);
  CHECK(s.final_n == 60);
  CHECK(s.trials.size() == 3);
  CHECK(s.estimate == 3600.0);
  CHECK(s.evidence.shape == Shape{60, 2});
  CHECK_THROWS_AS(birthday_estimate(distinct, raw, 1.0, BirthdayOptions{1}), std::invalid_argument);
}

TEST_CASE("report json") {
  BirthdayOptions opts;
  opts.n0 = 40;
  const auto s = birthday_estimate(uniform_items(50), raw, 0.5, opts);
  const auto j = to_json(s);
  CHECK(j["final_n"] == 40);
  CHECK(j["estimate"] == 1600.0);
  CHECK(j["trials"].size() == 1);
  CHECK(j["trials"][0]["n"] == 40);
  REQUIRE(j["pairs"].size() == 10);
  CHECK(j["pairs"][0]["distance"] == 0.0);
  CHECK(j["pairs"][0]["duplicate"] == true);
  CHECK(j["pairs"][0]["i"] < j["pairs"][0]["j"]);
}

TEST_CASE("percentile threshold and embeddings") {
  const Embeddings e = rows({{0}, {1}, {3}, {7}});
  // squared distances: 1 9 49 4 36 16
  CHECK(percentile_threshold(e, 0.01) == 1.0);
  CHECK(percentile_threshold(e, 0.5) == 9.0);
  CHECK(percentile_threshold(e, 1.0) == 49.0);
  CHECK(pairwise_distances(e) == std::vector<double>{1, 9, 49, 4, 36, 16});

  models::ModelConfig cfg;
  cfg.resolution = 8;
  cfg.latent_dims = 3;
  cfg.base_channels = 2;
  cfg.max_channels = 4;
  cfg.min_channels = 2;
  auto E = models::build_encoder<float>(cfg, 1);
  Tensor<float> x(Shape{5, 8, 8, 3}, 0.5f);
  const Embeddings z = encoder_embedding(E, x, 2);
  CHECK(z.rows == 5);
  CHECK(z.dim == 6);
  CHECK(raw_pixel_embedding(x).dim == 192);
  CHECK(parse_embedding_kind("encoder-bottleneck") == EmbeddingKind::encoder_bottleneck);
  CHECK_THROWS_AS(parse_embedding_kind("facenet"), std::invalid_argument);
}
