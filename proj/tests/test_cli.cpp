#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ucg/harness/cli.hpp"
#include "ucg/harness/config.hpp"

using namespace ucg;
using namespace ucg::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ucg_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string preset(const std::string& name) { return (fs::path(UCG_SOURCE_DIR) / "configs" / name).string(); }

}  // namespace

TEST_CASE("defaults resolve and presets load") {
  const RunConfig rc = resolve_config(json::object());
  CHECK(rc.model.mode == models::Mode::image);
  CHECK(rc.model.resolution == 32);
  CHECK(rc.model.attributes.size() == 3);
  CHECK(rc.train.batch == 32);
  CHECK(rc.train.weights.entropy == 1.0);
  CHECK_FALSE(rc.diversity.threshold.has_value());

  const RunConfig toy = load_config(preset("toy.json"), {});
  CHECK(toy.model.mode == models::Mode::vector);
  CHECK(toy.model.attributes.empty());
  CHECK(toy.train.hist_bins == 36);
  CHECK(toy.data.ring.sigma == 0.2);
  const RunConfig box = load_config(preset("toy_uniform.json"), {});
  CHECK(box.model.latent == latent::LatentKind::uniform_box);
  for (const char* name : {"sprites.json", "full_scale.json"}) CHECK_NOTHROW(load_config(preset(name), {}));
}

TEST_CASE("config merging rejects unknown keys and wrong types") {
  json base = default_config();
  CHECK_THROWS_AS(merge_config(base, json{{"trian", json::object()}}), ConfigError);
  CHECK_THROWS_AS(merge_config(base, json{{"train", {{"batch", "big"}}}}), ConfigError);
  CHECK_THROWS_AS(merge_config(base, json{{"train", {{"batch", 1.5}}}}), ConfigError);
  CHECK_THROWS_AS(merge_config(base, json{{"train", {{"batch", -3}}}}), ConfigError);
  merge_config(base, json{{"losses", {{"entropy", 2}}}});
  CHECK(base["losses"]["entropy"].is_number_float());
  CHECK(base["losses"]["entropy"] == 2.0);

  apply_override(base, "train.adam.learning_rate=0.01");
  apply_override(base, "latent.kind=uniform-box");
  apply_override(base, "diversity.threshold=3");
  CHECK(base["train"]["adam"]["learning_rate"] == 0.01);
  CHECK(base["latent"]["kind"] == "uniform-box");
  CHECK(base["diversity"]["threshold"] == 3.0);
  apply_override(base, "diversity.threshold=0.5");
  CHECK(base["diversity"]["threshold"] == 0.5);
  CHECK_THROWS_AS(apply_override(base, "train.batch"), ConfigError);
  CHECK_THROWS_AS(apply_override(base, "train..batch=3"), ConfigError);
  CHECK_THROWS_AS(apply_override(base, "train.nope=3"), ConfigError);

  // The entropy term needs the unit-complex latent.
  CHECK_THROWS_AS(resolve_config(base), ConfigError);
  apply_override(base, "losses.entropy=0");
  const RunConfig rc = resolve_config(base);
  CHECK(*rc.diversity.threshold == 0.5);
  CHECK_THROWS_AS(resolve_config(json{{"data", {{"kind", "faces"}}}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(json{{"train", {{"batch", 1}}}}), ConfigError);
}

TEST_CASE("attribute strings") {
  const auto attrs = models::default_attributes(4);
  CHECK(parse_attribute_labels("gender=1,ethnicity=2,age_bin=3", attrs) == std::vector<std::size_t>{3, 1, 2});
  CHECK_THROWS(parse_attribute_labels("gender=1,ethnicity=2", attrs));
  CHECK_THROWS(parse_attribute_labels("gender=2,ethnicity=2,age_bin=3", attrs));
  CHECK_THROWS(parse_attribute_labels("gender=1,gender=1,ethnicity=2,age_bin=3", attrs));
  CHECK_THROWS(parse_attribute_labels("gender=x,ethnicity=2,age_bin=3", attrs));
  CHECK_THROWS(parse_attribute_labels("hair=1,gender=1,ethnicity=2,age_bin=3", attrs));
  CHECK_THROWS(parse_attribute_labels("gender1,ethnicity=2,age_bin=3", attrs));
}

TEST_CASE("exit codes") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"fly"}).code == 2);
  CHECK(cli({"gen-data"}).code == 2);
  CHECK(cli({"gen-data", "--out", "/tmp/x", "--n", "ten"}).code == 2);
  CHECK(cli({"grad-check"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  const auto dir = scratch("codes");
  CHECK(cli({"gen-data", "--out", dir.string(), "--set", "train.nope=1"}).code == 2);
  CHECK(cli({"train-gan", "--data", (dir / "missing").string(), "--out", (dir / "gan").string(), "--set",
             "losses.attribute=0"})
            .code == 1);
  const auto grad = cli({"grad-check", "--all"});
  CHECK(grad.code == 0);
  CHECK(grad.out.find("FAIL") == std::string::npos);
  CHECK(grad.out.find("PASS conv2d ") != std::string::npos);
  CHECK(cli({"grad-check", "tanh", "atan2"}).out.find("2/2 passed") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("sample writes one image per requested sample") {
  const auto dir = scratch("sample");
  const std::string d = dir.string();
  const std::vector<std::string> small{"--set", "data.sprite.resolution=16", "--set", "model.base_channels=2",
                                       "--set", "model.max_channels=4",       "--set", "model.min_channels=2",
                                       "--set", "model.latent_dims=2"};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), small.begin(), small.end());
    return cli(args);
  };
  REQUIRE(with({"gen-data", "--out", d + "/data", "--n", "40"}).code == 0);
  CHECK(fs::exists(dir / "data" / "config.json"));
  // Without a classifier the attribute term must be switched off explicitly.
  CHECK(with({"train-gan", "--data", d + "/data", "--out", d + "/gan", "--set", "train.steps=2"}).code == 2);
  REQUIRE(with({"train-gan", "--data", d + "/data", "--out", d + "/gan", "--set", "train.steps=2", "--set",
                "losses.attribute=0", "--batch", "4"})
              .code == 0);
  const auto r = cli({"sample", "--checkpoint", d + "/gan/checkpoint.ucg", "--n", "4", "--out", d + "/s", "--attrs",
                      "gender=1,ethnicity=2,age_bin=3"});
  CHECK(r.code == 0);
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(dir / "s")) images += e.path().extension() == ".ppm" ? 1 : 0;
  CHECK(images == 4);
  CHECK(cli({"sample", "--checkpoint", d + "/gan/checkpoint.ucg", "--n", "4", "--out", d + "/s2", "--attrs",
             "gender=7,ethnicity=2,age_bin=3"})
            .code == 2);
  CHECK(cli({"sample", "--checkpoint", d + "/gan/nope.ucg", "--out", d + "/s3"}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("latent-hist after toy training sums to one") {
  const auto dir = scratch("hist");
  const std::string d = dir.string();
  REQUIRE(cli({"gen-data", "--config", preset("toy.json"), "--out", d + "/data", "--n", "500"}).code == 0);
  REQUIRE(cli({"train-gan", "--data", d + "/data", "--out", d + "/gan", "--set", "train.steps=20"}).code == 0);
  REQUIRE(cli({"latent-hist", "--checkpoint", d + "/gan/checkpoint.ucg", "--data", d + "/data", "--out", d + "/h",
               "--bins", "36"})
              .code == 0);
  std::ifstream f(dir / "h" / "latent_hist.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line == "node_angle,mass,uniform");
  double total = 0;
  std::size_t rows = 0;
  while (std::getline(f, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    total += std::stod(line.substr(a + 1, b - a - 1));
    CHECK(std::stod(line.substr(b + 1)) == doctest::Approx(1.0 / 36));
    ++rows;
  }
  CHECK(rows == 36);
  CHECK(std::fabs(total - 1.0) <= 1e-6);

  REQUIRE(cli({"sample", "--checkpoint", d + "/gan/checkpoint.ucg", "--n", "5", "--out", d + "/s"}).code == 0);
  std::ifstream pts(dir / "s" / "sample.csv");
  std::size_t lines = 0;
  while (std::getline(pts, line)) ++lines;
  CHECK(lines == 6);
  fs::remove_all(dir);
}
