// One line per acceptance criterion. Pass criterion numbers to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ucg/diversity.hpp"
#include "ucg/harness/cli.hpp"
#include "ucg/harness/config.hpp"
#include "ucg/harness/data.hpp"
#include "ucg/harness/gradsuite.hpp"
#include "ucg/latent.hpp"
#include "ucg/losses.hpp"
#include "ucg/trainer.hpp"

using namespace ucg;
namespace fs = std::filesystem;
using ad::Shape;
using ad::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

harness::RunConfig preset(const std::string& name, const std::vector<std::string>& overrides = {}) {
  return harness::load_config(fs::path(UCG_SOURCE_DIR) / "configs" / name, overrides);
}

double entropy_of(const std::vector<double>& mass) { return -losses::entropy_loss(mass); }

// ---------------------------------------------------------------- toy runs

struct ToyRun {
  std::size_t covered = 0;
  std::vector<std::size_t> counts;
  double soft_entropy = 0;    // node histogram
  double binned_entropy = 0;  // equal arcs
  std::vector<trainer::StepReport> reports;
  double seconds = 0;
};

ToyRun toy_run(harness::RunConfig rc, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  rc.seed = seed;
  rc.train.seed = seed;
  const Dataset data = harness::gen_ring_gaussians(rc.data.ring, rc.data.n, seed);
  trainer::GanTrainer t(rc.model, rc.train);
  ToyRun run;
  run.reports = trainer::train(t, data).reports;

  Rng rng = derive(seed, 60);
  const auto z = latent::sample_codes<float>(rc.model.latent, 10000, rc.model.latent_dims, rng);
  ad::Tape<float> tape;
  const auto points = t.G.forward(t.G.bind_constant(tape), tape.constant(z), models::ForwardOptions{});
  run.counts = harness::mode_counts(rc.data.ring, points.value());
  run.covered = harness::covered_modes(rc.data.ring, points.value());

  if (rc.model.latent == latent::LatentKind::unit_complex) {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto codes = diversity::encoder_embedding(t.E, data.gather(all), 1000);
    std::vector<double> angles;
    for (std::size_t i = 0; i + 1 < codes.values.size(); i += 2) {
      angles.push_back(std::atan2(codes.values[i + 1], codes.values[i]));
    }
    run.soft_entropy = entropy_of(losses::cyclic_histogram(angles, 36).mass);
    run.binned_entropy = entropy_of(losses::binned_histogram(angles, 36));
  }
  run.seconds = seconds_since(t0);
  return run;
}

std::map<std::pair<std::string, std::uint64_t>, ToyRun> toy_cache;

const ToyRun& cached_toy(const std::string& config, std::uint64_t seed) {
  const auto key = std::make_pair(config, seed);
  auto it = toy_cache.find(key);
  if (it == toy_cache.end()) it = toy_cache.emplace(key, toy_run(preset(config), seed)).first;
  return it->second;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------- criteria

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t cases = 0, failed = 0;
  double worst = 0;
  std::string worst_name, failures;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& r : harness::run_gradient_suite(seed)) {
      ++cases;
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        worst_name = r.name;
      }
      if (!r.passed) {
        ++failed;
        failures += " " + r.name + fmt("@%llu", static_cast<unsigned long long>(seed));
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs <= 120,
          fmt("%zu checks over 10 seeds, %zu failed%s; worst rel error %.3g (%s); %.1f s of 120", cases, failed,
              failures.c_str(), worst, worst_name.c_str(), secs)};
}

Outcome histogram() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = derive(2, 0);
  double worst_sum = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + uniform_index(rng, 63);
    const std::size_t n = 1 + uniform_index(rng, 500);
    const auto nodes = losses::histogram_nodes(k);
    std::vector<double> angles(n);
    for (auto& a : angles) {
      switch (uniform_index(rng, 4)) {
        case 0: a = nodes[uniform_index(rng, k)]; break;  // exactly on a node
        case 1: a = std::numbers::pi; break;               // the wrap point
        default: a = uniform(rng, -std::numbers::pi, std::numbers::pi);
      }
    }
    const auto h = losses::cyclic_histogram(angles, k);
    double s = 0;
    for (double m : h.mass) s += m;
    worst_sum = std::max(worst_sum, std::fabs(s - 1));
  }
  double worst_bound = 0;
  for (std::size_t k = 2; k <= 64; ++k) {
    const std::vector<double> uniform_mass(k, 1.0 / static_cast<double>(k));
    worst_bound = std::max(worst_bound, std::fabs(losses::entropy_loss(uniform_mass) + std::log(static_cast<double>(k))));
  }
  std::vector<double> angles(100000);
  for (auto& a : angles) a = uniform(rng, -std::numbers::pi, std::numbers::pi);
  const auto soft = losses::cyclic_histogram(angles, 36);
  const auto hard = losses::binned_histogram(angles, 36);
  double dev_soft = 0, dev_hard = 0;
  for (std::size_t r = 0; r < 36; ++r) {
    dev_soft = std::max(dev_soft, std::fabs(soft.mass[r] - 1.0 / 36));
    dev_hard = std::max(dev_hard, std::fabs(hard[r] - 1.0 / 36));
  }
  const double secs = seconds_since(t0);
  return {worst_sum <= 1e-6 && worst_bound <= 1e-6 && dev_soft < 0.004 && dev_hard < 0.004 && secs <= 60,
          fmt("max |sum - 1| %.2g over 1000 inputs; max |H(uniform) - ln k| %.2g; N=1e5 k=36 max deviation "
              "%.5f (nodes) %.5f (binned) < 0.004; %.2f s",
              worst_sum, worst_bound, dev_soft, dev_hard, secs)};
}

Outcome latent_fit() {
  const ToyRun& run = cached_toy("toy.json", 0);
  const double target = 0.97 * std::log(36.0);
  return {run.soft_entropy >= target && run.binned_entropy >= target && run.reports.size() <= 2000 &&
              run.seconds <= 600,
          fmt("%zu steps; angle entropy %.4f (nodes) %.4f (binned) vs %.4f = 0.97 ln 36; %.1f s", run.reports.size(),
              run.soft_entropy, run.binned_entropy, target, run.seconds)};
}

Outcome mode_coverage() {
  std::vector<double> unit, box;
  std::size_t good = 0;
  double secs = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto& u = cached_toy("toy.json", seed);
    const auto& b = cached_toy("toy_uniform.json", seed);
    unit.push_back(static_cast<double>(u.covered));
    box.push_back(static_cast<double>(b.covered));
    good += u.covered >= 7 ? 1 : 0;
    secs += u.seconds + b.seconds;
  }
  std::string u_list, b_list;
  for (double v : unit) u_list += (u_list.empty() ? "" : " ") + fmt("%g", v);
  for (double v : box) b_list += (b_list.empty() ? "" : " ") + fmt("%g", v);
  const double mu = median(unit), mb = median(box);
  return {good >= 7 && mu > mb && secs <= 1800,
          fmt("unit-complex covered [%s], %zu/10 runs >= 7; uniform ablation [%s]; medians %.1f vs %.1f; %.0f s",
              u_list.c_str(), good, b_list.c_str(), mu, mb, secs)};
}

Outcome birthday() {
  const auto t0 = std::chrono::steady_clock::now();
  harness::SpriteSpec spec;
  spec.resolution = 16;
  const Dataset templates = harness::sprite_templates(spec);
  const double tau = 0.5 * harness::min_template_distance(spec);
  const diversity::Sampler sprites = [&](std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = uniform_index(rng, templates.size());
    return templates.gather(idx);
  };
  const diversity::Embedder raw = [](const Tensor<float>& s) { return diversity::raw_pixel_embedding(s); };
  std::size_t inside = 0;
  std::string estimates;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    diversity::BirthdayOptions opts;
    opts.seed = seed;
    const auto s = diversity::birthday_estimate(sprites, raw, tau, opts);
    inside += (!s.lower_bound && s.estimate >= 250 && s.estimate <= 4000) ? 1 : 0;
    estimates += (seed ? " " : "") + fmt("%g", s.estimate);
  }

  const diversity::Sampler days = [](std::size_t n, Rng& rng) {
    Tensor<float> out(Shape{n, 1});
    for (auto& v : out.data) v = static_cast<float>(uniform_index(rng, 365));
    return out;
  };
  diversity::BirthdayOptions opts;
  opts.n0 = 23;
  opts.max_n = 23;
  opts.trials = 1000;
  opts.confidence = 1.0;
  opts.seed = 1;
  const double rate = diversity::birthday_estimate(days, raw, 0.5, opts).trials.at(0).duplicate_rate;
  const double exact = diversity::birthday_probability(365, 23);
  const double secs = seconds_since(t0);
  return {templates.size() == 1000 && inside >= 19 && std::fabs(rate - exact) <= 0.1 && secs <= 300,
          fmt("M=1000 sprites: %zu/20 estimates in [250, 4000] (%s); M=365 N=23 rate %.3f vs exact %.4f; %.1f s",
              inside, estimates.c_str(), rate, exact, secs)};
}

models::ModelConfig small_sprite_model(const harness::SpriteSpec& spec) {
  models::ModelConfig m;
  m.resolution = spec.resolution;
  m.attributes = spec.attributes();
  m.latent_dims = 4;
  m.base_channels = 4;
  m.max_channels = 8;
  m.min_channels = 4;
  m.classifier_channels = 2;
  return m;
}

Outcome isolation() {
  const auto t0 = std::chrono::steady_clock::now();
  harness::SpriteSpec spec;
  spec.resolution = 16;
  const Dataset data = harness::gen_sprites(spec, 400, 7);
  const auto model = small_sprite_model(spec);

  trainer::TrainConfig only8;
  only8.batch = 8;
  only8.steps = 100;
  only8.adam.learning_rate = 1e-3;
  only8.weights = {0.0, 1.0, 1.0, 0.0, 0.0};
  only8.audit_isolation = true;
  only8.seed = 3;
  trainer::GanTrainer a(model, only8, models::build_attribute_classifier<float>(model, 5));
  const auto before = a.E.params;
  double grad = 0, leak = 0;
  std::size_t g_moved = 0;
  const auto g_before = a.G.params;
  for (const auto& r : trainer::train(a, data).reports) {
    grad = std::max(grad, r.encoder_grad);
    leak = std::max(leak, r.encoder_leak);
  }
  bool unchanged = true;
  // Batch-norm running averages are buffers, not parameters, and do move.
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (before[i].trainable) unchanged = unchanged && before[i].value.data == a.E.params[i].value.data;
  }
  for (std::size_t i = 0; i < g_before.size(); ++i) g_moved += g_before[i].value.data != a.G.params[i].value.data;

  trainer::TrainConfig full = only8;
  full.weights = {};
  trainer::GanTrainer b(model, full, models::build_attribute_classifier<float>(model, 5));
  double full_leak = 0, full_grad = 0;
  for (const auto& r : trainer::train(b, data).reports) {
    full_leak = std::max(full_leak, r.encoder_leak);
    full_grad = std::min(full_grad == 0 ? r.encoder_grad : full_grad, r.encoder_grad);
  }
  const double secs = seconds_since(t0);
  return {grad == 0 && leak == 0 && unchanged && g_moved > 0 && full_leak == 0 && full_grad > 0,
          fmt("eq8 only, 100 steps: max |grad E| %g, max leak %g, trainable E bit-identical %s, %zu G tensors moved; "
              "all losses, 100 steps: max leak from generated samples %g, min |grad E| %.3g; %.1f s",
              grad, leak, unchanged ? "yes" : "no", g_moved, full_leak, full_grad, secs)};
}

Outcome began_balance() {
  losses::BeganState state;
  state.lambda_k = 0.001;
  state.gamma_b = 0.5;
  const auto step = losses::began_update(state, 1.0, 0.3);
  const bool hand = std::fabs(state.k - 0.0002) <= 1e-15 && step.k_used == 0.0;

  const ToyRun& run = cached_toy("toy.json", 0);
  const auto cfg = preset("toy.json");
  double prev = 0, worst = 0, kmin = 1, kmax = 0;
  bool finite = true;
  for (const auto& r : run.reports) {
    const double expect = std::clamp(prev + cfg.train.began_lambda * (cfg.train.began_gamma * r.loss_real - r.loss_fake), 0.0, 1.0);
    worst = std::max(worst, std::fabs(expect - r.k));
    kmin = std::min(kmin, r.k);
    kmax = std::max(kmax, r.k);
    finite = finite && std::isfinite(r.convergence);
    prev = r.k;
  }
  return {hand && kmin >= 0 && kmax <= 1 && finite && worst <= 1e-12,
          fmt("controller: k 0 -> %.10g for (0.001, 0.5, 1, 0.3); %zu-step run: k in [%.4g, %.4g], M_t finite %s, "
              "max deviation from the recurrence %.2g",
              state.k, run.reports.size(), kmin, kmax, finite ? "yes" : "no", worst)};
}

Outcome attribute_classifier() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rc = preset("sprites.json");
  const auto& spec = rc.data.sprite;
  // Held out by template parity: test sprites are templates never seen in training.
  const Dataset train = harness::gen_sprites(spec, rc.data.n, 11, [](std::size_t id) { return id % 2 == 0; });
  const Dataset test = harness::gen_sprites(spec, 1000, 12, [](std::size_t id) { return id % 2 == 1; });
  auto result = trainer::pretrain_attribute_classifier(train, rc.model, rc.attribute);
  const auto acc = trainer::attribute_accuracy(result.network, test);
  bool categorical_ok = true;
  std::string accs;
  for (std::size_t a = 0; a < acc.size(); ++a) {
    const auto& attr = rc.model.attributes[a];
    if (attr.kind == models::AttributeSpec::Kind::categorical) categorical_ok = categorical_ok && acc[a] >= 0.95;
    accs += fmt("%s%s %.3f", a ? ", " : "", attr.name.c_str(), acc[a]);
  }

  // A perfect prediction: the true bin holds all the probability mass.
  ad::Tape<double> tape;
  Tensor<double> logits(Shape{3, 4}, -100.0);
  const std::vector<std::size_t> bins{0, 2, 3};
  for (std::size_t b = 0; b < 3; ++b) logits[b * 4 + bins[b]] = 100.0;
  const double locality = losses::locality_loss(tape.constant(logits), bins, 1.0).item();

  losses::MixerState one;
  one.update(std::vector<double>{4.2});
  const auto v = tape.constant(Tensor<double>::scalar(4.2));
  const auto gamma = tape.constant(Tensor<double>::scalar(0.37));
  const std::vector<ad::Var<double>> single{v};
  const double mixed = losses::mix_losses<double>(single, gamma, one.weights()).item();
  losses::MixerState two;
  two.update(std::vector<double>{1.0, 3.0});
  const auto w = two.weights();
  const bool mixer_ok = one.weights() == std::vector<double>{1.0} && std::fabs(mixed - 4.2) <= 1e-12 &&
                        std::fabs(w[0] - 2.0) <= 1e-12 && std::fabs(w[1] - 2.0 / 3.0) <= 1e-12;
  const double secs = seconds_since(t0);
  return {categorical_ok && locality < 1e-4 && mixer_ok,
          fmt("held-out accuracy after %zu steps: %s; perfect one-hot locality %.3g; mixer n=1 gives %.12g for 4.2, "
              "s=(1,3) weights (%.12g, %.12g); %.1f s",
              rc.attribute.steps, accs.c_str(), locality, mixed, w[0], w[1], secs)};
}

// Files under `dir`, relative path -> bytes, with the wall-time column cut
// from metrics.csv.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream f(e.path(), std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    std::string bytes = s.str();
    if (e.path().filename() == "metrics.csv") {
      std::string cut, line;
      std::istringstream lines(bytes);
      while (std::getline(lines, line)) cut += line.substr(0, line.rfind(',')) + "\n";
      bytes = cut;
    }
    out[fs::relative(e.path(), dir).string()] = bytes;
  }
  return out;
}

bool run_pipeline(const fs::path& root, std::string& log) {
  fs::remove_all(root);
  const std::string cfg = (fs::path(UCG_SOURCE_DIR) / "configs" / "sprites.json").string();
  const std::string r = root.string();
  const std::vector<std::vector<std::string>> steps{
      {"gen-data", "--config", cfg, "--seed", "5", "--out", r + "/data", "--n", "300", "--set", "data.heldout_n=60"},
      {"train-attr", "--data", r + "/data", "--out", r + "/attr", "--set", "train.attribute.steps=30"},
      {"train-gan", "--data", r + "/data", "--out", r + "/gan", "--checkpoint", r + "/attr/classifier.ucg", "--set",
       "train.steps=20", "--set", "train.checkpoint_every=10"},
      {"eval-diversity", "--checkpoint", r + "/gan/checkpoint.ucg", "--data", r + "/data", "--out", r + "/diversity",
       "--set", "diversity.max_n=240"},
      {"latent-hist", "--checkpoint", r + "/gan/checkpoint.ucg", "--data", r + "/data", "--out", r + "/hist"},
      {"sample", "--checkpoint", r + "/gan/checkpoint.ucg", "--out", r + "/samples", "--n", "4", "--attrs",
       "gender=1,ethnicity=2,age_bin=3"},
  };
  for (const auto& args : steps) {
    std::ostringstream out, err;
    const int code = harness::run_cli(args, out, err);
    if (code != 0) {
      log = args[0] + " exited " + std::to_string(code) + ": " + err.str();
      return false;
    }
  }
  return true;
}

Outcome determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path base = fs::temp_directory_path() / "ucg_acceptance_pipeline";
  std::string log;
  if (!run_pipeline(base / "a", log) || !run_pipeline(base / "b", log)) return {false, log};
  const auto a = snapshot(base / "a");
  const auto b = snapshot(base / "b");
  std::size_t differ = 0, checkpoints = 0;
  std::string first;
  for (const auto& [name, bytes] : a) {
    checkpoints += name.ends_with(".ucg") ? 1 : 0;
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      if (differ++ == 0) first = name;
    }
  }
  const bool same_files = a.size() == b.size();
  fs::remove_all(base);
  const double secs = seconds_since(t0);
  return {differ == 0 && same_files && checkpoints >= 4,
          fmt("gen-data -> train-attr -> train-gan -> eval-diversity -> latent-hist -> sample twice: %zu files, %zu "
              "checkpoints, %zu differ%s%s; %.1f s",
              a.size(), checkpoints, differ, differ ? ", first " : "", first.c_str(), secs)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"cyclic histogram", histogram},
      {"latent-space fit", latent_fit},
      {"mode coverage", mode_coverage},
      {"birthday estimator", birthday},
      {"encoder isolation", isolation},
      {"BEGAN balance", began_balance},
      {"attribute classifier", attribute_classifier},
      {"determinism", determinism},
  };
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!chosen.empty() && !chosen.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
