#include "ucg/harness/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "ucg/autodiff/checkpoint.hpp"
#include "ucg/diversity.hpp"
#include "ucg/harness/config.hpp"
#include "ucg/harness/data.hpp"
#include "ucg/harness/gradsuite.hpp"
#include "ucg/losses.hpp"
#include "ucg/trainer.hpp"

namespace ucg::harness {

namespace fs = std::filesystem;
using ad::Shape;
using ad::Tensor;
using nlohmann::json;

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::optional<std::size_t> n;
  std::string attrs;
  std::size_t bins = 36;
  std::optional<std::size_t> batch;
  std::optional<double> threshold;
  bool all = false;
  std::vector<std::string> set;
  std::vector<std::string> ops;
};

std::string format_number(double v) {
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}

fs::path require_dir(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing ") + flag);
  return value;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  f.flush();
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

// Defaults, then --config (or the config.json saved next to the
// checkpoint or in the data directory), then --set and the dedicated flags.
RunConfig resolve(const Flags& flags, const std::vector<std::string>& flag_overrides) {
  std::optional<fs::path> file;
  if (!flags.config.empty()) {
    file = flags.config;
  } else if (!flags.checkpoint.empty()) {
    const auto beside = fs::path(flags.checkpoint).parent_path() / "config.json";
    if (fs::exists(beside)) file = beside;
  }
  if (!file && !flags.data.empty() && fs::exists(fs::path(flags.data) / "config.json")) {
    file = fs::path(flags.data) / "config.json";
  }
  std::vector<std::string> overrides = flags.set;
  if (flags.seed) overrides.push_back("seed=" + std::to_string(*flags.seed));
  overrides.insert(overrides.end(), flag_overrides.begin(), flag_overrides.end());
  return load_config(file, overrides);
}

void echo_config(const fs::path& dir, const RunConfig& rc) {
  fs::create_directories(dir);
  write_text(dir / "config.json", rc.resolved.dump(2) + "\n");
}

std::vector<ad::NamedTensor> read_entries(const fs::path& path) {
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path.string());
  return ad::read_checkpoint(path);
}

Tensor<float> encode_label_rows(const models::ModelConfig& model, std::span<const std::size_t> labels,
                                std::size_t n) {
  const std::size_t width = model.attribute_width();
  const std::size_t count = model.attributes.size();
  if (count == 0) return {};
  Tensor<float> out(Shape{n, width});
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = models::encode_attributes(model.attributes, labels.subspan(i * count, count));
    std::copy(row.begin(), row.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  return out;
}

// G in evaluation mode over [n, code] latents, in chunks.
Tensor<float> generate(models::Network<float>& G, const models::ModelConfig& model, const Tensor<float>& z,
                       const Tensor<float>& c, std::size_t batch) {
  const std::size_t n = z.shape[0];
  const std::size_t zw = z.size() / n;
  const std::size_t cw = model.attribute_width();
  Tensor<float> out;
  for (std::size_t first = 0; first < n; first += batch) {
    const std::size_t count = std::min(batch, n - first);
    const auto zb = z.data.begin() + static_cast<std::ptrdiff_t>(first * zw);
    ad::Tape<float> tape;
    const auto bound = G.bind_constant(tape);
    const auto zv = tape.constant(Tensor<float>(Shape{count, zw}, std::vector<float>(zb, zb + static_cast<std::ptrdiff_t>(count * zw))));
    std::optional<ad::Var<float>> cv;
    if (cw > 0) {
      const auto cb = c.data.begin() + static_cast<std::ptrdiff_t>(first * cw);
      cv = tape.constant(Tensor<float>(Shape{count, cw}, std::vector<float>(cb, cb + static_cast<std::ptrdiff_t>(count * cw))));
    }
    const auto img = G.forward(bound, zv, models::ForwardOptions{}, cv ? &*cv : nullptr);
    if (out.empty()) {
      Shape shape = img.shape();
      shape[0] = n;
      out = Tensor<float>(shape);
    }
    std::copy(img.value().begin(), img.value().end(), out.data.begin() + static_cast<std::ptrdiff_t>(first * (img.size() / count)));
  }
  return out;
}

void write_samples(const fs::path& dir, const Tensor<float>& samples, const models::ModelConfig& model,
                   const std::string& prefix) {
  const std::size_t n = samples.shape[0];
  const std::size_t per = samples.size() / n;
  if (model.mode == models::Mode::vector) {
    std::ofstream f(dir / (prefix + ".csv"));
    f << "x,y\n" << std::setprecision(9);
    for (std::size_t i = 0; i < n; ++i) f << samples[i * per] << "," << samples[i * per + 1] << "\n";
    f.flush();
    if (!f) throw std::runtime_error("cannot write " + (dir / (prefix + ".csv")).string());
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%05zu.ppm", prefix.c_str(), i);
    write_ppm(dir / name, std::span<const float>(samples.data).subspan(i * per, per), model.resolution,
              model.resolution);
  }
}

struct Loaded {
  RunConfig rc;
  models::Network<float> E, G;
};

Loaded load_generator(const Flags& flags, const std::vector<std::string>& overrides) {
  if (flags.checkpoint.empty()) throw UsageError("missing --checkpoint");
  RunConfig rc = resolve(flags, overrides);
  const auto entries = read_entries(flags.checkpoint);
  Loaded l{rc, models::build_encoder<float>(rc.model, 0), models::build_generator<float>(rc.model, 0)};
  models::load_parameters(l.E, entries);
  models::load_parameters(l.G, entries);
  return l;
}

// ---------------------------------------------------------------- subcommands

int gen_data(const Flags& flags, std::ostream& out) {
  const fs::path dir = require_dir(flags.out, "--out");
  std::vector<std::string> o;
  if (flags.n) o.push_back("data.n=" + std::to_string(*flags.n));
  const RunConfig rc = resolve(flags, o);
  fs::create_directories(dir);
  const std::uint64_t heldout_seed = derive(rc.seed, 32)();
  if (rc.data.kind == DataKind::sprites) {
    write_image_dataset(dir, gen_sprites(rc.data.sprite, rc.data.n, rc.seed), rc.model.attributes);
    if (rc.data.heldout_n > 0) {
      write_image_dataset(dir / "heldout", gen_sprites(rc.data.sprite, rc.data.heldout_n, heldout_seed),
                          rc.model.attributes);
    }
  } else {
    write_points_csv(dir / "points.csv", gen_ring_gaussians(rc.data.ring, rc.data.n, rc.seed));
    if (rc.data.heldout_n > 0) {
      fs::create_directories(dir / "heldout");
      write_points_csv(dir / "heldout" / "points.csv", gen_ring_gaussians(rc.data.ring, rc.data.heldout_n, heldout_seed));
    }
  }
  echo_config(dir, rc);
  out << "gen-data: " << rc.data.n << " samples in " << dir.string() << "\n";
  return 0;
}

int train_attr(const Flags& flags, std::ostream& out) {
  const fs::path dir = require_dir(flags.out, "--out");
  const fs::path data_dir = require_dir(flags.data, "--data");
  std::vector<std::string> o;
  if (flags.batch) o.push_back("train.attribute.batch=" + std::to_string(*flags.batch));
  const RunConfig rc = resolve(flags, o);
  if (rc.model.attributes.empty()) throw UsageError("train-attr: the dataset kind has no attributes");
  const Dataset data = load_data_dir(data_dir, rc.model);
  echo_config(dir, rc);
  auto result = trainer::pretrain_attribute_classifier(data, rc.model, rc.attribute);

  std::vector<ad::NamedTensor> entries;
  models::append_parameters(result.network, entries);
  ad::write_checkpoint(dir / "classifier.ucg", entries);

  std::ostringstream trace;
  trace << std::setprecision(9) << "step";
  for (const auto& c : result.columns) trace << "," << c;
  trace << ",mixed";
  const std::size_t gammas = result.trace.empty() ? 0 : result.trace.front().gammas.size();
  for (std::size_t g = 0; g < gammas; ++g) trace << ",gamma_" << result.columns[g];
  trace << "\n";
  for (std::size_t s = 0; s < result.trace.size(); ++s) {
    const auto& row = result.trace[s];
    trace << s + 1;
    for (double t : row.terms) trace << "," << t;
    trace << "," << row.mixed;
    for (double g : row.gammas) trace << "," << g;
    trace << "\n";
  }
  write_text(dir / "attr_trace.csv", trace.str());

  const bool has_heldout = fs::exists(data_dir / "heldout" / "labels.csv");
  const Dataset eval = has_heldout ? load_data_dir(data_dir / "heldout", rc.model) : data;
  const auto acc = trainer::attribute_accuracy(result.network, eval);
  json report{{"split", has_heldout ? "heldout" : "train"}, {"samples", eval.size()}, {"accuracy", json::object()}};
  for (std::size_t a = 0; a < acc.size(); ++a) {
    report["accuracy"][rc.model.attributes[a].name] = acc[a];
    out << "train-attr: " << rc.model.attributes[a].name << " accuracy " << format_number(acc[a]) << " ("
        << report["split"].get<std::string>() << ")\n";
  }
  write_text(dir / "accuracy.json", report.dump(2) + "\n");
  return 0;
}

int train_gan(const Flags& flags, std::ostream& out) {
  const fs::path dir = require_dir(flags.out, "--out");
  const fs::path data_dir = require_dir(flags.data, "--data");
  std::vector<std::string> o;
  if (flags.batch) o.push_back("train.batch=" + std::to_string(*flags.batch));
  Flags own = flags;
  own.checkpoint.clear();  // the classifier's config does not apply here
  const RunConfig rc = resolve(own, o);
  const Dataset data = load_data_dir(data_dir, rc.model);
  std::optional<models::Network<float>> classifier;
  if (!flags.checkpoint.empty()) {
    classifier = models::build_attribute_classifier<float>(rc.model, 0);
    models::load_parameters(*classifier, read_entries(flags.checkpoint));
  } else if (rc.train.weights.attribute > 0 && !rc.model.attributes.empty()) {
    throw UsageError("train-gan: attribute guidance needs --checkpoint <classifier.ucg> or losses.attribute=0");
  }
  echo_config(dir, rc);
  trainer::GanTrainer t(rc.model, rc.train, std::move(classifier));
  const auto result = trainer::train(t, data, dir);
  const auto& last = result.reports.back();
  out << "train-gan: " << result.reports.size() << " steps, k_t " << format_number(last.k) << ", M_t "
      << format_number(last.convergence) << "\n";
  return 0;
}

int sample(const Flags& flags, std::ostream& out) {
  const fs::path dir = require_dir(flags.out, "--out");
  std::vector<std::string> o;
  if (flags.batch) o.push_back("diversity.batch=" + std::to_string(*flags.batch));
  Loaded l = load_generator(flags, o);
  const auto& model = l.rc.model;
  const std::size_t n = flags.n.value_or(16);
  if (n == 0) throw UsageError("--n must be positive");
  Rng rng = derive(l.rc.seed, 50);
  const auto z = latent::sample_codes<float>(model.latent, n, model.latent_dims, rng);
  std::vector<std::size_t> labels;
  if (!model.attributes.empty()) {
    if (!flags.attrs.empty()) {
      const auto one = parse_attribute_labels(flags.attrs, model.attributes);
      for (std::size_t i = 0; i < n; ++i) labels.insert(labels.end(), one.begin(), one.end());
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        for (const auto& a : model.attributes) labels.push_back(uniform_index(rng, a.arity));
      }
    }
  } else if (!flags.attrs.empty()) {
    throw UsageError("--attrs given but the model has no attributes");
  }
  const auto c = encode_label_rows(model, labels, n);
  fs::create_directories(dir);
  write_samples(dir, generate(l.G, model, z, c, l.rc.diversity.batch), model, "sample");
  out << "sample: " << n << " samples in " << dir.string() << "\n";
  return 0;
}

int latent_hist(const Flags& flags, std::ostream& out) {
  const fs::path dir = require_dir(flags.out, "--out");
  const fs::path data_dir = require_dir(flags.data, "--data");
  if (flags.bins < 2) throw UsageError("--bins must be at least 2");
  std::vector<std::string> o;
  if (flags.batch) o.push_back("diversity.batch=" + std::to_string(*flags.batch));
  Loaded l = load_generator(flags, o);
  if (l.rc.model.latent != latent::LatentKind::unit_complex) {
    throw UsageError("latent-hist: needs the unit-complex latent");
  }
  const Dataset data = load_data_dir(data_dir, l.rc.model);
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto codes = diversity::encoder_embedding(l.E, data.gather(all), l.rc.diversity.batch);
  std::vector<double> angles;
  for (std::size_t i = 0; i + 1 < codes.values.size(); i += 2) angles.push_back(std::atan2(codes.values[i + 1], codes.values[i]));
  const auto hist = losses::cyclic_histogram(angles, flags.bins);
  std::ostringstream csv;
  csv << std::setprecision(17) << "node_angle,mass,uniform\n";
  for (std::size_t r = 0; r < hist.k; ++r) csv << hist.nodes[r] << "," << hist.mass[r] << "," << 1.0 / hist.k << "\n";
  fs::create_directories(dir);
  write_text(dir / "latent_hist.csv", csv.str());
  const double h = -losses::entropy_loss(hist.mass);
  out << "latent-hist: " << angles.size() << " angles, entropy " << format_number(h) << " of "
      << format_number(std::log(static_cast<double>(flags.bins))) << "\n";
  return 0;
}

int eval_diversity(const Flags& flags, std::ostream& out) {
  const fs::path dir = require_dir(flags.out, "--out");
  const fs::path data_dir = require_dir(flags.data, "--data");
  std::vector<std::string> o;
  if (flags.batch) o.push_back("diversity.batch=" + std::to_string(*flags.batch));
  if (flags.threshold) o.push_back("diversity.threshold=" + format_number(*flags.threshold));
  Loaded l = load_generator(flags, o);
  const auto& model = l.rc.model;
  const auto& dc = l.rc.diversity;
  const Dataset data = load_data_dir(data_dir, model);

  const diversity::Embedder embed = [&](const Tensor<float>& s) {
    return dc.embedding == diversity::EmbeddingKind::raw_pixel ? diversity::raw_pixel_embedding(s)
                                                               : diversity::encoder_embedding(l.E, s, dc.batch);
  };
  double tau = 0;
  std::string tau_source;
  if (dc.threshold) {
    tau = *dc.threshold;
    tau_source = "given";
  } else {
    Rng pick = derive(l.rc.seed, 51);
    std::vector<std::size_t> idx(std::min(dc.reference_samples, data.size()));
    for (auto& i : idx) i = uniform_index(pick, data.size());
    tau = diversity::percentile_threshold(embed(data.gather(idx)), dc.percentile);
    tau_source = "percentile";
    if (!(tau > 0)) throw std::runtime_error("eval-diversity: the reference percentile is zero; pass --threshold");
  }

  // Conditioning rows are drawn from the dataset's label rows.
  const diversity::Sampler sampler = [&](std::size_t n, Rng& rng) {
    const auto z = latent::sample_codes<float>(model.latent, n, model.latent_dims, rng);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n && !model.attributes.empty(); ++i) {
      const auto row = data.labels_of(uniform_index(rng, data.size()));
      labels.insert(labels.end(), row.begin(), row.end());
    }
    return generate(l.G, model, z, encode_label_rows(model, labels, n), dc.batch);
  };
  const auto estimate = diversity::birthday_estimate(sampler, embed, tau, dc.birthday);

  json report = diversity::to_json(estimate);
  report["embedding"] = std::string(diversity::to_string(dc.embedding));
  report["tau_source"] = tau_source;
  fs::create_directories(dir);
  write_text(dir / "report.json", report.dump(2) + "\n");

  const fs::path pairs_dir = dir / "pairs";
  fs::create_directories(pairs_dir);
  const std::size_t per = estimate.evidence.size() / estimate.evidence.shape[0];
  for (std::size_t p = 0; p < estimate.pairs.size(); ++p) {
    const auto& pair = estimate.pairs[p];
    for (const auto& [tag, row] : {std::pair{'a', pair.i}, std::pair{'b', pair.j}}) {
      Tensor<float> one(Shape{1, per}, std::vector<float>(estimate.evidence.data.begin() + static_cast<std::ptrdiff_t>(row * per),
                                                          estimate.evidence.data.begin() + static_cast<std::ptrdiff_t>((row + 1) * per)));
      char prefix[32];
      std::snprintf(prefix, sizeof prefix, "pair_%02zu%c", p, tag);
      if (model.mode == models::Mode::vector) {
        write_samples(pairs_dir, one, model, prefix);
      } else {
        write_ppm(pairs_dir / (std::string(prefix) + ".ppm"), one.data, model.resolution, model.resolution);
      }
    }
  }
  out << "eval-diversity: N=" << estimate.final_n << " support " << (estimate.lower_bound ? ">= " : "~ ")
      << format_number(estimate.estimate) << " (tau " << format_number(tau) << ")\n";
  return 0;
}

int grad_check(const Flags& flags, std::ostream& out) {
  if (!flags.all && flags.ops.empty()) throw UsageError("grad-check: pass --all or operation names");
  const auto reports = run_gradient_suite(flags.seed.value_or(0));
  std::size_t shown = 0, failed = 0;
  for (const auto& r : reports) {
    if (!flags.all && std::find(flags.ops.begin(), flags.ops.end(), r.name) == flags.ops.end()) continue;
    ++shown;
    failed += r.passed ? 0 : 1;
    out << (r.passed ? "PASS " : "FAIL ") << r.name << " checked=" << r.checked
        << " max_rel=" << format_number(r.max_rel_error) << "\n";
  }
  if (shown == 0) throw UsageError("grad-check: no operation matched");
  out << "grad-check: " << shown - failed << "/" << shown << " passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

std::vector<std::size_t> parse_attribute_labels(std::string_view text,
                                                const std::vector<models::AttributeSpec>& attributes) {
  std::vector<std::optional<std::size_t>> found(attributes.size());
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const auto item = text.substr(start, end - start);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw UsageError("--attrs: expected name=value, got '" + std::string(item) + "'");
    const std::string name(item.substr(0, eq));
    const std::string value(item.substr(eq + 1));
    std::size_t a = 0;
    while (a < attributes.size() && attributes[a].name != name) ++a;
    if (a == attributes.size()) throw UsageError("--attrs: unknown attribute " + name);
    if (found[a]) throw UsageError("--attrs: " + name + " given twice");
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(value, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (value.empty() || pos != value.size() || v >= attributes[a].arity) {
      throw UsageError("--attrs: bad value for " + name + ": " + value);
    }
    found[a] = v;
    start = end + 1;
  }
  std::vector<std::size_t> labels;
  for (std::size_t a = 0; a < attributes.size(); ++a) {
    if (!found[a]) throw UsageError("--attrs: missing " + attributes[a].name);
    labels.push_back(*found[a]);
  }
  return labels;
}

Dataset load_data_dir(const fs::path& dir, const models::ModelConfig& model) {
  if (model.mode == models::Mode::vector) {
    if (!fs::exists(dir / "points.csv")) throw DataError("no points.csv in " + dir.string());
    return load_points_csv(dir / "points.csv");
  }
  Dataset d = load_image_dataset(dir, model.attributes);
  if (d.sample_shape != Shape{model.resolution, model.resolution, 3}) {
    throw DataError("images in " + dir.string() + " do not match the configured resolution");
  }
  return d;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unit-complex latent GAN laboratory", "ucgan"};
  app.require_subcommand(1);
  Flags flags;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON configuration file");
    sub->add_option("--seed", flags.seed, "Seed of every random stream");
    sub->add_option("--set", flags.set, "Override a config field, e.g. train.steps=100");
  };
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset");
  common(gen);
  gen->add_option("--out", flags.out, "Output directory")->required();
  gen->add_option("--n", flags.n, "Sample count");

  auto* attr = app.add_subcommand("train-attr", "Pretrain the attribute classifier");
  common(attr);
  attr->add_option("--data", flags.data, "Dataset directory")->required();
  attr->add_option("--out", flags.out, "Output directory")->required();
  attr->add_option("--batch", flags.batch, "Batch size");

  auto* gan = app.add_subcommand("train-gan", "Train encoder, generator and discriminator");
  common(gan);
  gan->add_option("--data", flags.data, "Dataset directory")->required();
  gan->add_option("--out", flags.out, "Output directory")->required();
  gan->add_option("--checkpoint", flags.checkpoint, "Pretrained attribute classifier");
  gan->add_option("--batch", flags.batch, "Batch size");

  auto* smp = app.add_subcommand("sample", "Generate samples from a checkpoint");
  common(smp);
  smp->add_option("--checkpoint", flags.checkpoint, "GAN checkpoint")->required();
  smp->add_option("--out", flags.out, "Output directory")->required();
  smp->add_option("--n", flags.n, "Sample count");
  smp->add_option("--attrs", flags.attrs, "Attribute labels, e.g. gender=1,ethnicity=2,age_bin=3");
  smp->add_option("--batch", flags.batch, "Forward batch size");

  auto* hist = app.add_subcommand("latent-hist", "Angle histogram of the encoder over a dataset");
  common(hist);
  hist->add_option("--checkpoint", flags.checkpoint, "GAN checkpoint")->required();
  hist->add_option("--data", flags.data, "Dataset directory")->required();
  hist->add_option("--out", flags.out, "Output directory")->required();
  hist->add_option("--bins", flags.bins, "Histogram nodes");
  hist->add_option("--batch", flags.batch, "Forward batch size");

  auto* div = app.add_subcommand("eval-diversity", "Birthday-paradox support estimate of the generator");
  common(div);
  div->add_option("--checkpoint", flags.checkpoint, "GAN checkpoint")->required();
  div->add_option("--data", flags.data, "Reference dataset directory")->required();
  div->add_option("--out", flags.out, "Output directory")->required();
  div->add_option("--threshold", flags.threshold, "Duplicate threshold on squared distance");
  div->add_option("--batch", flags.batch, "Forward batch size");

  auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient suite");
  grad->add_option("--seed", flags.seed, "Input seed");
  grad->add_flag("--all", flags.all, "Check every operation");
  grad->add_option("ops", flags.ops, "Operation names");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);  // --help
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return gen_data(flags, out);
    if (attr->parsed()) return train_attr(flags, out);
    if (gan->parsed()) return train_gan(flags, out);
    if (smp->parsed()) return sample(flags, out);
    if (hist->parsed()) return latent_hist(flags, out);
    if (div->parsed()) return eval_diversity(flags, out);
    return grad_check(flags, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ucg::harness
