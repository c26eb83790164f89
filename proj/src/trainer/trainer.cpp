#include "ucg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ucg/latent.hpp"

namespace ucg::trainer {

using ad::Tensor;
using ad::Var;
using models::ForwardOptions;
using models::Network;

namespace {

enum Term { kGan, kEq3, kEq8a, kEq8b, kAttr };
constexpr const char* kTermNames[] = {"L_G", "eq3", "eq8a", "eq8b", "attr"};

// Generator terms that enter the objective, in a fixed order.
std::vector<Term> generator_terms(const TrainConfig& cfg, bool has_attributes) {
  std::vector<Term> out{kGan};
  if (cfg.weights.eq3 > 0) out.push_back(kEq3);
  if (cfg.weights.eq8a > 0) out.push_back(kEq8a);
  if (cfg.weights.eq8b > 0) out.push_back(kEq8b);
  if (cfg.weights.attribute > 0 && has_attributes) out.push_back(kAttr);
  return out;
}

double max_abs(const std::vector<Tensor<float>>& grads) {
  double m = 0;
  for (const auto& g : grads) {
    for (float v : g.data) m = std::max(m, static_cast<double>(std::fabs(v)));
  }
  return m;
}

std::vector<Tensor<float>> buffers_of(const Network<float>& net) {
  std::vector<Tensor<float>> out;
  for (const auto& p : net.params) {
    if (!p.trainable) out.push_back(p.value);
  }
  return out;
}

void restore_buffers(Network<float>& net, const std::vector<Tensor<float>>& saved) {
  std::size_t i = 0;
  for (auto& p : net.params) {
    if (!p.trainable) p.value = saved[i++];
  }
}

std::vector<Tensor<float>> zero_like(Network<float>& net) {
  std::vector<Tensor<float>> out;
  for (auto* t : net.trainable()) out.emplace_back(t->shape);
  return out;
}

Tensor<float> encode_batch(const models::ModelConfig& model, std::span<const std::size_t> labels, std::size_t batch) {
  const std::size_t n = model.attributes.size();
  const std::size_t w = model.attribute_width();
  Tensor<float> out(ad::Shape{batch, w});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto row = models::encode_attributes(model.attributes, labels.subspan(b * n, n));
    std::copy(row.begin(), row.end(), out.data.begin() + static_cast<std::ptrdiff_t>(b * w));
  }
  return out;
}

std::vector<std::size_t> column(std::span<const std::size_t> labels, std::size_t count, std::size_t h) {
  std::vector<std::size_t> out;
  for (std::size_t i = h; i < labels.size(); i += count) out.push_back(labels[i]);
  return out;
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(9);
  s << v;
  return s.str();
}

}  // namespace

void TrainConfig::validate(const models::ModelConfig& model) const {
  if (batch < 2) throw std::invalid_argument("train config: batch must be at least 2");
  for (double w : {weights.eq3, weights.eq8a, weights.eq8b, weights.entropy, weights.attribute}) {
    if (!(w >= 0) || !std::isfinite(w)) throw std::invalid_argument("train config: loss weights must be >= 0");
  }
  if (!(keep_ratio > 0 && keep_ratio <= 1)) throw std::invalid_argument("train config: keep_ratio must be in (0, 1]");
  if (hist_bins < 2) throw std::invalid_argument("train config: hist_bins must be at least 2");
  if (weights.entropy > 0 && model.latent != latent::LatentKind::unit_complex) {
    throw std::invalid_argument("train config: the entropy loss needs the unit-complex latent");
  }
  if (!(began_lambda >= 0) || !(began_gamma >= 0)) throw std::invalid_argument("train config: bad BEGAN settings");
  if (!(mixer_rho >= 0 && mixer_rho < 1)) throw std::invalid_argument("train config: mixer_rho must be in [0, 1)");
  auto order = update_order;
  std::sort(order.begin(), order.end());
  if (order != std::array<Net, 3>{Net::E, Net::G, Net::D}) {
    throw std::invalid_argument("train config: update_order must name E, G and D once each");
  }
}

GanTrainer::GanTrainer(models::ModelConfig model, TrainConfig cfg, std::optional<Network<float>> classifier)
    : E(models::build_encoder<float>(model, derive(cfg.seed, 10)())),
      G(models::build_generator<float>(model, derive(cfg.seed, 11)())),
      D(models::build_discriminator<float>(model, derive(cfg.seed, 12)())),
      A(std::move(classifier)),
      model_(std::move(model)),
      cfg_(cfg),
      opt_e_(cfg.adam),
      opt_g_(cfg.adam),
      opt_d_(cfg.adam),
      opt_gamma_(cfg.adam),
      mixer_(cfg.mixer_rho),
      latent_rng_(derive(cfg.seed, 2)) {
  model_.validate();
  cfg_.validate(model_);
  if (A && A->heads.size() != model_.attributes.size()) {
    throw std::invalid_argument("gan trainer: classifier heads do not match the attributes");
  }
  began_.lambda_k = cfg_.began_lambda;
  began_.gamma_b = cfg_.began_gamma;
  const bool has_attr = A.has_value() && !model_.attributes.empty();
  gamma_ = Tensor<float>(ad::Shape{generator_terms(cfg_, has_attr).size()}, 1.0f);
}

StepInputs GanTrainer::draw(const Dataset& data) {
  if (data.sample_shape != E.input_shape) throw ad::ShapeError("gan trainer: dataset samples do not fit the encoder");
  if (data.attribute_count != model_.attributes.size()) {
    throw std::invalid_argument("gan trainer: dataset labels do not match the attributes");
  }
  if (!sampler_) sampler_.emplace(data.size(), derive(cfg_.seed, 1));
  const std::size_t B = cfg_.batch;
  const std::size_t n = model_.attributes.size();
  StepInputs in;
  const auto idx = sampler_->next(B);
  in.x = data.gather(idx);
  std::vector<std::size_t> y_labels;
  for (auto i : idx) {
    const auto l = data.labels_of(i);
    y_labels.insert(y_labels.end(), l.begin(), l.end());
  }
  in.z = latent::sample_codes<float>(model_.latent, B, model_.latent_dims, latent_rng_);
  in.c_labels.resize(B * n);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < n; ++h) in.c_labels[b * n + h] = uniform_index(latent_rng_, model_.attributes[h].arity);
  }
  if (model_.attribute_width() > 0) {
    in.y = encode_batch(model_, y_labels, B);
    in.c = encode_batch(model_, in.c_labels, B);
  }
  return in;
}

StepReport GanTrainer::step(const StepInputs& in) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& w = cfg_.weights;
  const bool image = model_.mode == models::Mode::image;
  const bool unit = model_.latent == latent::LatentKind::unit_complex;
  const bool conditional = model_.attribute_width() > 0;
  const bool has_attr = A.has_value() && !model_.attributes.empty();
  const auto terms = generator_terms(cfg_, has_attr);

  const std::vector<Tensor<float>> saved_e = buffers_of(E), saved_g = buffers_of(G), saved_d = buffers_of(D);

  ad::Tape<float> tape;
  const ForwardOptions stats{true, true, nullptr};
  const ForwardOptions plain{true, false, nullptr};
  const auto be = E.bind(tape);
  const auto bg = G.bind(tape);
  const auto bd = D.bind(tape);
  const auto be_frozen = Network<float>::frozen(be);

  const Var<float> x = tape.constant(in.x);
  const Var<float> z = tape.constant(in.z);
  Var<float> y, c;
  if (conditional) {
    y = tape.constant(in.y);
    c = tape.constant(in.c);
  }
  const Var<float>* yp = conditional ? &y : nullptr;
  const Var<float>* cp = conditional ? &c : nullptr;

  const auto pooled = [&](const Var<float>& a, const Var<float>& b) {
    return losses::loss_max_pool(image ? losses::recon_image_loss(a, b) : losses::recon_vector_loss(a, b),
                                 cfg_.keep_ratio);
  };
  const auto latent_dist = [&](const Var<float>& a, const Var<float>& b) {
    return unit ? losses::latent_identity_loss(a, b) : ad::mean(ad::square(a - b));
  };

  StepReport r;
  r.step = steps_ + 1;
  Tensor<float> gamma_next = gamma_;
  losses::BeganState began_next = began_;
  losses::MixerState mixer_next = mixer_;
  std::vector<Tensor<float>> ge, gg, gd, ggamma;

  try {
    // Encoder on real samples only. Generated samples go through E only via
    // the frozen binding.
    const Var<float> code_real = E.forward(be, x, stats);
    const Var<float> fake = G.forward(bg, z, stats, cp);
    const Var<float> d_real = D.forward(bd, x, stats, yp);
    const Var<float> d_fake = D.forward(bd, fake, plain, cp);
    const Var<float> loss_real = pooled(x, d_real);
    const Var<float> loss_fake = pooled(fake, d_fake);
    r.loss_real = loss_real.item();
    r.loss_fake = loss_fake.item();

    std::vector<Var<float>> g_terms{loss_fake};
    std::vector<Var<float>> leak_terms{loss_fake};
    Var<float> eq3, entropy;
    for (Term t : terms) {
      switch (t) {
        case kGan:
          break;
        case kEq3: {
          eq3 = pooled(x, G.forward(bg, code_real, plain, yp));
          r.eq3 = eq3.item();
          g_terms.push_back(eq3);
          break;
        }
        case kEq8a: {
          const Var<float> v = latent_dist(z, E.forward(be_frozen, fake, plain));
          r.eq8a = v.item();
          g_terms.push_back(v);
          leak_terms.push_back(v);
          break;
        }
        case kEq8b: {
          const Var<float> target = ad::stop_gradient(code_real);
          const Var<float> regen = G.forward(bg, target, plain, yp);
          const Var<float> v = latent_dist(target, E.forward(be_frozen, regen, plain));
          r.eq8b = v.item();
          g_terms.push_back(v);
          leak_terms.push_back(v);
          break;
        }
        case kAttr: {
          const auto ba = A->bind_constant(tape);
          const auto heads = A->forward_heads(ba, fake, ForwardOptions{});
          Var<float> total;
          for (std::size_t h = 0; h < heads.size(); ++h) {
            const auto labels = column(in.c_labels, heads.size(), h);
            const Var<float> ce = losses::focal_loss(ad::softmax(heads[h]), labels, 0.0);
            total = total.valid() ? total + ce : ce;
          }
          total = total / static_cast<float>(heads.size());
          r.attribute = total.item();
          g_terms.push_back(total);
          leak_terms.push_back(total);
          break;
        }
      }
    }
    if (w.entropy > 0) {
      entropy = losses::latent_entropy_loss(latent::angles_of(code_real), cfg_.hist_bins);
      r.entropy = entropy.item();
    }

    const losses::BeganStep bs = losses::began_update(began_next, r.loss_real, r.loss_fake);
    r.loss_d = bs.loss_d;
    r.loss_g = bs.loss_g;
    r.convergence = bs.convergence;
    r.k = began_next.k;

    // D
    tape.backward(loss_real - static_cast<float>(bs.k_used) * loss_fake);
    gd = D.gradients(tape, bd);

    // G
    Var<float> obj_g;
    Var<float> gamma_var;
    if (cfg_.mix_generator) {
      gamma_var = tape.leaf(gamma_);
      std::vector<Var<float>> weighted;
      for (std::size_t i = 0; i < terms.size(); ++i) {
        const double wt = terms[i] == kGan    ? 1.0
                          : terms[i] == kEq3  ? w.eq3
                          : terms[i] == kEq8a ? w.eq8a
                          : terms[i] == kEq8b ? w.eq8b
                                              : w.attribute;
        weighted.push_back(g_terms[i] * static_cast<float>(wt));
      }
      obj_g = losses::adaptive_mix<float>(mixer_next, weighted, gamma_var);
    } else {
      obj_g = g_terms[0];
      for (std::size_t i = 1; i < terms.size(); ++i) {
        const double wt = terms[i] == kEq3    ? w.eq3
                          : terms[i] == kEq8a ? w.eq8a
                          : terms[i] == kEq8b ? w.eq8b
                                              : w.attribute;
        obj_g = obj_g + g_terms[i] * static_cast<float>(wt);
      }
    }
    tape.backward(obj_g);
    gg = G.gradients(tape, bg);
    if (cfg_.mix_generator) ggamma.push_back(tape.grad(gamma_var));

    // E, real samples only
    Var<float> obj_e;
    if (eq3.valid()) obj_e = eq3 * static_cast<float>(w.eq3);
    if (entropy.valid()) {
      const Var<float> v = entropy * static_cast<float>(w.entropy);
      obj_e = obj_e.valid() ? obj_e + v : v;
    }
    if (obj_e.valid()) {
      tape.backward(obj_e);
      ge = E.gradients(tape, be);
    } else {
      ge = zero_like(E);
    }
    r.encoder_grad = max_abs(ge);

    if (cfg_.audit_isolation) {
      Var<float> leak = leak_terms[0];
      for (std::size_t i = 1; i < leak_terms.size(); ++i) leak = leak + leak_terms[i];
      tape.backward(leak);
      r.encoder_leak = max_abs(E.gradients(tape, be));
    }

    for (const auto* set : {&ge, &gg, &gd, &ggamma}) {
      for (const auto& g : *set) {
        if (!ad::all_finite(g.data)) throw ad::NonFiniteError("gan step: non-finite gradient");
      }
    }
  } catch (...) {
    restore_buffers(E, saved_e);
    restore_buffers(G, saved_g);
    restore_buffers(D, saved_d);
    throw;
  }

  // Every gradient above was read from the pre-step parameters; the writes
  // below touch disjoint parameter sets.
  for (Net net : cfg_.update_order) {
    switch (net) {
      case Net::E: {
        const auto p = E.trainable();
        opt_e_.apply(p, ge);
        break;
      }
      case Net::G: {
        const auto p = G.trainable();
        opt_g_.apply(p, gg);
        break;
      }
      case Net::D: {
        const auto p = D.trainable();
        opt_d_.apply(p, gd);
        break;
      }
    }
  }
  if (cfg_.mix_generator) {
    Tensor<float>* p[] = {&gamma_next};
    opt_gamma_.apply(p, ggamma);
    gamma_ = gamma_next;
    mixer_ = mixer_next;
  }
  began_ = began_next;
  r.gammas.assign(gamma_.data.begin(), gamma_.data.end());
  if (!cfg_.mix_generator) r.gammas.clear();
  ++steps_;
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<ad::NamedTensor> GanTrainer::checkpoint() const {
  std::vector<ad::NamedTensor> out;
  models::append_parameters(E, out);
  models::append_parameters(G, out);
  models::append_parameters(D, out);
  out.push_back({"trainer/k", Tensor<float>::scalar(static_cast<float>(began_.k))});
  out.push_back({"trainer/step", Tensor<float>::scalar(static_cast<float>(steps_))});
  if (cfg_.mix_generator) out.push_back({"trainer/gamma", gamma_});
  return out;
}

std::vector<std::string> GanTrainer::mixed_terms() const {
  std::vector<std::string> out;
  if (!cfg_.mix_generator) return out;
  for (Term t : generator_terms(cfg_, A.has_value() && !model_.attributes.empty())) out.emplace_back(kTermNames[t]);
  return out;
}

std::vector<std::string> metrics_columns(const GanTrainer& trainer) {
  std::vector<std::string> cols{"step", "L_real", "L_fake", "L_D", "L_G", "eq3", "eq8a",
                                "eq8b", "entropy", "attr", "k_t", "M_t"};
  for (const auto& t : trainer.mixed_terms()) cols.push_back("gamma_" + t);
  cols.push_back("wall_ms");
  return cols;
}

std::string metrics_row(const StepReport& r) {
  std::ostringstream s;
  s << r.step;
  for (double v : {r.loss_real, r.loss_fake, r.loss_d, r.loss_g, r.eq3, r.eq8a, r.eq8b, r.entropy, r.attribute, r.k,
                   r.convergence}) {
    s << ',' << format_double(v);
  }
  for (double g : r.gammas) s << ',' << format_double(g);
  s << ',' << format_double(r.wall_ms);
  return s.str();
}

TrainResult train(GanTrainer& trainer, const Dataset& data, const std::optional<std::filesystem::path>& out_dir) {
  const TrainConfig& cfg = trainer.config();
  std::ofstream metrics;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    metrics.open(*out_dir / "metrics.csv");
    if (!metrics) throw std::runtime_error("train: cannot write " + (*out_dir / "metrics.csv").string());
    const auto cols = metrics_columns(trainer);
    for (std::size_t i = 0; i < cols.size(); ++i) metrics << (i ? "," : "") << cols[i];
    metrics << '\n';
  }
  TrainResult result;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    const StepInputs in = trainer.draw(data);
    StepReport r = trainer.step(in);
    if (out_dir) {
      metrics << metrics_row(r) << '\n';
      if (cfg.checkpoint_every > 0 && r.step % cfg.checkpoint_every == 0) {
        ad::write_checkpoint(*out_dir / ("checkpoint_" + std::to_string(r.step) + ".ucg"), trainer.checkpoint());
      }
    }
    result.reports.push_back(std::move(r));
  }
  result.final_checkpoint = trainer.checkpoint();
  if (out_dir) {
    metrics.flush();
    if (!metrics) throw std::runtime_error("train: failed writing metrics.csv");
    ad::write_checkpoint(*out_dir / "checkpoint.ucg", result.final_checkpoint);
  }
  return result;
}

// ---------------------------------------------------------------- classifier

Tensor<float> augment(const Tensor<float>& images, int max_shift, double noise_sigma, Rng& rng) {
  if (images.rank() != 4) throw ad::ShapeError("augment: expected [B, H, W, C] images");
  const std::size_t B = images.shape[0], H = images.shape[1], W = images.shape[2], C = images.shape[3];
  Tensor<float> out(images.shape);
  const auto clampi = [](long v, long hi) { return static_cast<std::size_t>(std::clamp(v, 0L, hi - 1)); };
  for (std::size_t b = 0; b < B; ++b) {
    const bool flip = uniform(rng, 0.0, 1.0) < 0.5;
    const long dy = max_shift > 0 ? static_cast<long>(uniform_index(rng, 2 * max_shift + 1)) - max_shift : 0;
    const long dx = max_shift > 0 ? static_cast<long>(uniform_index(rng, 2 * max_shift + 1)) - max_shift : 0;
    for (std::size_t i = 0; i < H; ++i) {
      const std::size_t si = clampi(static_cast<long>(i) - dy, static_cast<long>(H));
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t fj = flip ? W - 1 - j : j;
        const std::size_t sj = clampi(static_cast<long>(fj) - dx, static_cast<long>(W));
        for (std::size_t ch = 0; ch < C; ++ch) {
          double v = images.data[((b * H + si) * W + sj) * C + ch];
          if (noise_sigma > 0) v += noise_sigma * standard_normal(rng);
          out.data[((b * H + i) * W + j) * C + ch] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return out;
}

Var<float> contractive_penalty(std::span<const Var<float>> at_x, std::span<const Var<float>> at_shifted,
                               double sigma) {
  if (at_x.empty() || at_x.size() != at_shifted.size()) {
    throw std::invalid_argument("contractive penalty: head lists differ");
  }
  if (!(sigma > 0)) throw std::invalid_argument("contractive penalty: sigma must be positive");
  const std::size_t B = at_x[0].shape()[0];
  Var<float> total;
  for (std::size_t h = 0; h < at_x.size(); ++h) {
    const Var<float> d = (at_shifted[h] - at_x[h]) / static_cast<float>(sigma);
    const Var<float> s = ad::sum(ad::square(d));
    total = total.valid() ? total + s : s;
  }
  return total / static_cast<float>(B);
}

AttributeTrainResult pretrain_attribute_classifier(const Dataset& data, const models::ModelConfig& model,
                                                   const AttributeTrainConfig& cfg) {
  model.validate();
  const std::size_t n = model.attributes.size();
  if (n == 0) throw std::invalid_argument("attribute pretraining: no attributes configured");
  if (data.attribute_count != n || data.labels.size() != data.size() * n) {
    throw std::invalid_argument("attribute pretraining: dataset is missing labels");
  }
  if (cfg.batch < 2) throw std::invalid_argument("attribute pretraining: batch must be at least 2");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto l = data.labels_of(i);
    for (std::size_t h = 0; h < n; ++h) {
      if (l[h] >= model.attributes[h].arity) throw std::out_of_range("attribute pretraining: label out of range");
    }
  }

  AttributeTrainResult result{models::build_attribute_classifier<float>(model, derive(cfg.seed, 20)()), {}, {}};
  Network<float>& net = result.network;
  if (data.sample_shape != net.input_shape) throw ad::ShapeError("attribute pretraining: sample shape mismatch");

  for (const auto& a : model.attributes) {
    if (a.kind == models::AttributeSpec::Kind::quantized) {
      result.columns.push_back(a.name + "_ce");
      result.columns.push_back(a.name + "_regression");
      result.columns.push_back(a.name + "_locality");
    } else {
      result.columns.push_back(a.name + "_focal");
    }
  }
  const std::size_t mixed_terms = result.columns.size();
  result.columns.push_back("contractive");

  ad::AdamState<float> opt(cfg.adam), opt_gamma(cfg.adam);
  losses::MixerState mixer(cfg.mixer_rho);
  Tensor<float> gamma(ad::Shape{mixed_terms}, 1.0f);
  BatchSampler sampler(data.size(), derive(cfg.seed, 21));
  Rng aug_rng = derive(cfg.seed, 22);
  Rng drop_rng = derive(cfg.seed, 23);
  Rng noise_rng = derive(cfg.seed, 24);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto idx = sampler.next(cfg.batch);
    const Tensor<float> xb = augment(data.gather(idx), cfg.max_shift, cfg.noise_sigma, aug_rng);
    std::vector<std::size_t> labels;
    for (auto i : idx) {
      const auto l = data.labels_of(i);
      labels.insert(labels.end(), l.begin(), l.end());
    }

    ad::Tape<float> tape;
    const auto bound = net.bind(tape);
    const Var<float> x = tape.constant(xb);
    Rng mask = drop_rng;  // same dropout masks for the shifted forward
    const auto heads = net.forward_heads(bound, x, ForwardOptions{true, true, &drop_rng});

    std::vector<Var<float>> terms;
    for (std::size_t h = 0; h < n; ++h) {
      const auto& spec = model.attributes[h];
      const auto y = column(labels, n, h);
      const Var<float> probs = ad::softmax(heads[h]);
      if (spec.kind == models::AttributeSpec::Kind::quantized) {
        terms.push_back(losses::focal_loss(probs, y, 0.0));
        Tensor<float> target(ad::Shape{y.size()});
        for (std::size_t b = 0; b < y.size(); ++b) target.data[b] = static_cast<float>(y[b]);
        const Var<float> sa = losses::softargmax(heads[h], cfg.softargmax_beta);
        terms.push_back(ad::mean(ad::abs(sa - tape.constant(target))));
        terms.push_back(losses::locality_loss(heads[h], y, cfg.locality_beta));
      } else {
        terms.push_back(losses::focal_loss(probs, y, cfg.focal_gamma));
      }
    }
    const Var<float> gamma_var = tape.leaf(gamma);
    Var<float> objective = losses::adaptive_mix<float>(mixer, terms, gamma_var);

    AttributeStep rec;
    for (const auto& t : terms) rec.terms.push_back(t.item());
    if (cfg.contractive_weight > 0) {
      Tensor<float> u(xb.shape);
      for (auto& v : u.data) v = static_cast<float>(standard_normal(noise_rng));
      const Var<float> shifted = x + tape.constant(u) * static_cast<float>(cfg.contractive_sigma);
      const auto heads2 = net.forward_heads(bound, shifted, ForwardOptions{true, false, &mask});
      const Var<float> pen = contractive_penalty(heads, heads2, cfg.contractive_sigma);
      rec.terms.push_back(pen.item());
      objective = objective + pen * static_cast<float>(cfg.contractive_weight);
    } else {
      rec.terms.push_back(0.0);
    }
    rec.mixed = objective.item();

    tape.backward(objective);
    const auto grads = net.gradients(tape, bound);
    const std::vector<Tensor<float>> ggamma{tape.grad(gamma_var)};
    const auto params = net.trainable();
    opt.apply(params, grads);
    Tensor<float>* gp[] = {&gamma};
    opt_gamma.apply(gp, ggamma);
    rec.gammas.assign(gamma.data.begin(), gamma.data.end());
    result.trace.push_back(std::move(rec));
  }
  return result;
}

std::vector<double> attribute_accuracy(Network<float>& net, const Dataset& data, std::size_t batch) {
  const std::size_t n = data.attribute_count;
  if (n != net.heads.size()) throw std::invalid_argument("attribute accuracy: heads do not match the labels");
  if (data.size() == 0) throw std::invalid_argument("attribute accuracy: empty dataset");
  std::vector<double> correct(n, 0.0);
  for (std::size_t first = 0; first < data.size(); first += batch) {
    const std::size_t count = std::min(batch, data.size() - first);
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = first + i;
    ad::Tape<float> tape;
    const auto bound = net.bind_constant(tape);
    const auto heads = net.forward_heads(bound, tape.constant(data.gather(idx)), ForwardOptions{});
    for (std::size_t h = 0; h < n; ++h) {
      const auto& v = heads[h].value();
      const std::size_t k = heads[h].shape()[1];
      for (std::size_t b = 0; b < count; ++b) {
        const auto row = v.begin() + static_cast<std::ptrdiff_t>(b * k);
        const auto pred = static_cast<std::size_t>(std::max_element(row, row + static_cast<std::ptrdiff_t>(k)) - row);
        if (pred == data.labels_of(first + b)[h]) correct[h] += 1;
      }
    }
  }
  for (auto& c : correct) c /= static_cast<double>(data.size());
  return correct;
}

}  // namespace ucg::trainer
