#include "vidode/trainer.hpp"

#include "vidode/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace vidode {

TrainConfig TrainConfig::from_config(const Config& c) {
  TrainConfig t;
  t.learning_rate = c.get_double("train.learning_rate", t.learning_rate);
  t.beta1 = c.get_double("train.beta1", t.beta1);
  t.beta2 = c.get_double("train.beta2", t.beta2);
  t.adam_eps = c.get_double("train.adam_eps", t.adam_eps);
  t.batch_size = static_cast<int>(c.get_int("train.batch_size", t.batch_size));
  t.frames_per_clip = static_cast<int>(c.get_int("train.frames_per_clip", t.frames_per_clip));
  t.max_steps = c.get_int("train.max_steps", t.max_steps);
  t.seed = static_cast<std::uint64_t>(c.get_int("train.seed", static_cast<long long>(t.seed)));
  t.checkpoint_interval = c.get_int("train.checkpoint_interval", t.checkpoint_interval);
  t.warmup_steps = c.get_int("train.warmup_steps", t.warmup_steps);
  t.decay_steps = c.get_int("train.decay_steps", t.decay_steps);
  t.final_lr_fraction = c.get_double("train.final_lr_fraction", t.final_lr_fraction);
  t.alpha = c.get_double("train.alpha", t.alpha);
  t.manipulation = c.get_bool("train.manipulation", t.manipulation);
  t.validate();
  return t;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("train.learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw ValidationError("train.beta1/beta2 must lie in [0, 1) and train.adam_eps must be positive");
  }
  if (batch_size <= 0) throw ValidationError("train.batch_size must be positive");
  if (frames_per_clip < 2) throw ValidationError("train.frames_per_clip must be at least 2");
  if (max_steps < 0 || checkpoint_interval < 0 || warmup_steps < 0) throw ValidationError("train step counts must be non-negative");
  if (decay_steps < 0) throw ValidationError("train.decay_steps must be non-negative");
  if (decay_steps > 0 && decay_steps <= warmup_steps) throw ValidationError("train.decay_steps must exceed train.warmup_steps");
  if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0)) {
    throw ValidationError("train.final_lr_fraction must lie in [0, 1]");
  }
  if (!std::isfinite(alpha)) throw ValidationError("train.alpha must be finite");
}

double learning_rate_scale(const TrainConfig& cfg, long step) {
  double scale = 1.0;
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
    scale = static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
  }
  if (cfg.decay_steps > 0 && step >= cfg.warmup_steps) {
    const double span = static_cast<double>(cfg.decay_steps - cfg.warmup_steps);
    const double u = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / span);
    const double pi = std::acos(-1.0);
    scale = cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + std::cos(pi * u));
  }
  return scale;
}

// ---------------------------------------------------------------------------

void Adam::step(ParameterSet& params, double lr_scale) {
  const auto& all = params.all();
  if (m_.size() != all.size()) {
    m_.assign(all.size(), {});
    v_.assign(all.size(), {});
    for (std::size_t i = 0; i < all.size(); ++i) {
      m_[i].assign(all[i]->size(), 0.0);
      v_[i].assign(all[i]->size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  const double lr = lr_ * lr_scale;
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& p = *all[i];
    if (p.grad.size() != p.value.size()) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = b1_ * m[j] + (1.0 - b1_) * g;
      v[j] = b2_ * v[j] + (1.0 - b2_) * g * g;
      p.value[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

void Adam::set_state(long t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t clip_key(const Model& model, const VideoClip& clip) {
  std::string bytes = clip.id();
  const std::uint64_t backend = model.backends().checksum();
  bytes.append(reinterpret_cast<const char*>(&backend), sizeof backend);
  const std::string pooling = std::to_string(static_cast<int>(model.config().pooling.kind)) + ":" +
                              std::to_string(model.config().pooling.frame);
  bytes += pooling;
  for (const auto& f : clip.frames()) {
    bytes.append(reinterpret_cast<const char*>(f.pixels.data()), f.pixels.size() * sizeof(double));
  }
  return fnv1a64(bytes);
}

bool read_entry(const std::filesystem::path& file, ContentEntry& e) {
  std::ifstream f(file, std::ios::binary);
  if (!f) return false;
  std::int32_t layers = 0, width = 0, dim = 0;
  f.read(reinterpret_cast<char*>(&layers), sizeof layers);
  f.read(reinterpret_cast<char*>(&width), sizeof width);
  f.read(reinterpret_cast<char*>(&dim), sizeof dim);
  if (!f || layers <= 0 || width <= 0 || dim <= 0) return false;
  e.z_c = GlobalCode(layers, width);
  e.base_embedding.values.resize(static_cast<std::size_t>(dim));
  e.base_embedding.source = EmbeddingSource::Image;
  f.read(reinterpret_cast<char*>(e.z_c.values.data()), static_cast<std::streamsize>(e.z_c.values.size() * sizeof(double)));
  f.read(reinterpret_cast<char*>(e.base_embedding.values.data()),
         static_cast<std::streamsize>(e.base_embedding.values.size() * sizeof(double)));
  return static_cast<bool>(f);
}

void write_entry(const std::filesystem::path& file, const ContentEntry& e) {
  std::filesystem::create_directories(file.parent_path());
  std::ofstream f(file, std::ios::binary | std::ios::trunc);
  const std::int32_t layers = e.z_c.layers, width = e.z_c.width,
                     dim = static_cast<std::int32_t>(e.base_embedding.values.size());
  f.write(reinterpret_cast<const char*>(&layers), sizeof layers);
  f.write(reinterpret_cast<const char*>(&width), sizeof width);
  f.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  f.write(reinterpret_cast<const char*>(e.z_c.values.data()), static_cast<std::streamsize>(e.z_c.values.size() * sizeof(double)));
  f.write(reinterpret_cast<const char*>(e.base_embedding.values.data()),
          static_cast<std::streamsize>(e.base_embedding.values.size() * sizeof(double)));
}

}  // namespace

const ContentEntry& ContentCache::get(const Model& model, const VideoClip& clip) {
  const std::uint64_t key = clip_key(model, clip);
  auto it = entries_.find(key);
  if (it != entries_.end()) return it->second;

  ContentEntry e;
  std::filesystem::path file;
  if (!dir_.empty()) {
    std::ostringstream name;
    name << std::hex << std::setw(16) << std::setfill('0') << key << ".content";
    file = dir_ / name.str();
  }
  if (file.empty() || !read_entry(file, e)) {
    e.z_c = model.encode_content(clip);
    e.base_embedding = model.backends().embedder->embed_image(model.backends().decoder->decode(e.z_c));
    if (!file.empty()) write_entry(file, e);
  }
  return entries_.emplace(key, std::move(e)).first->second;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(Model& model, const TrainConfig& cfg, const LossWeights& weights, Config snapshot)
    : model_(model),
      cfg_(cfg),
      weights_(weights),
      snapshot_(std::move(snapshot)),
      adam_(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps),
      rng_(cfg.seed) {
  cfg_.validate();
  weights_.validate();
}

TrainingBatch Trainer::sample(const std::vector<ClipPtr>& clips) {
  return sample_batch(clips, static_cast<std::size_t>(cfg_.batch_size), static_cast<std::size_t>(cfg_.frames_per_clip),
                      rng_);
}

LossTerms Trainer::clip_terms(const VideoClip& clip, const std::vector<std::size_t>& indices,
                              const std::string& target) {
  const Backends& b = model_.backends();
  const ContentEntry& content = cache_.get(model_, clip);
  const GlobalCode& z_c = content.z_c;

  std::vector<ad::Var> inputs;
  std::vector<double> times;
  for (std::size_t i : indices) {
    inputs.push_back(to_var(clip.frame(i)));
    times.push_back(clip.timestamps()[i]);
  }
  const DynamicsState z0 = model_.dynamics().encode_frames(inputs);
  const auto states = model_.flow(z0, times);

  EmbeddingVector base = content.base_embedding;
  if (model_.config().style_source.kind == StyleImageSource::Kind::InputFrame) {
    base = style_base_embedding(b, model_.config().style_source, z_c, &clip);
  }
  const ad::Var style = base.as_var();

  std::vector<ad::Var> deltas, latents, generated;
  for (const auto& s : states) {
    const ad::Var d = model_.predict_direction(z_c, s, style);
    const ad::Var z = ad::add(z_c.as_var(), d);
    deltas.push_back(d);
    latents.push_back(z);
    generated.push_back(model_.decode(z));
  }

  LossTerms t;
  t.consistency = consistency_loss(*b.embedder, generated, weights_.n_c);
  t.appearance = appearance_loss(b, z_c, latents);
  t.structure = structure_loss(b, inputs, latents);
  t.latent = latent_direction_loss(deltas);
  t.directional = ad::Var::constant(0.0);

  const auto& src = clip.description();
  if (cfg_.manipulation && src && !src->empty() && !target.empty() && target != *src) {
    const StyleCode manip = build_style_code(base, style_direction(*b.embedder, *src, target), cfg_.alpha);
    const ad::Var ms = manip.as_var();
    std::vector<ad::Var> edited;
    for (const auto& s : states) edited.push_back(model_.decode(model_.predict_latent(z_c, s, ms)));
    t.directional = directional_loss(*b.embedder, inputs, edited, *src, target);
  }
  return t;
}

WeightedLoss Trainer::compute_loss(const TrainingBatch& batch) {
  if (batch.clips.empty()) throw ValidationError("train_step: empty batch");
  std::vector<ad::Var> c, a, s, d, l;
  for (std::size_t i = 0; i < batch.clips.size(); ++i) {
    const auto t = clip_terms(*batch.clips[i], batch.sampled_indices[i], batch.target_descriptions.at(i));
    c.push_back(t.consistency);
    a.push_back(t.appearance);
    s.push_back(t.structure);
    d.push_back(t.directional);
    l.push_back(t.latent);
  }
  const std::vector<double> mean(batch.clips.size(), 1.0 / static_cast<double>(batch.clips.size()));
  LossTerms terms{ad::linear_combination(c, mean), ad::linear_combination(a, mean), ad::linear_combination(s, mean),
                  ad::linear_combination(d, mean), ad::linear_combination(l, mean)};
  return total_loss(terms, weights_, step_);
}

LossBreakdown Trainer::train_step(const TrainingBatch& batch) {
  WeightedLoss loss = compute_loss(batch);
  const auto& b = loss.breakdown;
  if (!std::isfinite(b.total)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << step_ << ": consistency=" << b.consistency << " appearance=" << b.appearance
        << " structure=" << b.structure << " directional=" << b.directional << " latent=" << b.latent
        << " total=" << b.total;
    throw NonFiniteLossError(msg.str());
  }
  model_.parameters().zero_grad();
  ad::backward(loss.total);
  adam_.step(model_.parameters(), learning_rate_scale(cfg_, step_));
  ++step_;
  return b;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, long step) {
  return dir / ("ckpt_" + std::to_string(step) + ".bin");
}

std::vector<LossBreakdown> Trainer::fit(const std::vector<ClipPtr>& clips, const FitOptions& o) {
  std::vector<LossBreakdown> history;
  for (long i = 0; i < o.steps; ++i) {
    const LossBreakdown b = train_step(sample(clips));
    history.push_back(b);
    if (o.on_step) o.on_step(step_, b);
    if (!o.checkpoint_dir.empty() && o.checkpoint_interval > 0 && step_ % o.checkpoint_interval == 0) {
      save_checkpoint(checkpoint(), checkpoint_path(o.checkpoint_dir, step_));
    }
  }
  if (!o.checkpoint_dir.empty() && (o.checkpoint_interval <= 0 || step_ % o.checkpoint_interval != 0)) {
    save_checkpoint(checkpoint(), checkpoint_path(o.checkpoint_dir, step_));
  }
  return history;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.step = step_;
  c.config = snapshot_.dump();
  c.parameters = model_.export_parameters();
  c.adam_t = adam_.t();
  const auto& m = adam_.first_moments();
  const auto& v = adam_.second_moments();
  for (std::size_t i = 0; i < c.parameters.size(); ++i) {
    const auto& p = c.parameters[i];
    c.adam_m.push_back({p.name, p.shape, i < m.size() ? m[i] : std::vector<double>(p.values.size(), 0.0)});
    c.adam_v.push_back({p.name, p.shape, i < v.size() ? v[i] : std::vector<double>(p.values.size(), 0.0)});
  }
  std::ostringstream rng;
  rng << rng_;
  c.rng_state = rng.str();
  return c;
}

void Trainer::restore(const Checkpoint& c) {
  std::mt19937_64 rng;
  std::istringstream in(c.rng_state);
  in >> rng;
  if (!in) throw CheckpointError("invalid RNG state in checkpoint", 0);
  model_.load_parameters(c.parameters);
  std::vector<std::vector<double>> m, v;
  for (const auto& a : c.adam_m) m.push_back(a.values);
  for (const auto& a : c.adam_v) v.push_back(a.values);
  adam_.set_state(c.adam_t, std::move(m), std::move(v));
  rng_ = rng;
  step_ = c.step;
}

}  // namespace vidode
