#pragma once

// Small synthetic model/data setups shared by the trainer, application and
// acceptance tests.

#include "vidode/data.hpp"
#include "vidode/model.hpp"
#include "vidode/trainer.hpp"

#include <memory>
#include <random>
#include <string>
#include <vector>

namespace vidode::testing {

inline Config small_config() {
  Config c;
  c.set("model.seed", "3");
  c.set("train.seed", "11");
  c.set("train.batch_size", "2");
  c.set("train.frames_per_clip", "3");
  c.set("train.learning_rate", "1e-3");
  return c;
}

inline std::vector<ClipPtr> blob_clips(int n = 5, std::uint64_t seed = 5, int frames = 8) {
  SyntheticOptions o;
  o.clips = n;
  o.seed = seed;
  o.frames = frames;
  std::vector<ClipPtr> out;
  for (auto& c : make_blob_clips(o)) out.push_back(std::make_shared<const VideoClip>(std::move(c)));
  return out;
}

/// Fine-layer columns of a [in, L_w * d_w] head matrix.
inline bool fine_column(const Model& m, std::size_t flat, const ad::Shape& shape) {
  const int cols = shape.back();
  const int col = static_cast<int>(flat % static_cast<std::size_t>(cols));
  const int layer = col / m.backends().decoder->width();
  return layer >= m.backends().decoder->layers() - m.head().fine_layers();
}

inline bool head_output(const std::string& name) {
  return name.rfind("head.gamma.", 0) == 0 || name.rfind("head.beta.", 0) == 0;
}

/// Moves every zero-initialised tensor off zero so gradients reach upstream
/// parameters; fine-layer head columns stay zero.
inline void perturb(Model& m, std::uint64_t seed, double scale = 0.02) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (const auto& p : m.parameters().all()) {
    bool all_zero = true;
    for (double v : p->value) all_zero = all_zero && v == 0.0;
    if (!all_zero) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      if (head_output(p->name) && fine_column(m, i, p->shape)) continue;
      p->value[i] = n(rng);
    }
  }
}

struct Run {
  Config config;
  std::unique_ptr<Model> model;
  std::unique_ptr<Trainer> trainer;

  explicit Run(Config c) : config(std::move(c)), model(Model::from_config(config)) {
    trainer = std::make_unique<Trainer>(*model, TrainConfig::from_config(config), LossWeights::from_config(config),
                                        config);
  }
};

}  // namespace vidode::testing
