#pragma once

#include "vidode/checkpoint.hpp"
#include "vidode/config.hpp"
#include "vidode/data.hpp"
#include "vidode/losses.hpp"
#include "vidode/model.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace vidode {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 2;
  int frames_per_clip = 3;
  long max_steps = 1000;
  std::uint64_t seed = 0;
  long checkpoint_interval = 0;  // 0: only at the end
  /// Linear learning-rate ramp over the first steps (0: none).
  long warmup_steps = 0;
  /// Cosine decay from the end of warmup to this step (0: constant rate).
  long decay_steps = 0;
  double final_lr_fraction = 0.1;
  double alpha = 1.0;
  /// Adds the swapped-description pass and its directional loss.
  bool manipulation = true;

  static TrainConfig from_config(const Config& config);
  void validate() const;
};

/// Multiplier on the base learning rate at a given step.
double learning_rate_scale(const TrainConfig& cfg, long step);

class Adam {
 public:
  Adam() = default;
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ParameterSet& params, double lr_scale = 1.0);
  long t() const { return t_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_state(long t, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

 private:
  double lr_ = 1e-4, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Per-clip quantities that only depend on frozen components.
struct ContentEntry {
  GlobalCode z_c;
  EmbeddingVector base_embedding;
};

/// In-memory cache of content codes and style base embeddings, optionally
/// persisted in a directory (the CLI uses $VIDODE_CACHE).
class ContentCache {
 public:
  explicit ContentCache(std::filesystem::path directory = {}) : dir_(std::move(directory)) {}
  const ContentEntry& get(const Model& model, const VideoClip& clip);
  std::size_t size() const { return entries_.size(); }

 private:
  std::filesystem::path dir_;
  std::map<std::uint64_t, ContentEntry> entries_;
};

class Trainer {
 public:
  /// `snapshot` is the flat config the model was built from; it is stored in
  /// checkpoints so the model can be rebuilt.
  Trainer(Model& model, const TrainConfig& cfg, const LossWeights& weights, Config snapshot = {});

  /// One optimizer update; returns the losses before the update.
  LossBreakdown train_step(const TrainingBatch& batch);
  /// Forward pass only.
  WeightedLoss compute_loss(const TrainingBatch& batch);
  /// Draws a batch with the trainer's own RNG (saved in checkpoints).
  TrainingBatch sample(const std::vector<ClipPtr>& clips);

  struct FitOptions {
    long steps = 0;
    std::filesystem::path checkpoint_dir;
    long checkpoint_interval = 0;
    std::function<void(long step, const LossBreakdown&)> on_step;
  };
  std::vector<LossBreakdown> fit(const std::vector<ClipPtr>& clips, const FitOptions& options);

  long step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  const LossWeights& weights() const { return weights_; }
  Model& model() { return model_; }
  ContentCache& cache() { return cache_; }
  void set_cache_directory(const std::filesystem::path& dir) { cache_ = ContentCache(dir); }

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

  /// Unweighted loss terms for one clip with a graph back to the parameters.
  LossTerms clip_terms(const VideoClip& clip, const std::vector<std::size_t>& indices, const std::string& target);

 private:

  Model& model_;
  TrainConfig cfg_;
  LossWeights weights_;
  Config snapshot_;
  Adam adam_;
  std::mt19937_64 rng_;
  long step_ = 0;
  ContentCache cache_;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, long step);

}  // namespace vidode
