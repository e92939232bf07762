#pragma once

// The full trainable model: dynamics pathway and direction head, bound to a
// set of frozen backends.

#include "vidode/backends.hpp"
#include "vidode/checkpoint.hpp"
#include "vidode/config.hpp"
#include "vidode/content_encoder.hpp"
#include "vidode/direction_head.hpp"
#include "vidode/dynamics.hpp"
#include "vidode/ode_solver.hpp"
#include "vidode/parameters.hpp"
#include "vidode/style.hpp"

#include <cstdint>
#include <memory>

namespace vidode {

struct ModelConfig {
  DynamicsConfig dynamics;
  HeadConfig head;
  SolverOptions ode;
  ContentMode pooling = ContentMode::mean();
  StyleImageSource style_source = StyleImageSource::content_frame();
  std::uint64_t seed = 0;

  static ModelConfig from_config(const Config& config, const Backends& backends);
};

class Model {
 public:
  Model(const ModelConfig& cfg, Backends backends);
  /// Builds backends and model from one flat config.
  static std::unique_ptr<Model> from_config(const Config& config);
  /// Same, but rebuilt from a checkpoint's config snapshot and parameters.
  static std::unique_ptr<Model> from_checkpoint(const Checkpoint& ckpt);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const Backends& backends() const { return backends_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  DynamicsModel& dynamics() { return *dynamics_; }
  const DynamicsModel& dynamics() const { return *dynamics_; }
  const DirectionHead& head() const { return *head_; }

  GlobalCode encode_content(const VideoClip& clip) const;
  GlobalCode encode_content(const VideoClip& clip, ContentMode mode) const;

  /// Solves the learned flow with the configured tolerances.
  std::vector<DynamicsState> flow(const DynamicsState& initial, const std::vector<double>& times,
                                  SolverReport* report = nullptr) const;
  /// Residual for one dynamics state.
  ad::Var predict_direction(const GlobalCode& z_c, const DynamicsState& state, const ad::Var& style) const;
  /// z_C + residual.
  ad::Var predict_latent(const GlobalCode& z_c, const DynamicsState& state, const ad::Var& style) const;
  ad::Var decode(const ad::Var& latent) const { return backends_.decoder->decode(latent); }

  /// Copies named arrays into the parameters; names and shapes must match.
  void load_parameters(const std::vector<NamedArray>& arrays);
  std::vector<NamedArray> export_parameters() const;

 private:
  ModelConfig cfg_;
  Backends backends_;
  ParameterSet params_;
  std::unique_ptr<DynamicsModel> dynamics_;
  std::unique_ptr<DirectionHead> head_;
};

}  // namespace vidode
