#pragma once

// Motion pathway: per-frame spatial encoder, reverse-order ConvGRU summary,
// and the autonomous latent ODE over the dynamics grid.

#include "vidode/autodiff.hpp"
#include "vidode/config.hpp"
#include "vidode/image.hpp"
#include "vidode/ode_solver.hpp"
#include "vidode/parameters.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace vidode {

struct DynamicsConfig {
  int image_height = 32;
  int image_width = 24;
  int m_d = 4;
  int n_d = 3;
  int d_sp = 16;
  int d_ode = 32;

  /// Reads `dyn.*`; n_d defaults to keep the image aspect ratio.
  static DynamicsConfig from_config(const Config& config, int image_height, int image_width);
  void validate() const;
};

SolverOptions solver_options_from_config(const Config& config);

/// Motion latent grid [m, n, d_ode] at a normalized time.
struct DynamicsState {
  ad::Var grid;
  double time = 0.0;
};

/// Binary per-cell mask over the dynamics grid, row-major.
struct CellMask {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  static CellMask filled(int rows, int cols, double v);
  CellMask complement() const;
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
};

class SpatialEncoder {
 public:
  SpatialEncoder(ParameterSet& params, const DynamicsConfig& cfg, std::mt19937_64& rng);
  /// [H, W, 3] -> [m_d, n_d, d_sp].
  ad::Var encode(const ad::Var& frame) const;

 private:
  struct Layer {
    ad::Parameter* w;
    ad::Parameter* b;
    int stride;
    int pad;
    bool activation;
  };
  DynamicsConfig cfg_;
  std::vector<Layer> layers_;
};

class ConvGru {
 public:
  ConvGru(ParameterSet& params, int input_channels, int hidden_channels, std::mt19937_64& rng);
  ad::Var step(const ad::Var& x, const ad::Var& h) const;
  /// Runs the cell over `features` in reverse order from a zero state.
  ad::Var summarize(const std::vector<ad::Var>& features) const;
  int hidden_channels() const { return hidden_; }

 private:
  int input_, hidden_;
  ad::Parameter *wz_, *bz_, *wr_, *br_, *wh_, *bh_;
};

/// f(z) = conv(tanh(conv(z))), channel-preserving; the second conv starts at zero.
class OdeField {
 public:
  OdeField(ParameterSet& params, int channels, std::mt19937_64& rng);
  ad::Var operator()(const ad::Var& z) const;

 private:
  ad::Parameter *w1_, *b1_, *w2_, *b2_;
};

class DynamicsModel {
 public:
  DynamicsModel(ParameterSet& params, const DynamicsConfig& cfg, std::uint64_t seed);

  const DynamicsConfig& config() const { return cfg_; }
  ad::Var encode_spatial(const ad::Var& frame) const;
  DynamicsState summarize(const std::vector<ad::Var>& features) const;
  /// encode_spatial on each frame, then summarize.
  DynamicsState encode_frames(const std::vector<Image>& frames) const;
  DynamicsState encode_frames(const std::vector<ad::Var>& frames) const;

  ad::Var field(const ad::Var& z) const;
  /// Replaces the learned vector field (test hooks, analytic flows).
  void set_field_override(VectorField f) { override_ = std::move(f); }
  void clear_field_override() { override_ = nullptr; }

  std::vector<DynamicsState> solve_flow(const DynamicsState& initial, const std::vector<double>& query_times,
                                        const SolverOptions& options, SolverReport* report = nullptr) const;

 private:
  DynamicsConfig cfg_;
  std::mt19937_64 rng_;
  SpatialEncoder encoder_;
  ConvGru gru_;
  OdeField field_;
  VectorField override_;
};

DynamicsState interpolate_dynamics(const DynamicsState& a, const DynamicsState& b, double lam);
/// Cells where mask is 1 come from a, the rest from b.
DynamicsState blend_dynamics(const DynamicsState& a, const DynamicsState& b, const CellMask& mask);

}  // namespace vidode
