#pragma once

// Predicts the per-frame latent residual from the dynamics state, the style
// code and the content code: grid tokens -> self-attention -> cross-attention
// against projected style tokens (refining the style code on the way) ->
// per-layer scale/shift applied to the standardized content code.

#include "vidode/autodiff.hpp"
#include "vidode/backends.hpp"
#include "vidode/config.hpp"
#include "vidode/parameters.hpp"

#include <cstdint>
#include <vector>

namespace vidode {

struct HeadConfig {
  int n_sa = 2;
  int n_ca = 2;
  int heads = 2;
  int width = 64;
  int ff_mult = 2;
  /// Style context tokens produced from the style code in each CA block.
  int context_tokens = 4;
  /// Fraction of decoder layers (rounded up, taken from the end) left untouched.
  double fine_fraction = 1.0 / 3.0;

  static HeadConfig from_config(const Config& config);
  void validate() const;
};

/// Sizes fixed by the surrounding model.
struct HeadDims {
  int grid_rows = 4;
  int grid_cols = 3;
  int state_channels = 32;
  int style_dim = 128;
  int layers = 6;
  int layer_width = 64;
};

/// Attention weights recorded during a forward pass, one [queries, keys]
/// matrix per (block, head).
struct AttentionTrace {
  std::vector<ad::Var> self_attention;
  std::vector<ad::Var> cross_attention;
};

class DirectionHead {
 public:
  DirectionHead(ParameterSet& params, const HeadConfig& cfg, const HeadDims& dims, std::uint64_t seed);

  const HeadConfig& config() const { return cfg_; }
  const HeadDims& dims() const { return dims_; }
  int fine_layers() const { return fine_layers_; }

  /// [m, n, d_ode] -> [m*n, width]: per-cell projection plus sinusoidal position.
  ad::Var tokenize(const ad::Var& grid) const;
  ad::Var self_attend(const ad::Var& tokens, AttentionTrace* trace = nullptr) const;

  struct CrossOutput {
    ad::Var pooled;  // [width]
    ad::Var style;   // [d_e]
  };
  CrossOutput cross_attend(const ad::Var& tokens, const ad::Var& style, AttentionTrace* trace = nullptr) const;

  /// Delta z [L_w, d_w]; fine-layer rows are exactly zero.
  ad::Var modulate(const ad::Var& pooled, const ad::Var& style, const GlobalCode& z_c) const;

  ad::Var predict_direction(const GlobalCode& z_c, const ad::Var& grid, const ad::Var& style,
                            AttentionTrace* trace = nullptr) const;
  /// z_C + Delta z.
  ad::Var predict_frame_latent(const GlobalCode& z_c, const ad::Var& grid, const ad::Var& style,
                               AttentionTrace* trace = nullptr) const;

  /// Fixed sinusoidal table [tokens, width].
  const std::vector<double>& positional_encoding() const { return pos_; }

 private:
  struct Linear {
    ad::Parameter* w;
    ad::Parameter* b;
    ad::Var operator()(const ad::Var& x) const { return ad::linear(x, ad::Var::leaf(*w), ad::Var::leaf(*b)); }
  };
  struct Norm {
    ad::Parameter* g;
    ad::Parameter* b;
    ad::Var operator()(const ad::Var& x) const {
      return ad::layer_norm_rows(x, ad::Var::leaf(*g), ad::Var::leaf(*b));
    }
  };
  struct Block {
    Norm norm1, norm2;
    Linear q, k, v, o, ff1, ff2;
    Linear context;  // cross-attention only: style -> context tokens
    Linear offset;   // cross-attention only: pooled tokens -> style offset
  };

  Linear make_linear(ParameterSet& ps, const std::string& name, int in, int out, double stddev);
  Norm make_norm(ParameterSet& ps, const std::string& name);
  ad::Var attention(const Block& blk, const ad::Var& queries, const ad::Var& keys_values,
                    std::vector<ad::Var>* weights) const;
  ad::Var feed_forward(const Block& blk, const ad::Var& x) const;

  HeadConfig cfg_;
  HeadDims dims_;
  int fine_layers_ = 0;
  std::mt19937_64 rng_;
  Linear tokens_;
  std::vector<double> pos_;
  std::vector<Block> sa_, ca_;
  Linear gamma_, beta_;
};

/// Per-layer standardization of z_C (zero mean, unit variance per row).
std::vector<double> standardize_layers(const GlobalCode& z_c, double eps = 1e-5);

}  // namespace vidode
