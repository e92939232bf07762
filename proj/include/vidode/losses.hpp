#pragma once

// Training objectives. Every loss returns an ad::Var so it can be
// differentiated through the frozen backends into the model.

#include "vidode/autodiff.hpp"
#include "vidode/backends.hpp"
#include "vidode/config.hpp"

#include <string>
#include <vector>

namespace vidode {

struct LossWeights {
  double consistency = 1.0;  // final value of the ramped weight
  double appearance = 10.0;
  double structure = 10.0;
  double directional = 2.0;
  double latent = 1.0;
  /// Splits the structure/appearance budget as (2t, 2(1-t)) on (appearance, structure).
  double tradeoff = 0.5;
  double schedule_start = 0.01;
  long schedule_steps = 40000;
  int n_c = 3;

  static LossWeights from_config(const Config& config);
  void validate() const;
};

struct LossBreakdown {
  double consistency = 0.0;
  double appearance = 0.0;
  double structure = 0.0;
  double directional = 0.0;
  double latent = 0.0;
  double total = 0.0;
  /// Effective multipliers used for `total` (after schedule and tradeoff).
  struct {
    double consistency = 0.0, appearance = 0.0, structure = 0.0, directional = 0.0, latent = 0.0;
  } weights;

  bool operator==(const LossBreakdown& o) const;
};

/// Linear ramp from `start` to `end` over [0, steps], constant afterwards.
double consistency_schedule(long step, long steps = 40000, double start = 0.01, double end = 1.0);

/// sum_{i<j} (1 - cos(e_i, e_j)).
ad::Var pairwise_dissimilarity(const std::vector<ad::Var>& embeddings);
/// Indices of n evenly spaced frames out of count (all when n >= count).
std::vector<std::size_t> spread_indices(std::size_t count, std::size_t n);

ad::Var consistency_loss(const JointEmbedder& embedder, const std::vector<ad::Var>& frames, int n_c);

/// Mean over frames of |A(G(z_C)) - A(G(z_t))|.
ad::Var appearance_loss(const Backends& backends, const GlobalCode& z_c, const std::vector<ad::Var>& frame_latents);

/// Mean over frames of the Frobenius distance between structure matrices of
/// the input frame and the decoded predicted frame.
ad::Var structure_loss(const Backends& backends, const std::vector<ad::Var>& input_frames,
                       const std::vector<ad::Var>& frame_latents);

/// 1 - cos(mean_i(e(gen_i) - e(in_i)), text_direction); 0 when either is ~0.
ad::Var directional_loss_from_embeddings(const std::vector<ad::Var>& input_embeddings,
                                         const std::vector<ad::Var>& generated_embeddings,
                                         const ad::Var& text_direction);
ad::Var directional_loss(const JointEmbedder& embedder, const std::vector<ad::Var>& input_frames,
                         const std::vector<ad::Var>& generated_frames, const std::string& src_text,
                         const std::string& tgt_text);

/// Mean Frobenius norm.
ad::Var latent_direction_loss(const std::vector<ad::Var>& directions);

struct LossTerms {
  ad::Var consistency, appearance, structure, directional, latent;
};

struct WeightedLoss {
  ad::Var total;
  LossBreakdown breakdown;
};

WeightedLoss total_loss(const LossTerms& terms, const LossWeights& weights, long step);

}  // namespace vidode
