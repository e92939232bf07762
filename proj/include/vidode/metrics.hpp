#pragma once

// Desk-scale evaluation: warping error under a pluggable optical-flow oracle,
// embedding-space temporal consistency and zero-shot manipulation accuracy.

#include "vidode/backends.hpp"
#include "vidode/image.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vidode {

/// Backward flow for a frame pair: next(p) ~ prev(p + (dx, dy)(p)).
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<double> dx, dy;

  FlowField() = default;
  FlowField(int h, int w, double fx = 0.0, double fy = 0.0)
      : height(h), width(w), dx(static_cast<std::size_t>(h) * w, fx), dy(static_cast<std::size_t>(h) * w, fy) {}
};

using FlowOracle = std::function<FlowField(const Image& prev, const Image& next)>;

FlowOracle zero_flow_oracle();
FlowOracle constant_shift_oracle(double dx, double dy);
/// Integer block matching over [-radius, radius]^2 with a (2*half_block+1)^2
/// window; ties go to the smaller displacement.
FlowOracle exhaustive_flow_oracle(int radius = 3, int half_block = 2);
/// Builds an oracle from a name: zero, constant-shift:<dx>,<dy>, exhaustive.
FlowOracle flow_oracle_from_name(const std::string& name);

struct WarpResult {
  Image warped;
  std::vector<bool> valid;  // per pixel
};

/// Bilinear sample of `prev` at p + flow(p); samples outside the image are invalid.
WarpResult warp_backward(const Image& prev, const FlowField& flow);

/// Mean over consecutive pairs of the mean absolute difference between
/// frame t+1 and the warped frame t over valid pixels and channels.
double warping_error(const std::vector<Image>& frames, const FlowOracle& oracle);

/// Mean over frame pairs of 1 - cos between image embeddings.
double embedding_consistency(const JointEmbedder& embedder, const std::vector<Image>& frames);

/// Fraction of embeddings strictly cosine-closer to `target` than to `ground_truth`.
double manipulation_accuracy(const std::vector<std::vector<double>>& embeddings, const std::vector<double>& ground_truth,
                             const std::vector<double>& target);
double manipulation_accuracy(const JointEmbedder& embedder, const std::vector<Image>& frames,
                             const std::string& gt_text, const std::string& tgt_text);

struct MetricReport {
  std::size_t frames = 0;
  std::optional<double> warping_error;
  std::string flow_oracle;
  std::optional<double> embedding_consistency;
  std::optional<double> manipulation_accuracy;
  std::string gt_text, tgt_text;

  /// JSON text; fvd, is, fid, akd and aed are always present and null.
  std::string to_json() const;
};

}  // namespace vidode
