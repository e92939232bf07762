#pragma once

// Interfaces for the frozen pretrained components (latent decoder, inverter,
// joint image/text embedder, structure/appearance features) plus deterministic
// toy implementations used for desk-scale training and tests.
//
// Every differentiable entry point takes and returns ad::Var so gradients can
// flow *through* a frozen backend into the trainable modules; backends own no
// ad::Parameter and are never updated.

#include "vidode/autodiff.hpp"
#include "vidode/config.hpp"
#include "vidode/image.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace vidode {

/// Per-layer latent matrix in the decoder's extended latent space (L_w x d_w).
struct GlobalCode {
  int layers = 0;
  int width = 0;
  std::vector<double> values;  // row-major

  GlobalCode() = default;
  GlobalCode(int l, int w, double fill = 0.0)
      : layers(l), width(w), values(static_cast<std::size_t>(l) * w, fill) {}

  double& at(int layer, int j) { return values[static_cast<std::size_t>(layer) * width + j]; }
  double at(int layer, int j) const { return values[static_cast<std::size_t>(layer) * width + j]; }
  ad::Shape shape() const { return {layers, width}; }
  ad::Var as_var() const { return ad::Var::constant(values, shape()); }
  static GlobalCode from_var(const ad::Var& v);

  bool operator==(const GlobalCode&) const = default;
};

enum class EmbeddingSource { Image, Text, Synthetic };

struct EmbeddingVector {
  std::vector<double> values;
  EmbeddingSource source = EmbeddingSource::Synthetic;

  std::size_t dim() const { return values.size(); }
  ad::Var as_var() const { return ad::Var::constant(values, {static_cast<int>(values.size())}); }
};

struct FeatureBundle {
  std::vector<double> appearance;
  int patches = 0;
  std::vector<double> structure;  // patches x patches, row-major
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

class LatentDecoder {
 public:
  virtual ~LatentDecoder() = default;
  virtual int layers() const = 0;
  virtual int width() const = 0;
  virtual int image_height() const = 0;
  virtual int image_width() const = 0;
  /// code [L_w, d_w] -> image [H, W, 3].
  virtual ad::Var decode(const ad::Var& code) const = 0;
  virtual std::uint64_t checksum() const = 0;

  Image decode(const GlobalCode& code) const;
};

class LatentInverter {
 public:
  virtual ~LatentInverter() = default;
  virtual GlobalCode invert(const Image& image) const = 0;
  virtual std::uint64_t checksum() const = 0;
};

class JointEmbedder {
 public:
  virtual ~JointEmbedder() = default;
  virtual int dim() const = 0;
  /// image [H, W, 3] -> [d_e].
  virtual ad::Var embed_image(const ad::Var& image) const = 0;
  virtual EmbeddingVector embed_text(const std::string& text) const = 0;
  virtual std::uint64_t checksum() const = 0;

  EmbeddingVector embed_image(const Image& image) const;
};

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  /// image -> appearance vector.
  virtual ad::Var appearance(const ad::Var& image) const = 0;
  /// image -> [P, P] token self-similarity.
  virtual ad::Var structure(const ad::Var& image) const = 0;
  virtual std::uint64_t checksum() const = 0;

  FeatureBundle extract(const Image& image) const;
};

/// The four frozen components a model runs against.
struct Backends {
  std::shared_ptr<const LatentDecoder> decoder;
  std::shared_ptr<const LatentInverter> inverter;
  std::shared_ptr<const JointEmbedder> embedder;
  std::shared_ptr<const FeatureExtractor> features;

  /// Combined parameter checksum; unchanged by any amount of training.
  std::uint64_t checksum() const;
};

struct ToyBackendOptions {
  std::uint64_t seed = 1234;
  int layers = 6;
  int width = 64;
  int height = 32;       // image rows
  int image_width = 24;  // image columns
  int embed_dim = 128;
  int embed_pool = 4;    // average-pool factor before the image projection
  int patch = 8;         // feature patch size in pixels
  bool zero_bias = false;
};

/// Affine decoder: image = clamp(bias + W vec(code), 0, 1).
///
/// W = B Q where B holds the lowest-frequency orthonormal 2-D cosine basis
/// images (one column per (channel, ky, kx), ordered by frequency) and Q is a
/// seeded block-diagonal rotation, one block per latent layer. Layer 0 thus
/// drives the coarsest image structure and the last layers the finest detail,
/// which mirrors the coarse/medium/fine split of a style-based generator.
class ToyDecoder final : public LatentDecoder {
 public:
  explicit ToyDecoder(const ToyBackendOptions& options);

  int layers() const override { return layers_; }
  int width() const override { return width_; }
  int image_height() const override { return height_; }
  int image_width() const override { return image_width_; }
  ad::Var decode(const ad::Var& code) const override;
  std::uint64_t checksum() const override;
  using LatentDecoder::decode;

  const ad::RowMatrix& matrix() const { return weight_; }
  const Eigen::VectorXd& bias() const { return bias_; }
  /// decode() without the clamp.
  Eigen::VectorXd decode_unclamped(const GlobalCode& code) const;

 private:
  int layers_, width_, height_, image_width_;
  ad::RowMatrix weight_;  // [H*W*3, L_w*d_w]
  Eigen::VectorXd bias_;
};

/// Moore-Penrose pseudo-inverse of the toy decoder's affine map.
class ToyInverter final : public LatentInverter {
 public:
  explicit ToyInverter(const ToyDecoder& decoder);
  GlobalCode invert(const Image& image) const override;
  std::uint64_t checksum() const override;

 private:
  int layers_, width_, height_, image_width_;
  ad::RowMatrix pinv_;
  Eigen::VectorXd bias_;
};

/// Image side: seeded random projection of average-pooled pixels.
/// Text side: lowercased word tokens hashed (FNV-1a 64) into d_e buckets,
/// then a seeded random projection. The two spaces share only a dimension.
class ToyEmbedder final : public JointEmbedder {
 public:
  explicit ToyEmbedder(const ToyBackendOptions& options);
  int dim() const override { return dim_; }
  ad::Var embed_image(const ad::Var& image) const override;
  EmbeddingVector embed_text(const std::string& text) const override;
  std::uint64_t checksum() const override;
  using JointEmbedder::embed_image;

  const ad::RowMatrix& text_projection() const { return text_proj_; }
  static std::vector<std::string> tokenize(const std::string& text);

 private:
  int dim_, pool_;
  ad::RowMatrix image_proj_;  // [d_e, (H/pool)*(W/pool)*3]
  ad::RowMatrix text_proj_;   // [d_e, d_e]
};

/// Patch statistics on a coarse grid. Appearance: per-patch, per-channel mean
/// and standard deviation. Structure: cosine self-similarity of the patch
/// statistics after centering each statistic across patches, with a constant
/// anchor component so identical patches compare as 1.
class ToyFeatureExtractor final : public FeatureExtractor {
 public:
  static constexpr double kAnchor = 0.05;
  static constexpr double kVarianceEps = 1e-6;

  explicit ToyFeatureExtractor(const ToyBackendOptions& options) : patch_(options.patch) {}
  ad::Var appearance(const ad::Var& image) const override;
  ad::Var structure(const ad::Var& image) const override;
  std::uint64_t checksum() const override;
  using FeatureExtractor::extract;

  int patch() const { return patch_; }
  /// [P, 6] per-patch (mean r,g,b, std r,g,b).
  ad::Var patch_statistics(const ad::Var& image) const;

 private:
  int patch_;
};

Backends make_toy_backends(const ToyBackendOptions& options);

using BackendFactory = std::function<Backends(const Config&)>;
/// Registers an adapter usable as `backend.kind = adapter:<name>`.
void register_backend_adapter(const std::string& name, BackendFactory factory);

ToyBackendOptions toy_options_from_config(const Config& config);
/// Builds the backends named by `backend.kind` (default `toy`).
Backends make_backends(const Config& config);

}  // namespace vidode
