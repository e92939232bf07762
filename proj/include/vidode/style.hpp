#pragma once

// Style code: the content image's embedding shifted along the text-derived
// direction between a source and a target description.

#include "vidode/backends.hpp"
#include "vidode/config.hpp"
#include "vidode/data.hpp"

#include <cstddef>
#include <string>

namespace vidode {

struct StyleCode {
  EmbeddingVector values;
  double alpha = 1.0;

  ad::Var as_var() const { return values.as_var(); }
};

/// Which image provides the base embedding.
struct StyleImageSource {
  enum class Kind { ContentFrame, InputFrame };
  Kind kind = Kind::ContentFrame;
  std::size_t frame = 0;

  static StyleImageSource content_frame() { return {Kind::ContentFrame, 0}; }
  static StyleImageSource input_frame(std::size_t i) { return {Kind::InputFrame, i}; }
  /// "content_frame" or "input_frame:<i>" (`style.image_source`).
  static StyleImageSource parse(const std::string& text);
};

/// embed_text(tgt) - embed_text(src).
EmbeddingVector style_direction(const JointEmbedder& embedder, const std::string& src_text,
                                const std::string& tgt_text);

/// image_embedding + alpha * direction.
StyleCode build_style_code(const EmbeddingVector& image_embedding, const EmbeddingVector& direction, double alpha);

/// Resolves the base image (decode(z_C) or a clip frame) and embeds it.
EmbeddingVector style_base_embedding(const Backends& backends, const StyleImageSource& source,
                                     const GlobalCode& z_c, const VideoClip* clip);

StyleCode build_style_code(const Backends& backends, const StyleImageSource& source, const GlobalCode& z_c,
                           const VideoClip* clip, const EmbeddingVector& direction, double alpha);

}  // namespace vidode
