#include "vidode/style.hpp"

#include "vidode/errors.hpp"

#include <cmath>

namespace vidode {

StyleImageSource StyleImageSource::parse(const std::string& text) {
  if (text == "content_frame") return content_frame();
  const std::string prefix = "input_frame";
  if (text.rfind(prefix, 0) == 0) {
    if (text.size() == prefix.size()) return input_frame(0);
    if (text[prefix.size()] == ':') {
      try {
        const long long i = std::stoll(text.substr(prefix.size() + 1));
        if (i >= 0) return input_frame(static_cast<std::size_t>(i));
      } catch (const std::exception&) {
      }
    }
  }
  throw ValidationError("style.image_source must be 'content_frame' or 'input_frame:<i>', got '" + text + "'");
}

EmbeddingVector style_direction(const JointEmbedder& embedder, const std::string& src_text,
                                const std::string& tgt_text) {
  if (src_text.empty() || tgt_text.empty()) throw ValidationError("style_direction: descriptions must be non-empty");
  const auto src = embedder.embed_text(src_text);
  const auto tgt = embedder.embed_text(tgt_text);
  EmbeddingVector d{std::vector<double>(src.dim()), EmbeddingSource::Text};
  for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] = tgt.values[i] - src.values[i];
  return d;
}

StyleCode build_style_code(const EmbeddingVector& image_embedding, const EmbeddingVector& direction, double alpha) {
  if (image_embedding.dim() != direction.dim()) throw ShapeError("build_style_code: embedding dimensions differ");
  if (!std::isfinite(alpha)) throw ValidationError("build_style_code: alpha must be finite");
  StyleCode s;
  s.alpha = alpha;
  s.values.source = EmbeddingSource::Synthetic;
  s.values.values.resize(direction.dim());
  for (std::size_t i = 0; i < direction.dim(); ++i) {
    s.values.values[i] = image_embedding.values[i] + alpha * direction.values[i];
  }
  return s;
}

EmbeddingVector style_base_embedding(const Backends& backends, const StyleImageSource& source,
                                     const GlobalCode& z_c, const VideoClip* clip) {
  if (source.kind == StyleImageSource::Kind::ContentFrame) {
    return backends.embedder->embed_image(backends.decoder->decode(z_c));
  }
  if (!clip || source.frame >= clip->size()) {
    throw ValidationError("style image source: frame " + std::to_string(source.frame) + " is not available");
  }
  return backends.embedder->embed_image(clip->frame(source.frame));
}

StyleCode build_style_code(const Backends& backends, const StyleImageSource& source, const GlobalCode& z_c,
                           const VideoClip* clip, const EmbeddingVector& direction, double alpha) {
  return build_style_code(style_base_embedding(backends, source, z_c, clip), direction, alpha);
}

}  // namespace vidode
