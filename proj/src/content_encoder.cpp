#include "vidode/content_encoder.hpp"

#include "vidode/errors.hpp"

#include <algorithm>
#include <cmath>

namespace vidode {

ContentMode ContentMode::parse(const std::string& name) {
  if (name == "mean") return mean();
  if (name == "first") return first();
  throw ValidationError("content.pooling must be 'mean' or 'first', got '" + name + "'");
}

GlobalCode mean_code(const std::vector<GlobalCode>& codes) {
  if (codes.empty()) throw ValidationError("mean_code: no codes");
  const GlobalCode& ref = codes.front();
  for (const auto& c : codes) {
    if (c.layers != ref.layers || c.width != ref.width) throw ShapeError("mean_code: code shapes differ");
  }
  GlobalCode out(ref.layers, ref.width);
  std::vector<double> column(codes.size());
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    for (std::size_t k = 0; k < codes.size(); ++k) column[k] = codes[k].values[i];
    std::sort(column.begin(), column.end());
    double sum = 0.0, comp = 0.0;
    for (double v : column) {
      const double t = sum + v;
      comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
      sum = t;
    }
    out.values[i] = (sum + comp) / static_cast<double>(codes.size());
  }
  return out;
}

GlobalCode encode_content(const VideoClip& clip, const LatentInverter& inverter, ContentMode mode) {
  switch (mode.kind) {
    case ContentMode::Kind::First:
      return inverter.invert(clip.frame(0));
    case ContentMode::Kind::SingleFrame:
      if (mode.frame >= clip.size()) {
        throw ValidationError("encode_content: frame " + std::to_string(mode.frame) + " out of range for clip '" +
                              clip.id() + "' with " + std::to_string(clip.size()) + " frames");
      }
      return inverter.invert(clip.frame(mode.frame));
    case ContentMode::Kind::Mean:
      break;
  }
  std::vector<GlobalCode> codes;
  codes.reserve(clip.size());
  for (const auto& f : clip.frames()) codes.push_back(inverter.invert(f));
  return mean_code(codes);
}

}  // namespace vidode
