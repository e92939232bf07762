#pragma once

#include "vidode/backends.hpp"
#include "vidode/data.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace vidode {

/// How the global content code is pooled from a clip's inverted frames.
struct ContentMode {
  enum class Kind { Mean, First, SingleFrame };
  Kind kind = Kind::Mean;
  std::size_t frame = 0;  // used by SingleFrame

  static ContentMode mean() { return {Kind::Mean, 0}; }
  static ContentMode first() { return {Kind::First, 0}; }
  static ContentMode single_frame(std::size_t i) { return {Kind::SingleFrame, i}; }
  /// Accepts "mean" or "first" (the `content.pooling` config values).
  static ContentMode parse(const std::string& name);
};

/// Elementwise mean of codes. Each coordinate is summed in sorted order with
/// Neumaier compensation, so the result does not depend on the input order.
GlobalCode mean_code(const std::vector<GlobalCode>& codes);

/// Global content code of a clip: inverted per-frame codes pooled per `mode`.
GlobalCode encode_content(const VideoClip& clip, const LatentInverter& inverter,
                          ContentMode mode = ContentMode::mean());

}  // namespace vidode
