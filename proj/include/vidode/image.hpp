#pragma once

#include "vidode/autodiff.hpp"

#include <filesystem>
#include <vector>

namespace vidode {

/// RGB image, channel-last, values nominally in [0, 1].
struct Image {
  static constexpr int kChannels = 3;

  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * kChannels, fill) {}

  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c]; }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }
  bool same_size(const Image& o) const { return height == o.height && width == o.width; }
  ad::Shape shape() const { return {height, width, kChannels}; }

  bool operator==(const Image&) const = default;
};

ad::Var to_var(const Image& img);
Image from_var(const ad::Var& v);

/// 8-bit RGB PNG. Alpha and gray inputs are converted to RGB.
Image load_png(const std::filesystem::path& path);
void save_png(const Image& img, const std::filesystem::path& path);

}  // namespace vidode
