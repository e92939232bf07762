#pragma once

// Tiny hand-checkable backends for loss and metric tests.
//
// StubDecoder: the code *is* the image (layers = rows, width = cols * 3).
// StubEmbedder: image -> per-channel mean (3-d); text -> sum of color axes
// for the words red / green / blue.

#include "vidode/backends.hpp"

#include <string>

namespace vidode::testing {

class StubDecoder final : public LatentDecoder {
 public:
  StubDecoder(int h, int w) : h_(h), w_(w) {}
  int layers() const override { return h_; }
  int width() const override { return w_ * Image::kChannels; }
  int image_height() const override { return h_; }
  int image_width() const override { return w_; }
  ad::Var decode(const ad::Var& code) const override { return ad::reshape(code, {h_, w_, Image::kChannels}); }
  std::uint64_t checksum() const override { return 1; }
  using LatentDecoder::decode;

 private:
  int h_, w_;
};

class StubInverter final : public LatentInverter {
 public:
  StubInverter(int h, int w) : h_(h), w_(w) {}
  GlobalCode invert(const Image& image) const override {
    GlobalCode c(h_, w_ * Image::kChannels);
    c.values = image.pixels;
    return c;
  }
  std::uint64_t checksum() const override { return 2; }

 private:
  int h_, w_;
};

class StubEmbedder final : public JointEmbedder {
 public:
  int dim() const override { return 3; }
  ad::Var embed_image(const ad::Var& image) const override {
    return ad::reshape(ad::avg_pool2d(image, image.dim(0), image.dim(1)), {3});
  }
  EmbeddingVector embed_text(const std::string& text) const override {
    EmbeddingVector e{{0.0, 0.0, 0.0}, EmbeddingSource::Text};
    for (const auto& tok : ToyEmbedder::tokenize(text)) {
      if (tok == "red") e.values[0] += 1.0;
      if (tok == "green") e.values[1] += 1.0;
      if (tok == "blue") e.values[2] += 1.0;
    }
    return e;
  }
  std::uint64_t checksum() const override { return 3; }
  using JointEmbedder::embed_image;
};

inline Backends stub_backends(int h, int w, int patch) {
  ToyBackendOptions o;
  o.patch = patch;
  Backends b;
  b.decoder = std::make_shared<StubDecoder>(h, w);
  b.inverter = std::make_shared<StubInverter>(h, w);
  b.embedder = std::make_shared<StubEmbedder>();
  b.features = std::make_shared<ToyFeatureExtractor>(o);
  return b;
}

inline Image solid(int h, int w, double r, double g, double b) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
  return img;
}

inline GlobalCode as_code(const Image& img) {
  GlobalCode c(img.height, img.width * Image::kChannels);
  c.values = img.pixels;
  return c;
}

}  // namespace vidode::testing
