#include "vidode/image.hpp"

#include "vidode/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace vidode {

ad::Var to_var(const Image& img) { return ad::Var::constant(img.pixels, img.shape()); }

Image from_var(const ad::Var& v) {
  if (v.rank() != 3 || v.dim(2) != Image::kChannels) {
    throw ShapeError("from_var: expected [H,W,3], got " + ad::shape_str(v.shape()));
  }
  Image img;
  img.height = v.dim(0);
  img.width = v.dim(1);
  img.pixels = v.value();
  return img;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image load_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw DatasetError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DatasetError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  Image img(static_cast<int>(image.height), static_cast<int>(image.width));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = buffer[i] / 255.0;
  return img;
}

void save_png(const Image& img, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(img.pixels.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    buffer[i] = static_cast<png_byte>(std::lround(std::clamp(img.pixels[i], 0.0, 1.0) * 255.0));
  }
  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  if (!png_image_write_to_stdio(&image, f.get(), 0, buffer.data(), 0, nullptr)) {
    throw Error("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace vidode
