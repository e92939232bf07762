#include "doctest.h"

#include "vidode/errors.hpp"
#include "vidode/style.hpp"

#include <random>

using namespace vidode;

namespace {

const Backends& backends() {
  static const Backends b = make_toy_backends(ToyBackendOptions{});
  return b;
}

EmbeddingVector random_embedding(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  EmbeddingVector e;
  e.values.resize(n);
  for (auto& v : e.values) v = d(rng);
  return e;
}

}  // namespace

TEST_CASE("style direction is antisymmetric and vanishes for equal texts") {
  const auto& emb = *backends().embedder;
  auto zero = style_direction(emb, "a red dress", "a red dress");
  for (double v : zero.values) CHECK(v == 0.0);
  auto d = style_direction(emb, "red dress", "blue jeans");
  auto r = style_direction(emb, "blue jeans", "red dress");
  for (std::size_t i = 0; i < d.dim(); ++i) CHECK(d.values[i] == -r.values[i]);
  CHECK_THROWS_AS(style_direction(emb, "", "x"), ValidationError);
}

TEST_CASE("style direction equals the projected bucket difference") {
  const auto& emb = dynamic_cast<const ToyEmbedder&>(*backends().embedder);
  auto bucket = [&](const std::string& tok) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : tok) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return static_cast<int>(h % emb.dim());
  };
  std::vector<double> diff(emb.dim(), 0.0);
  for (const char* t : {"blue", "jeans"}) diff[bucket(t)] += 1.0;
  for (const char* t : {"red", "dress"}) diff[bucket(t)] -= 1.0;
  auto d = style_direction(emb, "Red dress", "blue JEANS");
  const auto& p = emb.text_projection();
  for (int i = 0; i < emb.dim(); ++i) {
    double v = 0.0;
    for (int j = 0; j < emb.dim(); ++j) v += p(i, j) * diff[j];
    CHECK(d.values[i] == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("style code is affine in alpha") {
  auto img = random_embedding(16, 1);
  auto dir = random_embedding(16, 2);
  auto s0 = build_style_code(img, dir, 0.0);
  CHECK(s0.values.values == img.values);
  CHECK(s0.alpha == 0.0);
  auto s1 = build_style_code(img, dir, 1.0), s2 = build_style_code(img, dir, 2.0);
  for (std::size_t i = 0; i < 16; ++i) {
    const double second = (s2.values.values[i] - s1.values.values[i]) - (s1.values.values[i] - s0.values.values[i]);
    CHECK(std::abs(second) <= 1e-14 * (1.0 + std::abs(s2.values.values[i])));
  }
  EmbeddingVector none{std::vector<double>(16, 0.0)};
  CHECK(build_style_code(img, none, 3.7).values.values == img.values);
  CHECK(build_style_code(img, none, -2.0).values.values == img.values);
  CHECK_THROWS_AS(build_style_code(img, random_embedding(8, 3), 1.0), ShapeError);
}

TEST_CASE("style base image sources") {
  const auto& b = backends();
  GlobalCode z(b.decoder->layers(), b.decoder->width());
  z.at(0, 0) = 0.3;
  auto base = style_base_embedding(b, StyleImageSource::content_frame(), z, nullptr);
  CHECK(base.values == b.embedder->embed_image(b.decoder->decode(z)).values);

  std::vector<Image> frames = {Image(32, 24, 0.2), Image(32, 24, 0.7)};
  VideoClip clip("c", frames, {0.0, 1.0});
  auto second = style_base_embedding(b, StyleImageSource::input_frame(1), z, &clip);
  CHECK(second.values == b.embedder->embed_image(frames[1]).values);
  CHECK_THROWS_AS(style_base_embedding(b, StyleImageSource::input_frame(2), z, &clip), ValidationError);

  auto s = build_style_code(b, StyleImageSource::content_frame(), z, nullptr,
                            style_direction(*b.embedder, "x", "x"), 5.0);
  CHECK(s.values.values == base.values);

  CHECK(StyleImageSource::parse("input_frame:3").frame == 3);
  CHECK(StyleImageSource::parse("content_frame").kind == StyleImageSource::Kind::ContentFrame);
  CHECK_THROWS_AS(StyleImageSource::parse("input_frame:-1"), ValidationError);
  CHECK_THROWS_AS(StyleImageSource::parse("frame"), ValidationError);
}
