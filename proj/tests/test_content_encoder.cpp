#include "doctest.h"

#include "vidode/content_encoder.hpp"
#include "vidode/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace vidode;

namespace {

struct Fixture {
  std::shared_ptr<ToyDecoder> dec = std::make_shared<ToyDecoder>(ToyBackendOptions{});
  ToyInverter inv{*dec};

  GlobalCode code(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.05);
    GlobalCode c(dec->layers(), dec->width());
    for (auto& v : c.values) v = n(rng);
    return c;
  }

  VideoClip clip(const std::vector<GlobalCode>& codes) const {
    std::vector<Image> frames;
    std::vector<long long> idx;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      frames.push_back(dec->decode(codes[i]));
      idx.push_back(static_cast<long long>(i));
    }
    return VideoClip("c", frames, normalize_timestamps(idx));
  }
};

double max_abs_diff(const GlobalCode& a, const GlobalCode& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

}  // namespace

TEST_CASE("single-frame clip gives that frame's code in every mode") {
  Fixture f;
  auto clip = f.clip({f.code(1)});
  auto ref = f.inv.invert(clip.frame(0));
  CHECK(encode_content(clip, f.inv, ContentMode::mean()) == ref);
  CHECK(encode_content(clip, f.inv, ContentMode::first()) == ref);
  CHECK(encode_content(clip, f.inv, ContentMode::single_frame(0)) == ref);
}

TEST_CASE("mean mode averages the inverted codes") {
  Fixture f;
  auto a = f.code(2), b = f.code(3);
  auto z = encode_content(f.clip({a, b}), f.inv);
  GlobalCode expect(a.layers, a.width);
  for (std::size_t i = 0; i < a.values.size(); ++i) expect.values[i] = 0.5 * (a.values[i] + b.values[i]);
  CHECK(max_abs_diff(z, expect) <= 1e-4);
  CHECK(max_abs_diff(encode_content(f.clip({a, b}), f.inv, ContentMode::single_frame(1)), b) <= 1e-4);
  CHECK_THROWS_AS(encode_content(f.clip({a, b}), f.inv, ContentMode::single_frame(2)), ValidationError);
}

TEST_CASE("mean pooling is invariant to frame order and duplication") {
  Fixture f;
  std::vector<GlobalCode> codes;
  for (int i = 0; i < 7; ++i) codes.push_back(f.code(10 + i));
  auto base = encode_content(f.clip(codes), f.inv);

  auto reversed = codes;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(max_abs_diff(encode_content(f.clip(reversed), f.inv), base) <= 1e-9);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto perm = codes;
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK(max_abs_diff(encode_content(f.clip(perm), f.inv), base) <= 1e-9);
  }

  std::vector<GlobalCode> doubled;
  for (const auto& c : codes) {
    doubled.push_back(c);
    doubled.push_back(c);
  }
  CHECK(max_abs_diff(encode_content(f.clip(doubled), f.inv), base) <= 1e-12);
}

TEST_CASE("mean_code summation is exact under permutation") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  std::vector<GlobalCode> codes(50, GlobalCode(2, 3));
  for (auto& c : codes)
    for (auto& v : c.values) v = u(rng) * (rng() % 2 ? 1e-6 : 1.0);
  auto m = mean_code(codes);
  std::shuffle(codes.begin(), codes.end(), rng);
  CHECK(mean_code(codes) == m);
  CHECK_THROWS_AS(mean_code({}), ValidationError);
  CHECK_THROWS_AS(mean_code({GlobalCode(2, 3), GlobalCode(3, 2)}), ShapeError);
  CHECK(ContentMode::parse("first").kind == ContentMode::Kind::First);
  CHECK_THROWS_AS(ContentMode::parse("median"), ValidationError);
}
