#include "doctest.h"

#include "support/gradcheck.hpp"
#include "vidode/autodiff.hpp"
#include "vidode/errors.hpp"

#include <cmath>

using namespace vidode;
using ad::Var;
using testing::check_leaf_gradients;
using testing::random_vector;

namespace {

void expect_grad_ok(const std::function<Var(const std::vector<Var>&)>& f,
                    std::vector<std::vector<double>> values, std::vector<ad::Shape> shapes) {
  auto r = check_leaf_gradients(f, std::move(values), shapes);
  CHECK(r.checked > 0);
  CHECK(r.max_rel_error < 1e-6);
}

}  // namespace

TEST_CASE("elementwise ops and reductions have correct gradients") {
  auto a = random_vector(6, 1);
  auto b = random_vector(6, 2);
  expect_grad_ok([](const auto& x) { return ad::sum(ad::mul(ad::tanh(x[0]), ad::sigmoid(x[1]))); }, {a, b},
                 {{2, 3}, {2, 3}});
  expect_grad_ok([](const auto& x) { return ad::sum(ad::gelu(ad::sub(x[0], ad::silu(x[1])))); }, {a, b},
                 {{6}, {6}});
  expect_grad_ok([](const auto& x) { return ad::dot(ad::normalize(x[0]), x[1]); }, {a, b}, {{6}, {6}});
  expect_grad_ok([](const auto& x) { return ad::norm(ad::div_scalar(x[0], ad::norm(x[1]))); }, {a, b},
                 {{6}, {6}});
  expect_grad_ok([](const auto& x) { return ad::sum(ad::square(ad::mean_rows(x[0]))); }, {a}, {{3, 2}});
}

TEST_CASE("matrix ops have correct gradients") {
  auto a = random_vector(6, 3);
  auto b = random_vector(12, 4);
  auto c = random_vector(4, 5);
  expect_grad_ok(
      [](const auto& x) { return ad::sum(ad::square(ad::add_bias(ad::matmul(x[0], x[1]), x[2]))); },
      {a, b, random_vector(6, 12)}, {{3, 2}, {2, 6}, {6}});
  expect_grad_ok([](const auto& x) { return ad::sum(ad::square(ad::softmax_rows(ad::transpose(x[0])))); },
                 {b}, {{3, 4}});
  expect_grad_ok(
      [](const auto& x) { return ad::sum(ad::mul(ad::layer_norm_rows(x[0], x[1], x[2]), x[0])); },
      {b, c, random_vector(4, 6)}, {{3, 4}, {4}, {4}});
  expect_grad_ok(
      [](const auto& x) {
        auto cat = ad::concat_last({ad::slice_last(x[0], 1, 3), x[0]});
        auto rows = ad::concat_rows({ad::slice_rows(cat, 1, 3), cat});
        return ad::sum(ad::square(rows));
      },
      {b}, {{3, 4}});
}

TEST_CASE("conv2d and pooling gradients") {
  auto img = random_vector(6 * 5 * 2, 7);
  auto w = random_vector(3 * 3 * 2 * 3, 8, 0.3);
  auto bias = random_vector(3, 9);
  for (int stride : {1, 2}) {
    expect_grad_ok(
        [stride](const auto& x) { return ad::sum(ad::square(ad::conv2d(x[0], x[1], x[2], stride, 1))); },
        {img, w, bias}, {{6, 5, 2}, {3, 3, 2, 3}, {3}});
  }
  expect_grad_ok([](const auto& x) { return ad::sum(ad::square(ad::avg_pool2d(x[0], 2, 1))); }, {img},
                 {{6, 5, 2}});
}

TEST_CASE("conv2d matches a direct convolution") {
  auto img = random_vector(5 * 4 * 2, 10);
  auto w = random_vector(3 * 3 * 2 * 1, 11);
  Var out = ad::conv2d(Var::constant(img, {5, 4, 2}), Var::constant(w, {3, 3, 2, 1}), Var::constant(0.5), 1, 1);
  REQUIRE(out.shape() == ad::Shape{5, 4, 1});
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 4; ++x) {
      double acc = 0.5;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          for (int c = 0; c < 2; ++c) {
            const int iy = y + ky - 1, ix = x + kx - 1;
            if (iy < 0 || iy >= 5 || ix < 0 || ix >= 4) continue;
            acc += img[(iy * 4 + ix) * 2 + c] * w[(ky * 3 + kx) * 2 + c];
          }
      CHECK(out[y * 4 + x] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("parameters accumulate gradients and no-grad mode records nothing") {
  ad::Parameter p("w", {3});
  p.value = {1.0, 2.0, 3.0};
  Var y = ad::sum(ad::square(Var::leaf(p)));
  ad::backward(y);
  CHECK(p.grad == std::vector<double>{2.0, 4.0, 6.0});

  ad::NoGradGuard guard;
  Var z = ad::sum(ad::square(Var::leaf(p)));
  CHECK_FALSE(z.requires_grad());
}

TEST_CASE("shape mismatches are reported") {
  CHECK_THROWS_AS(ad::add(Var::zeros({2}), Var::zeros({3})), ShapeError);
  CHECK_THROWS_AS(ad::matmul(Var::zeros({2, 3}), Var::zeros({2, 3})), ShapeError);
}

TEST_CASE("norm has zero gradient at the origin") {
  Var v = Var::variable({0.0, 0.0}, {2});
  ad::backward(ad::norm(v));
  for (double g : v.grad()) CHECK(g == 0.0);
}
