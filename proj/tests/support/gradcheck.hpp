#pragma once

// Central-difference gradient checking used across the test suites.

#include "vidode/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace vidode::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  int checked = 0;
};

inline double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Checks d f / d inputs for Var leaves rebuilt from `values` on each call.
inline GradCheckResult check_leaf_gradients(
    const std::function<ad::Var(const std::vector<ad::Var>&)>& f,
    std::vector<std::vector<double>> values, const std::vector<ad::Shape>& shapes, double eps = 1e-5) {
  std::vector<ad::Var> leaves;
  for (std::size_t i = 0; i < values.size(); ++i) leaves.push_back(ad::Var::variable(values[i], shapes[i]));
  ad::Var out = f(leaves);
  ad::backward(out);

  GradCheckResult r;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto analytic = leaves[i].grad();
    for (std::size_t j = 0; j < values[i].size(); ++j) {
      auto eval = [&](double delta) {
        auto v = values;
        v[i][j] += delta;
        std::vector<ad::Var> c;
        for (std::size_t k = 0; k < v.size(); ++k) c.push_back(ad::Var::constant(v[k], shapes[k]));
        return f(c).item();
      };
      const double numeric = (eval(eps) - eval(-eps)) / (2 * eps);
      const double a = analytic.empty() ? 0.0 : analytic[j];
      r.max_rel_error = std::max(r.max_rel_error, rel_error(a, numeric));
      r.max_abs_analytic = std::max(r.max_abs_analytic, std::abs(a));
      ++r.checked;
    }
  }
  return r;
}

inline std::vector<double> random_vector(std::size_t n, unsigned seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace vidode::testing
