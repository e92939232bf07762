#pragma once

// Finite-difference check of backward() against every (or a sample of the)
// entries of named parameters.

#include "gradcheck.hpp"
#include "vidode/parameters.hpp"

#include <functional>
#include <string>
#include <vector>

namespace vidode::testing {

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
  int checked = 0;
};

/// `loss` must rebuild the graph from the current parameter values each call.
inline std::vector<ParamCheck> check_parameter_gradients(ParameterSet& params, const std::function<ad::Var()>& loss,
                                                         const std::vector<std::string>& names,
                                                         int samples_per_param = 6, double eps = 1e-5,
                                                         unsigned seed = 1) {
  params.zero_grad();
  ad::backward(loss());
  std::mt19937_64 rng(seed);
  std::vector<ParamCheck> out;
  for (const auto& name : names) {
    ad::Parameter& p = params.get(name);
    const std::vector<double> analytic = p.grad;
    ParamCheck pc{name};
    // Probe the entries with the largest analytic gradient plus a few random ones.
    std::vector<std::size_t> idx(p.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return std::abs(analytic[a]) > std::abs(analytic[b]); });
    std::vector<std::size_t> probe(idx.begin(), idx.begin() + std::min<std::size_t>(idx.size(), samples_per_param / 2));
    for (int k = 0; k < samples_per_param - static_cast<int>(probe.size()) && !idx.empty(); ++k) {
      probe.push_back(idx[rng() % idx.size()]);
    }
    for (std::size_t j : probe) {
      const double orig = p.value[j];
      double fp, fm;
      {
        ad::NoGradGuard g;
        p.value[j] = orig + eps;
        fp = loss().item();
        p.value[j] = orig - eps;
        fm = loss().item();
      }
      p.value[j] = orig;
      const double numeric = (fp - fm) / (2 * eps);
      pc.max_rel_error = std::max(pc.max_rel_error, rel_error(analytic[j], numeric));
      pc.max_abs_grad = std::max(pc.max_abs_grad, std::abs(analytic[j]));
      ++pc.checked;
    }
    out.push_back(pc);
  }
  return out;
}

}  // namespace vidode::testing
