#pragma once

// Dormand-Prince 5(4) integration of autonomous systems dz/dt = f(z) on
// ad::Var states. The solver records every stage in the autodiff graph, so
// losses on the returned states backpropagate through the integration (step
// sizes are treated as constants).

#include "vidode/autodiff.hpp"
#include "vidode/errors.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace vidode {

struct SolverOptions {
  double rtol = 1e-4;
  double atol = 1e-5;
  double min_step = 1e-10;
  int max_steps = 10000;
  /// When set, take fixed steps of this size (no error control).
  std::optional<double> fixed_step;
  double safety = 0.9;
  double min_factor = 0.2;
  double max_factor = 5.0;
  /// Exponent on the previous error in the PI controller.
  double beta = 0.04;
};

struct SolverReport {
  int accepted_steps = 0;
  int rejected_steps = 0;
  int rhs_evaluations = 0;
  double max_error_estimate = 0.0;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, SolverReport report) : Error(what), report_(report) {}
  const SolverReport& report() const { return report_; }

 private:
  SolverReport report_;
};

using VectorField = std::function<ad::Var(const ad::Var&)>;

struct FlowResult {
  std::vector<ad::Var> states;  // one per query time
  SolverReport report;
};

/// Integrates from (t0, y0) and returns the state at each query time. Queries
/// must be sorted and >= t0; queries equal to t0 return y0 itself. Queries
/// that fall inside an accepted step use the 4th-order dense interpolant.
FlowResult dopri5(const VectorField& f, const ad::Var& y0, double t0, const std::vector<double>& query_times,
                  const SolverOptions& options = {});

}  // namespace vidode
