#include "vidode/ode_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vidode {

namespace {

// Dormand-Prince tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// Difference between the 5th and embedded 4th order weights.
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense output (Hairer's contd5).
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double rms_scaled(const std::vector<double>& v, const std::vector<double>& y, const SolverOptions& o) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double sk = o.atol + o.rtol * std::abs(y[i]);
    s += (v[i] / sk) * (v[i] / sk);
  }
  return std::sqrt(s / static_cast<double>(v.size()));
}

double initial_step(const VectorField& f, const ad::Var& y0, const ad::Var& f0, double span,
                    const SolverOptions& o, int& evals) {
  ad::NoGradGuard guard;
  const double dnf = rms_scaled(f0.value(), y0.value(), o);
  const double dny = rms_scaled(y0.value(), y0.value(), o);
  double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * dny / dnf;
  h = std::min(h, span);
  const ad::Var y1 = ad::linear_combination({y0, f0}, {1.0, h});
  const ad::Var f1 = f(y1);
  ++evals;
  std::vector<double> diff(f1.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = f1[i] - f0[i];
  const double der2 = rms_scaled(diff, y0.value(), o) / h;
  const double der12 = std::max(std::abs(der2), dnf);
  const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 1.0 / 5.0);
  return std::min({100.0 * h, h1, span});
}

std::string describe(const std::string& what, double t, double h) {
  std::ostringstream s;
  s << "dopri5: " << what << " at t=" << t << " (h=" << h << ")";
  return s.str();
}

}  // namespace

FlowResult dopri5(const VectorField& f, const ad::Var& y0, double t0, const std::vector<double>& query_times,
                  const SolverOptions& o) {
  if (!(o.rtol > 0.0) || !(o.atol > 0.0)) throw ValidationError("dopri5: tolerances must be positive");
  if (o.fixed_step && !(*o.fixed_step > 0.0)) throw ValidationError("dopri5: fixed step must be positive");
  for (std::size_t i = 0; i < query_times.size(); ++i) {
    if (!std::isfinite(query_times[i]) || query_times[i] < t0) {
      throw ValidationError("dopri5: query times must be finite and >= the initial time");
    }
    if (i > 0 && query_times[i] < query_times[i - 1]) throw ValidationError("dopri5: query times must be sorted");
  }

  FlowResult out;
  SolverReport& rep = out.report;
  out.states.reserve(query_times.size());
  std::size_t next = 0;
  while (next < query_times.size() && query_times[next] == t0) {
    out.states.push_back(y0);
    ++next;
  }
  if (next == query_times.size()) return out;

  const double t_end = query_times.back();
  double t = t0;
  ad::Var y = y0;
  ad::Var k1 = f(y);
  ++rep.rhs_evaluations;
  if (!all_finite(k1.value())) throw SolverError(describe("non-finite derivative", t, 0.0), rep);

  double h = o.fixed_step ? *o.fixed_step : initial_step(f, y, k1, t_end - t0, o, rep.rhs_evaluations);
  double err_prev = 1e-4;
  bool last_rejected = false;

  while (next < query_times.size()) {
    if (rep.accepted_steps + rep.rejected_steps >= o.max_steps) {
      throw SolverError(describe("exceeded max_steps", t, h), rep);
    }
    if (!o.fixed_step && h < o.min_step) throw SolverError(describe("step size underflow", t, h), rep);
    const bool final_step = h >= (t_end - t) - 1e-12 * std::max(1.0, std::abs(t_end));
    const double step = final_step ? t_end - t : h;

    const ad::Var k2 = f(ad::linear_combination({y, k1}, {1.0, step * a21}));
    const ad::Var k3 = f(ad::linear_combination({y, k1, k2}, {1.0, step * a31, step * a32}));
    const ad::Var k4 = f(ad::linear_combination({y, k1, k2, k3}, {1.0, step * a41, step * a42, step * a43}));
    const ad::Var k5 =
        f(ad::linear_combination({y, k1, k2, k3, k4}, {1.0, step * a51, step * a52, step * a53, step * a54}));
    const ad::Var k6 = f(ad::linear_combination({y, k1, k2, k3, k4, k5},
                                                {1.0, step * a61, step * a62, step * a63, step * a64, step * a65}));
    const ad::Var y5 = ad::linear_combination({y, k1, k3, k4, k5, k6},
                                              {1.0, step * b1, step * b3, step * b4, step * b5, step * b6});
    const ad::Var k7 = f(y5);
    rep.rhs_evaluations += 6;

    if (!all_finite(y5.value()) || !all_finite(k7.value())) {
      throw SolverError(describe("non-finite state", t, step), rep);
    }

    double err = 0.0;
    {
      std::vector<double> e(y.size());
      for (std::size_t i = 0; i < e.size(); ++i) {
        e[i] = step * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      }
      double s = 0.0;
      for (std::size_t i = 0; i < e.size(); ++i) {
        const double sk = o.atol + o.rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
        s += (e[i] / sk) * (e[i] / sk);
      }
      err = std::sqrt(s / static_cast<double>(e.size()));
    }

    if (o.fixed_step || err <= 1.0) {
      const double t_new = final_step ? t_end : t + step;
      // Dense output in nested-difference form: exact when the flow is constant.
      std::optional<std::vector<ad::Var>> rc;
      while (next < query_times.size() && query_times[next] <= t_new) {
        const double q = query_times[next];
        if (q == t_new) {
          out.states.push_back(y5);
        } else {
          if (!rc) {
            const ad::Var r2 = ad::linear_combination({y5, y}, {1.0, -1.0});
            const ad::Var r3 = ad::linear_combination({k1, r2}, {step, -1.0});
            const ad::Var r4 = ad::linear_combination({r2, k7, r3}, {1.0, -step, -1.0});
            const ad::Var r5 = ad::linear_combination(
                {k1, k3, k4, k5, k6, k7}, {step * d1, step * d3, step * d4, step * d5, step * d6, step * d7});
            rc = std::vector<ad::Var>{r2, r3, r4, r5};
          }
          const double th = (q - t) / step, th1 = 1.0 - th;
          const auto& r = *rc;
          out.states.push_back(ad::linear_combination(
              {y, r[0], r[1], r[2], r[3]}, {1.0, th, th * th1, th * th * th1, th * th * th1 * th1}));
        }
        ++next;
      }
      ++rep.accepted_steps;
      rep.max_error_estimate = std::max(rep.max_error_estimate, err);
      t = t_new;
      y = y5;
      k1 = k7;
      if (!o.fixed_step) {
        const double expo = 0.2 - 0.75 * o.beta;
        double factor = err == 0.0 ? o.max_factor
                                   : o.safety * std::pow(err, -expo) * std::pow(err_prev, o.beta);
        factor = std::clamp(factor, o.min_factor, o.max_factor);
        if (last_rejected) factor = std::min(factor, 1.0);
        err_prev = std::max(err, 1e-4);
        h = step * factor;
      }
      last_rejected = false;
    } else {
      ++rep.rejected_steps;
      const double factor = std::max(o.min_factor, o.safety * std::pow(err, -0.2));
      h = step * factor;
      last_rejected = true;
    }
  }
  return out;
}

}  // namespace vidode
