#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <vector>

#include "aoi/error.hpp"

namespace aoi {

struct IterationOptions {
  double tol = 1e-8;       // stop once the sup-norm change is <= tol
  int max_iters = 200000;
};

// Slack on e[t+1] <= alpha * e[t] to absorb floating-point rounding.
inline constexpr double kContractionSlack = 1e-12;

// Slack used by the solvers' own runtime check. Once the greedy policy stops
// changing, e[t+1] / e[t] tends to exactly alpha and rounding in sums of
// magnitude |J| decides the comparison, so the absolute slack grows with |J|.
inline double rounding_slack(const std::vector<double>& J) {
  double m = 0.0;
  for (double x : J) m = std::max(m, std::abs(x));
  return kContractionSlack + 64.0 * std::numeric_limits<double>::epsilon() * m;
}

// Relative margin an action must win by to displace the energy-conserving
// alternative. Exact ties and float noise both resolve to the cheaper action.
inline constexpr double kTieMargin = 1e-12;

inline bool strictly_better(double candidate, double incumbent) {
  return candidate < incumbent - kTieMargin * std::max(1.0, std::abs(incumbent));
}

inline double sup_norm_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]));
  return e;
}

// Index of the first t with trace[t+1] > alpha * trace[t] + slack, or -1.
inline long first_contraction_violation(const std::vector<double>& trace, double alpha,
                                       double slack = kContractionSlack) {
  for (std::size_t t = 0; t + 1 < trace.size(); ++t)
    if (trace[t + 1] > alpha * trace[t] + slack) return static_cast<long>(t);
  return -1;
}

inline void assert_contraction(const std::vector<double>& trace, double alpha, double slack = kContractionSlack) {
  const long t = first_contraction_violation(trace, alpha, slack);
  if (t >= 0) {
    std::ostringstream os;
    os << "e[" << t + 1 << "]=" << trace[t + 1] << " > alpha*e[" << t << "]=" << alpha * trace[t];
    throw ContractionViolation(os.str());
  }
}

// Fixed-point iteration J <- backup(J) from J = 0. Returns the last iterate and
// appends every sup-norm change to `trace`; the contraction bound is checked
// as the trace grows.
template <class Backup>
std::vector<double> iterate_to_fixed_point(std::size_t size, Backup&& backup, double alpha,
                                           const IterationOptions& opts, std::vector<double>& trace) {
  if (!(opts.tol > 0.0)) throw std::invalid_argument("value iteration: tol must be > 0");
  std::vector<double> J(size, 0.0);
  for (int it = 0; it < opts.max_iters; ++it) {
    std::vector<double> next = backup(J);
    trace.push_back(sup_norm_diff(next, J));
    J = std::move(next);
    if (trace.size() >= 2) {
      const double prev = trace[trace.size() - 2];
      const double slack = rounding_slack(J);
      if (trace.back() > alpha * prev + slack) assert_contraction(trace, alpha, slack);
    }
    if (trace.back() <= opts.tol) return J;
  }
  std::ostringstream os;
  os << "max_iters=" << opts.max_iters << " reached with e=" << trace.back() << " > tol=" << opts.tol;
  throw NoConvergence(os.str());
}

}  // namespace aoi
