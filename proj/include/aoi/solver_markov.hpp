#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "aoi/channel.hpp"
#include "aoi/config.hpp"
#include "aoi/energy.hpp"
#include "aoi/solver_iid_single.hpp"
#include "aoi/thresholds.hpp"
#include "aoi/value_iteration.hpp"

namespace aoi {

// Energy model for the Markovian system: arrivals drawn from `arrivals` in
// H_1, none in H_2, with the harvest state following `chain`.
struct MarkovEnergy {
  ArrivalDistribution arrivals;
  HarvestChain chain;
};

// State (E, T, tau, C_prev, H), enumerated in that order with H fastest.
// tau is capped at T_max like the age; cells with tau > T are never reached
// and hold 0. Intermediate states are (E, T, C, H).
struct MarkovGrid {
  int capacity = 0;
  int age_cap = 2;
  std::size_t channels = 1;

  int max_tau() const { return age_cap; }
  std::size_t num_states() const {
    return static_cast<std::size_t>(capacity + 1) * age_cap * age_cap * channels * 2;
  }
  std::size_t num_intermediate() const { return static_cast<std::size_t>(capacity + 1) * age_cap * channels * 2; }
  std::size_t state(int e, int t, int tau, std::size_t c_prev, Harvest h) const {
    return ((((static_cast<std::size_t>(e) * age_cap + (t - 1)) * age_cap + (tau - 1)) * channels + c_prev) * 2) +
           static_cast<std::size_t>(h);
  }
  std::size_t inter(int e, int t, std::size_t c, Harvest h) const {
    return ((static_cast<std::size_t>(e) * age_cap + (t - 1)) * channels + c) * 2 + static_cast<std::size_t>(h);
  }
};

inline constexpr Harvest kHarvestStates[] = {Harvest::kHarvesting, Harvest::kIdle};

struct MarkovSolution {
  MarkovGrid grid;
  std::vector<double> J, W, V;
  std::vector<char> probe_table, sample_table;
  std::vector<double> error_trace;
  // Largest spread across C_prev of any column of Q^tau_max; 0 means the
  // capped tau no longer carries information about C_prev.
  double tau_cap_row_spread = 0.0;

  double j(int e, int t, int tau, std::size_t cp, Harvest h) const { return J[grid.state(e, t, tau, cp, h)]; }
  double v(int e, int t, int tau, std::size_t cp, Harvest h) const { return V[grid.state(e, t, tau, cp, h)]; }
  double w(int e, int t, std::size_t c, Harvest h) const { return W[grid.inter(e, t, c, h)]; }
  bool probe(int e, int t, int tau, std::size_t cp, Harvest h) const {
    return probe_table[grid.state(e, t, tau, cp, h)] != 0;
  }
  bool sample(int e, int t, std::size_t c, Harvest h) const { return sample_table[grid.inter(e, t, c, h)] != 0; }
};

namespace detail {

// E over A | H and H_next | H of J(min(base + A, B), t, tau, c, H_next).
inline double expected_markov(const std::vector<double>& J, const MarkovGrid& g, const MarkovEnergy& en, Harvest h,
                              int base, int t, int tau, std::size_t c) {
  double acc = 0.0;
  for (Harvest hn : kHarvestStates) {
    const double ph = en.chain.transition(h, hn);
    if (ph == 0.0) continue;
    if (h == Harvest::kIdle) {
      acc += ph * J[g.state(base, t, tau, c, hn)];
      continue;
    }
    const auto& sup = en.arrivals.support();
    const auto& pr = en.arrivals.probs();
    double inner = 0.0;
    for (std::size_t i = 0; i < sup.size(); ++i)
      inner += pr[i] * J[g.state(buffer_add(base, sup[i], g.capacity), t, tau, c, hn)];
    acc += ph * inner;
  }
  return acc;
}

inline std::vector<double> backup_markov(const std::vector<double>& J, const SystemConfig& cfg,
                                         const MarkovChannel& ch, const TauStepTable& powers, const MarkovEnergy& en,
                                         MarkovSolution* sol) {
  const MarkovGrid g{cfg.buffer_capacity, cfg.age_cap, ch.num_states()};
  const double a = cfg.discount;
  const int active = cfg.min_active_energy();
  std::vector<double> out(g.num_states(), 0.0);
  std::vector<double> W(g.num_intermediate(), 0.0);
  if (sol) {
    sol->sample_table.assign(g.num_intermediate(), 0);
    sol->probe_table.assign(g.num_states(), 0);
    sol->V.assign(g.num_states(), 0.0);
  }
  // Intermediate values first; they do not depend on tau or C_prev.
  for (int e = active; e <= g.capacity; ++e)
    for (int t = 1; t <= g.age_cap; ++t) {
      const int tn = cfg.next_age(t);
      const int spent = e - cfg.probe_cost - cfg.sample_cost;
      for (std::size_t c = 0; c < g.channels; ++c)
        for (Harvest h : kHarvestStates) {
          const double p = ch.success(c);
          const double idle = t + a * expected_markov(J, g, en, h, e - cfg.probe_cost, tn, 1, c);
          const double sample = t * (1.0 - p) + a * p * expected_markov(J, g, en, h, spent, 1, 1, c) +
                                a * (1.0 - p) * expected_markov(J, g, en, h, spent, tn, 1, c);
          const bool take = strictly_better(sample, idle);
          W[g.inter(e, t, c, h)] = take ? sample : idle;
          if (sol) sol->sample_table[g.inter(e, t, c, h)] = take;
        }
    }
  for (int e = 0; e <= g.capacity; ++e)
    for (int t = 1; t <= g.age_cap; ++t) {
      const int tn = cfg.next_age(t);
      for (int tau = 1; tau <= t; ++tau) {
        const int taun = cfg.next_age(tau);
        for (std::size_t cp = 0; cp < g.channels; ++cp) {
          auto weights = powers.row(tau, cp);
          for (Harvest h : kHarvestStates) {
            const std::size_t s = g.state(e, t, tau, cp, h);
            const double no_probe = t + a * expected_markov(J, g, en, h, e, tn, taun, cp);
            if (e < active) {
              out[s] = no_probe;
              if (sol) sol->V[s] = no_probe;
              continue;
            }
            double v = 0.0;
            for (std::size_t c = 0; c < g.channels; ++c) v += weights[c] * W[g.inter(e, t, c, h)];
            const bool probe = strictly_better(v, no_probe);
            out[s] = probe ? v : no_probe;
            if (sol) {
              sol->V[s] = v;
              sol->probe_table[s] = probe;
            }
          }
        }
      }
    }
  if (sol) {
    // Below the probing threshold the intermediate value is the forced idle value.
    for (int e = 0; e < active && e <= g.capacity; ++e)
      for (int t = 1; t <= g.age_cap; ++t)
        for (std::size_t c = 0; c < g.channels; ++c)
          for (Harvest h : kHarvestStates) W[g.inter(e, t, c, h)] = out[g.state(e, t, 1, c, h)];
    sol->W = std::move(W);
  }
  return out;
}

inline double row_spread(const TauStepTable& powers, std::size_t m) {
  double spread = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double lo = 1.0, hi = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double x = powers.row(powers.max_tau(), i)[j];
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    spread = std::max(spread, hi - lo);
  }
  return spread;
}

}  // namespace detail

inline std::vector<double> bellman_backup_markov(const std::vector<double>& J, const SystemConfig& cfg,
                                                 const MarkovChannel& ch, const MarkovEnergy& en) {
  const TauStepTable powers(ch, cfg.age_cap);
  return detail::backup_markov(J, validate(cfg), ch, powers, en, nullptr);
}

// Channel weights the probe branch mixes W with at (tau, C_prev).
inline std::vector<double> probe_weights(const TauStepTable& powers, int tau, std::size_t c_prev) {
  auto row = powers.row(tau, c_prev);
  return {row.begin(), row.end()};
}

inline MarkovSolution value_iteration_markov(const SystemConfig& cfg_in, const MarkovChannel& ch,
                                             const MarkovEnergy& en, const IterationOptions& opts = {}) {
  const SystemConfig& cfg = validate(cfg_in);
  const TauStepTable powers(ch, cfg.age_cap);
  MarkovSolution sol;
  sol.grid = MarkovGrid{cfg.buffer_capacity, cfg.age_cap, ch.num_states()};
  auto J = iterate_to_fixed_point(
      sol.grid.num_states(),
      [&](const std::vector<double>& x) { return detail::backup_markov(x, cfg, ch, powers, en, nullptr); },
      cfg.discount, opts, sol.error_trace);
  sol.J = detail::backup_markov(J, cfg, ch, powers, en, &sol);
  sol.error_trace.push_back(sup_norm_diff(sol.J, J));
  assert_contraction(sol.error_trace, cfg.discount, rounding_slack(sol.J));
  sol.tau_cap_row_spread = detail::row_spread(powers, ch.num_states());
  return sol;
}

// ---------------------------------------------------------------------------
// Threshold surfaces. Every structural property here is conjectural and is
// reported with the offending cells rather than enforced.

struct MarkovThresholdReport {
  MarkovGrid grid;
  int min_active_energy = 0;
  // T_th(E, tau, C_prev, H): probe iff T >= threshold, T ranging over [tau, T_max].
  std::vector<std::optional<int>> probe_age_threshold;
  // p_th(E, T, H).
  std::vector<std::optional<double>> sample_prob_threshold;
  // T_th(E, C, H): after probing C, sample iff T >= threshold.
  std::vector<std::optional<int>> sample_age_threshold;
  std::vector<StructureFinding> conjecture_violations;

  std::size_t probe_cell(int e, int tau, std::size_t cp, Harvest h) const {
    return ((static_cast<std::size_t>(e) * grid.age_cap + (tau - 1)) * grid.channels + cp) * 2 +
           static_cast<std::size_t>(h);
  }
  std::size_t prob_cell(int e, int t, Harvest h) const {
    return (static_cast<std::size_t>(e) * grid.age_cap + (t - 1)) * 2 + static_cast<std::size_t>(h);
  }
  std::size_t post_cell(int e, std::size_t c, Harvest h) const {
    return (static_cast<std::size_t>(e) * grid.channels + c) * 2 + static_cast<std::size_t>(h);
  }

  std::optional<int> t_th(int e, int tau, std::size_t cp, Harvest h) const {
    return probe_age_threshold[probe_cell(e, tau, cp, h)];
  }
  std::optional<double> p_th(int e, int t, Harvest h) const { return sample_prob_threshold[prob_cell(e, t, h)]; }
  std::optional<int> t_th_post(int e, std::size_t c, Harvest h) const {
    return sample_age_threshold[post_cell(e, c, h)];
  }
};

inline std::string harvest_name(Harvest h) { return h == Harvest::kHarvesting ? "H1" : "H2"; }

inline MarkovThresholdReport extract_thresholds_markov(const MarkovSolution& sol, const SystemConfig& cfg,
                                                       const MarkovChannel& ch) {
  const MarkovGrid& g = sol.grid;
  MarkovThresholdReport r;
  r.grid = g;
  r.min_active_energy = cfg.min_active_energy();
  r.probe_age_threshold.assign(static_cast<std::size_t>(g.capacity + 1) * g.age_cap * g.channels * 2, std::nullopt);
  r.sample_prob_threshold.assign(static_cast<std::size_t>(g.capacity + 1) * g.age_cap * 2, std::nullopt);
  r.sample_age_threshold.assign(static_cast<std::size_t>(g.capacity + 1) * g.channels * 2, std::nullopt);
  auto report = [&](const std::string& prop, const std::string& cell) { r.conjecture_violations.push_back({prop, cell}); };

  for (int e = r.min_active_energy; e <= g.capacity; ++e)
    for (Harvest h : kHarvestStates) {
      for (int tau = 1; tau <= g.max_tau(); ++tau)
        for (std::size_t cp = 0; cp < g.channels; ++cp) {
          auto& th = r.probe_age_threshold[r.probe_cell(e, tau, cp, h)];
          bool closed = true;
          for (int t = tau; t <= g.age_cap; ++t) {
            if (sol.probe(e, t, tau, cp, h)) {
              if (!th) th = t;
            } else if (th) {
              closed = false;
            }
            if (t > tau && sol.j(e, t, tau, cp, h) < sol.j(e, t - 1, tau, cp, h) - 1e-10)
              report("J non-decreasing in T", "E=" + std::to_string(e) + ",T=" + std::to_string(t) +
                                                  ",tau=" + std::to_string(tau) + ",C" + std::to_string(cp + 1) +
                                                  "," + harvest_name(h));
          }
          if (!closed)
            report("probe set upward-closed in T", "E=" + std::to_string(e) + ",tau=" + std::to_string(tau) + ",C" +
                                                       std::to_string(cp + 1) + "," + harvest_name(h));
        }
      for (int t = 1; t <= g.age_cap; ++t) {
        std::optional<double> best;
        for (std::size_t c = 0; c < g.channels; ++c)
          if (sol.sample(e, t, c, h) && (!best || ch.success(c) < *best)) best = ch.success(c);
        r.sample_prob_threshold[r.prob_cell(e, t, h)] = best;
        const std::string where = "(E=" + std::to_string(e) + ",T=" + std::to_string(t) + "," + harvest_name(h) + ")";
        std::vector<StructureFinding> found;
        detail::check_upward_closed_in_p(ch.success_probs(), [&](std::size_t c) { return sol.sample(e, t, c, h); },
                                         where, found);
        for (auto& f : found) report(f.property, f.cell);
        for (std::size_t j = 0; j < g.channels; ++j)
          for (std::size_t k = 0; k < g.channels; ++k)
            if (ch.success(j) > ch.success(k) && sol.w(e, t, j, h) > sol.w(e, t, k, h) + 1e-10)
              report("W non-increasing in p(C)", where);
      }
      for (std::size_t c = 0; c < g.channels; ++c) {
        auto& th = r.sample_age_threshold[r.post_cell(e, c, h)];
        bool closed = true;
        for (int t = 1; t <= g.age_cap; ++t) {
          if (sol.sample(e, t, c, h)) {
            if (!th) th = t;
          } else if (th) {
            closed = false;
          }
        }
        if (!closed)
          report("sample set upward-closed in T",
                 "E=" + std::to_string(e) + ",C" + std::to_string(c + 1) + "," + harvest_name(h));
      }
    }
  return r;
}

}  // namespace aoi
