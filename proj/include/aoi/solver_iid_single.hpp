#pragma once

#include <cstddef>
#include <optional>
#include <sstream>
#include <vector>

#include "aoi/channel.hpp"
#include "aoi/config.hpp"
#include "aoi/energy.hpp"
#include "aoi/thresholds.hpp"
#include "aoi/value_iteration.hpp"

namespace aoi {

// Index map for states (E, T) and intermediate states (E, T, C) of the
// single-process model.
struct SingleGrid {
  int capacity = 0;
  int age_cap = 2;
  std::size_t channels = 1;

  std::size_t num_states() const { return static_cast<std::size_t>(capacity + 1) * age_cap; }
  std::size_t num_intermediate() const { return num_states() * channels; }
  std::size_t state(int e, int t) const { return static_cast<std::size_t>(e) * age_cap + (t - 1); }
  std::size_t inter(int e, int t, std::size_t c) const { return state(e, t) * channels + c; }
};

// J over (E, T); W over (E, T, C); V(E, T) = sum_j q_j W(E, T, C_j).
// W and V are only meaningful where probing is feasible (E >= E_p + E_s);
// elsewhere they hold the forced idle value J(E, T).
struct ValueTables1 {
  SingleGrid grid;
  std::vector<double> J, W, V;

  double j(int e, int t) const { return J[grid.state(e, t)]; }
  double v(int e, int t) const { return V[grid.state(e, t)]; }
  double w(int e, int t, std::size_t c) const { return W[grid.inter(e, t, c)]; }
};

// Greedy two-stage policy: probe decision b at (E, T), sample decision a at
// (E, T, C). Both are false wherever E < E_p + E_s.
struct Policy1 {
  SingleGrid grid;
  std::vector<char> probe_table, sample_table;

  bool probe(int e, int t) const { return probe_table[grid.state(e, t)] != 0; }
  bool sample(int e, int t, std::size_t c) const { return sample_table[grid.inter(e, t, c)] != 0; }
};

struct SingleSolution {
  ValueTables1 tables;
  Policy1 policy;
  std::vector<double> error_trace;
};

namespace detail {

// E_A J(min(base + A, B), t) for a J laid out on `grid`.
inline double expected_over_arrivals(const std::vector<double>& J, const SingleGrid& g,
                                     const ArrivalDistribution& arr, int base, int t) {
  double acc = 0.0;
  const auto& sup = arr.support();
  const auto& pr = arr.probs();
  for (std::size_t i = 0; i < sup.size(); ++i)
    acc += pr[i] * J[g.state(buffer_add(base, sup[i], g.capacity), t)];
  return acc;
}

inline ValueTables1 backup_single(const std::vector<double>& J, const SystemConfig& cfg,
                                  const IidChannel& ch, const ArrivalDistribution& arr,
                                  Policy1* policy) {
  const SingleGrid g{cfg.buffer_capacity, cfg.age_cap, ch.num_states()};
  ValueTables1 out{g, std::vector<double>(g.num_states()), std::vector<double>(g.num_intermediate()),
                   std::vector<double>(g.num_states())};
  if (policy) *policy = Policy1{g, std::vector<char>(g.num_states(), 0), std::vector<char>(g.num_intermediate(), 0)};
  const double a = cfg.discount;
  const int active = cfg.min_active_energy();

  for (int e = 0; e <= g.capacity; ++e) {
    for (int t = 1; t <= g.age_cap; ++t) {
      const int tn = cfg.next_age(t);
      const double no_probe = t + a * expected_over_arrivals(J, g, arr, e, tn);
      const std::size_t s = g.state(e, t);
      if (e < active) {
        out.J[s] = out.V[s] = no_probe;
        for (std::size_t c = 0; c < g.channels; ++c) out.W[g.inter(e, t, c)] = no_probe;
        continue;
      }
      const double idle = t + a * expected_over_arrivals(J, g, arr, e - cfg.probe_cost, tn);
      const int spent = e - cfg.probe_cost - cfg.sample_cost;
      const double fresh = expected_over_arrivals(J, g, arr, spent, 1);
      const double stale = expected_over_arrivals(J, g, arr, spent, tn);
      double v = 0.0;
      for (std::size_t c = 0; c < g.channels; ++c) {
        const double p = ch.success(c);
        const double sample = t * (1.0 - p) + a * p * fresh + a * (1.0 - p) * stale;
        const bool take = strictly_better(sample, idle);
        const double w = take ? sample : idle;
        out.W[g.inter(e, t, c)] = w;
        if (policy) policy->sample_table[g.inter(e, t, c)] = take;
        v += ch.occurrence(c) * w;
      }
      out.V[s] = v;
      const bool probe = strictly_better(v, no_probe);
      out.J[s] = probe ? v : no_probe;
      if (policy) policy->probe_table[s] = probe;
    }
  }
  return out;
}

}  // namespace detail

// One application of the two-stage Bellman operator to J.
inline ValueTables1 bellman_backup(const std::vector<double>& J, const SystemConfig& cfg,
                                   const IidChannel& ch, const ArrivalDistribution& arr) {
  return detail::backup_single(J, validate(cfg), ch, arr, nullptr);
}

// Greedy policy and tables for a given J (one backup, recording decisions).
inline SingleSolution greedy_single(const std::vector<double>& J, const SystemConfig& cfg,
                                    const IidChannel& ch, const ArrivalDistribution& arr) {
  SingleSolution sol;
  sol.tables = detail::backup_single(J, cfg, ch, arr, &sol.policy);
  return sol;
}

// Value iteration from J = 0 until the sup-norm change drops to opts.tol.
// The returned tables are one further backup of the last iterate, so J, W, V
// and the greedy policy are mutually consistent; that final change is also in
// the trace.
inline SingleSolution value_iteration(const SystemConfig& cfg_in, const IidChannel& ch,
                                      const ArrivalDistribution& arr, const IterationOptions& opts = {}) {
  const SystemConfig& cfg = validate(cfg_in);
  const SingleGrid g{cfg.buffer_capacity, cfg.age_cap, ch.num_states()};
  std::vector<double> trace;
  auto J = iterate_to_fixed_point(
      g.num_states(), [&](const std::vector<double>& x) { return detail::backup_single(x, cfg, ch, arr, nullptr).J; },
      cfg.discount, opts, trace);
  SingleSolution sol = greedy_single(J, cfg, ch, arr);
  trace.push_back(sup_norm_diff(sol.tables.J, J));
  assert_contraction(trace, cfg.discount, rounding_slack(sol.tables.J));
  sol.error_trace = std::move(trace);
  return sol;
}

// ---------------------------------------------------------------------------
// Sampling without probing: one decision per slot, sample blind at cost E_s.

struct NoProbeSolution {
  SingleGrid grid;  // channels = 1; no intermediate states
  std::vector<double> J;
  std::vector<char> sample_table;
  std::vector<double> error_trace;

  double j(int e, int t) const { return J[grid.state(e, t)]; }
  bool sample(int e, int t) const { return sample_table[grid.state(e, t)] != 0; }
};

namespace detail {

inline std::vector<double> backup_no_probe(const std::vector<double>& J, const SystemConfig& cfg,
                                           const IidChannel& ch, const ArrivalDistribution& arr,
                                           std::vector<char>* decisions) {
  const SingleGrid g{cfg.buffer_capacity, cfg.age_cap, 1};
  std::vector<double> out(g.num_states());
  if (decisions) decisions->assign(g.num_states(), 0);
  const double a = cfg.discount;
  for (int e = 0; e <= g.capacity; ++e) {
    for (int t = 1; t <= g.age_cap; ++t) {
      const int tn = cfg.next_age(t);
      const double idle = t + a * expected_over_arrivals(J, g, arr, e, tn);
      const std::size_t s = g.state(e, t);
      if (e < cfg.sample_cost) {
        out[s] = idle;
        continue;
      }
      const int spent = e - cfg.sample_cost;
      const double fresh = expected_over_arrivals(J, g, arr, spent, 1);
      const double stale = expected_over_arrivals(J, g, arr, spent, tn);
      double sample = 0.0;
      for (std::size_t c = 0; c < ch.num_states(); ++c) {
        const double p = ch.success(c);
        sample += ch.occurrence(c) * (t * (1.0 - p) + a * p * fresh + a * (1.0 - p) * stale);
      }
      const bool take = strictly_better(sample, idle);
      out[s] = take ? sample : idle;
      if (decisions) (*decisions)[s] = take;
    }
  }
  return out;
}

}  // namespace detail

inline NoProbeSolution value_iteration_no_probe(const SystemConfig& cfg_in, const IidChannel& ch,
                                                const ArrivalDistribution& arr, const IterationOptions& opts = {}) {
  const SystemConfig& cfg = validate(cfg_in);
  NoProbeSolution sol;
  sol.grid = SingleGrid{cfg.buffer_capacity, cfg.age_cap, 1};
  auto J = iterate_to_fixed_point(
      sol.grid.num_states(),
      [&](const std::vector<double>& x) { return detail::backup_no_probe(x, cfg, ch, arr, nullptr); },
      cfg.discount, opts, sol.error_trace);
  sol.J = detail::backup_no_probe(J, cfg, ch, arr, &sol.sample_table);
  sol.error_trace.push_back(sup_norm_diff(sol.J, J));
  assert_contraction(sol.error_trace, cfg.discount, rounding_slack(sol.J));
  return sol;
}

// ---------------------------------------------------------------------------
// Threshold structure.

struct SingleThresholdReport {
  SingleGrid grid;
  int min_active_energy = 0;
  // Indexed by E; nullopt below min_active_energy or when probing is never optimal.
  std::vector<std::optional<int>> t_threshold;
  // Whether the probe set {T : probe(E, T)} is upward-closed in T.
  std::vector<char> t_upward_closed;
  // Indexed by grid.state(E, T); nullopt when sampling is never optimal.
  std::vector<std::optional<double>> p_threshold;
  std::vector<StructureFinding> conjecture_violations;

  std::optional<int> t_th(int e) const { return t_threshold[e]; }
  std::optional<double> p_th(int e, int t) const { return p_threshold[grid.state(e, t)]; }
  bool truncation_affected(int t) const { return t > truncation_band_limit(grid.age_cap); }
};

namespace detail {

// Cells where the sample set is not upward-closed in p(C).
template <class SampleFn>
void check_upward_closed_in_p(const std::vector<double>& p, SampleFn&& sampled, const std::string& where,
                              std::vector<StructureFinding>& out) {
  for (std::size_t j = 0; j < p.size(); ++j)
    for (std::size_t k = 0; k < p.size(); ++k)
      if (p[j] > p[k] && sampled(k) && !sampled(j)) {
        out.push_back({"sample set upward-closed in p(C)",
                       where + " C" + std::to_string(k + 1) + " sampled but C" + std::to_string(j + 1) + " not"});
        return;
      }
}

}  // namespace detail

// Theorem-backed violations: sampling not upward-closed in p(C).
inline std::vector<StructureFinding> sampling_structure_violations(const Policy1& pol, const SystemConfig& cfg,
                                                                   const IidChannel& ch) {
  std::vector<StructureFinding> out;
  for (int e = cfg.min_active_energy(); e <= pol.grid.capacity; ++e)
    for (int t = 1; t <= pol.grid.age_cap; ++t) {
      std::ostringstream where;
      where << "(E=" << e << ",T=" << t << ")";
      detail::check_upward_closed_in_p(ch.success_probs(), [&](std::size_t c) { return pol.sample(e, t, c); },
                                       where.str(), out);
    }
  return out;
}

// Extracts T_th(E) and p_th(E, T). Throws StructureViolation if the sample
// set is not upward-closed in p(C); a probe set that is not upward-closed in T
// is only recorded.
inline SingleThresholdReport extract_thresholds(const SingleSolution& sol, const SystemConfig& cfg,
                                                const IidChannel& ch) {
  const Policy1& pol = sol.policy;
  if (auto bad = sampling_structure_violations(pol, cfg, ch); !bad.empty())
    throw StructureViolation(bad.front().property + " at " + bad.front().cell);

  SingleThresholdReport r;
  r.grid = pol.grid;
  r.min_active_energy = cfg.min_active_energy();
  r.t_threshold.assign(pol.grid.capacity + 1, std::nullopt);
  r.t_upward_closed.assign(pol.grid.capacity + 1, 1);
  r.p_threshold.assign(pol.grid.num_states(), std::nullopt);
  for (int e = r.min_active_energy; e <= pol.grid.capacity; ++e) {
    for (int t = 1; t <= pol.grid.age_cap; ++t) {
      if (pol.probe(e, t)) {
        if (!r.t_threshold[e]) r.t_threshold[e] = t;
      } else if (r.t_threshold[e]) {
        r.t_upward_closed[e] = 0;
      }
      std::optional<double> best;
      for (std::size_t c = 0; c < ch.num_states(); ++c)
        if (pol.sample(e, t, c) && (!best || ch.success(c) < *best)) best = ch.success(c);
      r.p_threshold[pol.grid.state(e, t)] = best;
    }
    if (!r.t_upward_closed[e])
      r.conjecture_violations.push_back({"probe set upward-closed in T", "E=" + std::to_string(e)});
  }
  return r;
}

}  // namespace aoi
