#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
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

enum class AgeLayout {
  kFull,       // every age vector (T_1..T_N) has its own cell
  kSymmetric,  // one cell per multiset of ages, keyed by the sorted vector
};

// Enumerates age vectors in [1, T_max]^N. In the symmetric layout only
// non-increasing vectors are stored and lookups canonicalize by sorting.
class AgeSpace {
 public:
  AgeSpace(int num_processes, int age_cap, AgeLayout layout)
      : n_(num_processes), cap_(age_cap), layout_(layout) {
    if (layout_ == AgeLayout::kFull) {
      std::size_t count = 1;
      for (int i = 0; i < n_; ++i) count *= static_cast<std::size_t>(cap_);
      decoded_.reserve(count * n_);
      std::vector<int> ages(n_, 1);
      for (std::size_t idx = 0; idx < count; ++idx) {
        decoded_.insert(decoded_.end(), ages.begin(), ages.end());
        for (int i = n_ - 1; i >= 0; --i) {  // last coordinate varies fastest
          if (++ages[i] <= cap_) break;
          ages[i] = 1;
        }
      }
      size_ = count;
    } else {
      const int top = cap_ + n_;
      binom_.assign(static_cast<std::size_t>(top + 1) * (n_ + 1), 0);
      for (int a = 0; a <= top; ++a) {
        binom(a, 0) = 1;
        for (int b = 1; b <= std::min(a, n_); ++b) binom(a, b) = binom(a - 1, b - 1) + (b <= a - 1 ? binom(a - 1, b) : 0);
      }
      size_ = static_cast<std::size_t>(binom(cap_ + n_ - 1, n_));
      decoded_.assign(size_ * n_, 0);
      std::vector<int> ages(n_, 1);
      enumerate_sorted(ages, 0, cap_);
    }
  }

  int num_processes() const { return n_; }
  int age_cap() const { return cap_; }
  AgeLayout layout() const { return layout_; }
  std::size_t size() const { return size_; }

  std::span<const int> ages(std::size_t idx) const { return {decoded_.data() + idx * n_, static_cast<std::size_t>(n_)}; }

  std::size_t index(std::span<const int> ages) const {
    if (layout_ == AgeLayout::kFull) {
      std::size_t idx = 0;
      for (int a : ages) idx = idx * cap_ + (a - 1);
      return idx;
    }
    int sorted[kMaxProcesses];
    std::copy(ages.begin(), ages.end(), sorted);
    std::sort(sorted, sorted + n_, std::greater<>());
    return rank_sorted(sorted);
  }

  static constexpr int kMaxProcesses = 16;

 private:
  std::int64_t& binom(int a, int b) { return binom_[static_cast<std::size_t>(a) * (n_ + 1) + b]; }
  std::int64_t binom(int a, int b) const { return binom_[static_cast<std::size_t>(a) * (n_ + 1) + b]; }

  // Combinatorial rank of a non-increasing vector.
  std::size_t rank_sorted(const int* desc) const {
    std::int64_t r = 0;
    for (int i = 0; i < n_; ++i) {
      const int asc = desc[n_ - 1 - i] - 1;
      r += binom(asc + i, i + 1);
    }
    return static_cast<std::size_t>(r);
  }

  void enumerate_sorted(std::vector<int>& ages, int pos, int upper) {
    if (pos == n_) {
      const std::size_t r = rank_sorted(ages.data());
      std::copy(ages.begin(), ages.end(), decoded_.begin() + static_cast<std::ptrdiff_t>(r * n_));
      return;
    }
    for (int a = 1; a <= upper; ++a) {
      ages[pos] = a;
      enumerate_sorted(ages, pos + 1, a);
    }
  }

  int n_;
  int cap_;
  AgeLayout layout_;
  std::size_t size_ = 0;
  std::vector<int> decoded_;
  std::vector<std::int64_t> binom_;
};

struct MultiOptions {
  IterationOptions iteration;
  AgeLayout layout = AgeLayout::kFull;
  std::size_t cell_budget = 50'000'000;  // maximum number of states (E, T_1..T_N)
};

// Converged tables and greedy policy for N processes sharing one channel.
class MultiSolution {
 public:
  MultiSolution(SystemConfig cfg, std::size_t channels, AgeSpace space)
      : cfg_(cfg), channels_(channels), space_(std::move(space)) {}

  const SystemConfig& config() const { return cfg_; }
  const AgeSpace& ages() const { return space_; }
  std::size_t channels() const { return channels_; }
  std::size_t num_states() const { return static_cast<std::size_t>(cfg_.buffer_capacity + 1) * space_.size(); }

  std::size_t state(int e, std::size_t age_idx) const { return static_cast<std::size_t>(e) * space_.size() + age_idx; }
  std::size_t inter(int e, std::size_t age_idx, std::size_t c) const { return state(e, age_idx) * channels_ + c; }

  double j(int e, std::span<const int> ages) const { return J[state(e, space_.index(ages))]; }
  double v(int e, std::span<const int> ages) const { return V[state(e, space_.index(ages))]; }
  double w(int e, std::span<const int> ages, std::size_t c) const { return W[inter(e, space_.index(ages), c)]; }
  bool probe(int e, std::span<const int> ages) const { return probe_table[state(e, space_.index(ages))] != 0; }

  // 0 for idle, otherwise the 1-based process to sample.
  int sample_choice(int e, std::span<const int> ages, std::size_t c) const {
    const std::size_t idx = space_.index(ages);
    const int stored = choice_table[inter(e, idx, c)];
    if (stored == 0 || space_.layout() == AgeLayout::kFull) return stored;
    // Symmetric layout stores the position in the descending-sorted vector;
    // map it back through a stable sort so equal ages keep index order.
    std::vector<int> order(ages.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ages[a] > ages[b]; });
    return order[stored - 1] + 1;
  }

  std::vector<double> J, W, V;
  std::vector<char> probe_table;
  std::vector<std::int8_t> choice_table;  // per intermediate cell, layout-relative
  std::vector<double> error_trace;

 private:
  SystemConfig cfg_;
  std::size_t channels_;
  AgeSpace space_;
};

namespace detail {

// Successor age indices: all ages advance, or process k resets to 1.
struct AgeTransitions {
  std::vector<std::size_t> advance;  // per age index
  std::vector<std::size_t> reset;    // per age index * N + k
  std::vector<int> total;            // sum of ages
};

inline AgeTransitions build_age_transitions(const AgeSpace& space, const SystemConfig& cfg) {
  const int n = space.num_processes();
  AgeTransitions tr;
  tr.advance.resize(space.size());
  tr.reset.resize(space.size() * n);
  tr.total.resize(space.size());
  std::vector<int> next(n);
  for (std::size_t idx = 0; idx < space.size(); ++idx) {
    auto ages = space.ages(idx);
    tr.total[idx] = std::accumulate(ages.begin(), ages.end(), 0);
    for (int i = 0; i < n; ++i) next[i] = cfg.next_age(ages[i]);
    tr.advance[idx] = space.index(next);
    for (int k = 0; k < n; ++k) {
      const int keep = next[k];
      next[k] = 1;
      tr.reset[idx * n + k] = space.index(next);
      next[k] = keep;
    }
  }
  return tr;
}

inline double expected_multi(const std::vector<double>& J, std::size_t age_count, int capacity,
                             const ArrivalDistribution& arr, int base, std::size_t age_idx) {
  double acc = 0.0;
  const auto& sup = arr.support();
  const auto& pr = arr.probs();
  for (std::size_t i = 0; i < sup.size(); ++i)
    acc += pr[i] * J[static_cast<std::size_t>(buffer_add(base, sup[i], capacity)) * age_count + age_idx];
  return acc;
}

// One backup over all cells. When `sol` is given, its W, V, policy are filled.
inline std::vector<double> backup_multi(const std::vector<double>& J, const SystemConfig& cfg, const IidChannel& ch,
                                        const ArrivalDistribution& arr, const AgeSpace& space,
                                        const AgeTransitions& tr, MultiSolution* sol) {
  const int n = space.num_processes();
  const std::size_t nages = space.size();
  const std::size_t m = ch.num_states();
  const double a = cfg.discount;
  const int active = cfg.min_active_energy();
  const int cap = cfg.buffer_capacity;
  std::vector<double> out(J.size());
  std::vector<double> fresh(n);
  if (sol) {
    sol->W.assign(J.size() * m, 0.0);
    sol->V.assign(J.size(), 0.0);
    sol->probe_table.assign(J.size(), 0);
    sol->choice_table.assign(J.size() * m, 0);
  }
  for (int e = 0; e <= cap; ++e) {
    for (std::size_t idx = 0; idx < nages; ++idx) {
      const std::size_t s = static_cast<std::size_t>(e) * nages + idx;
      const double total = tr.total[idx];
      const std::size_t adv = tr.advance[idx];
      const double no_probe = total + a * expected_multi(J, nages, cap, arr, e, adv);
      if (e < active) {
        out[s] = no_probe;
        if (sol) {
          sol->V[s] = no_probe;
          for (std::size_t c = 0; c < m; ++c) sol->W[s * m + c] = no_probe;
        }
        continue;
      }
      const double idle = total + a * expected_multi(J, nages, cap, arr, e - cfg.probe_cost, adv);
      const int spent = e - cfg.probe_cost - cfg.sample_cost;
      const double stale = expected_multi(J, nages, cap, arr, spent, adv);
      for (int k = 0; k < n; ++k) fresh[k] = expected_multi(J, nages, cap, arr, spent, tr.reset[idx * n + k]);
      auto ages = space.ages(idx);
      double v = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        const double p = ch.success(c);
        int best_k = 0;
        double best = 0.0;
        for (int k = 0; k < n; ++k) {
          const double cost = total - ages[k] * p + a * p * fresh[k] + a * (1.0 - p) * stale;
          if (k == 0 || strictly_better(cost, best)) {
            best = cost;
            best_k = k;
          }
        }
        const bool take = strictly_better(best, idle);
        const double w = take ? best : idle;
        v += ch.occurrence(c) * w;
        if (sol) {
          sol->W[s * m + c] = w;
          sol->choice_table[s * m + c] = static_cast<std::int8_t>(take ? best_k + 1 : 0);
        }
      }
      const bool probe = strictly_better(v, no_probe);
      out[s] = probe ? v : no_probe;
      if (sol) {
        sol->V[s] = v;
        sol->probe_table[s] = probe;
      }
    }
  }
  return out;
}

}  // namespace detail

inline std::size_t multi_grid_cells(const SystemConfig& cfg, AgeLayout layout) {
  double ages = 1.0;
  if (layout == AgeLayout::kFull) {
    for (int i = 0; i < cfg.num_processes; ++i) ages *= cfg.age_cap;
  } else {  // C(T_max + N - 1, N)
    for (int i = 1; i <= cfg.num_processes; ++i) ages = ages * (cfg.age_cap + i - 1) / i;
  }
  const double cells = (cfg.buffer_capacity + 1) * ages;
  return cells > 1e18 ? static_cast<std::size_t>(-1) : static_cast<std::size_t>(cells + 0.5);
}

// One two-stage Bellman backup of a J laid out over `space`.
inline std::vector<double> bellman_backup_multi(const std::vector<double>& J, const SystemConfig& cfg,
                                                const IidChannel& ch, const ArrivalDistribution& arr,
                                                const AgeSpace& space) {
  const auto tr = detail::build_age_transitions(space, cfg);
  return detail::backup_multi(J, cfg, ch, arr, space, tr, nullptr);
}

inline MultiSolution value_iteration_multi(const SystemConfig& cfg_in, const IidChannel& ch,
                                           const ArrivalDistribution& arr, const MultiOptions& opts = {}) {
  const SystemConfig& cfg = validate(cfg_in);
  if (cfg.num_processes > AgeSpace::kMaxProcesses)
    throw StateSpaceTooLarge("num_processes exceeds " + std::to_string(AgeSpace::kMaxProcesses));
  const std::size_t cells = multi_grid_cells(cfg, opts.layout);
  if (cells > opts.cell_budget) {
    std::ostringstream os;
    os << cells << " states exceed the cell budget of " << opts.cell_budget;
    throw StateSpaceTooLarge(os.str());
  }
  AgeSpace space(cfg.num_processes, cfg.age_cap, opts.layout);
  const auto tr = detail::build_age_transitions(space, cfg);
  const std::size_t size = static_cast<std::size_t>(cfg.buffer_capacity + 1) * space.size();
  std::vector<double> trace;
  auto J = iterate_to_fixed_point(
      size, [&](const std::vector<double>& x) { return detail::backup_multi(x, cfg, ch, arr, space, tr, nullptr); },
      cfg.discount, opts.iteration, trace);
  MultiSolution sol(cfg, ch.num_states(), std::move(space));
  sol.J = detail::backup_multi(J, cfg, ch, arr, sol.ages(), tr, &sol);
  trace.push_back(sup_norm_diff(sol.J, J));
  assert_contraction(trace, cfg.discount, rounding_slack(sol.J));
  sol.error_trace = std::move(trace);
  return sol;
}

// ---------------------------------------------------------------------------
// Threshold structure.

// Theorem-backed findings: the sampled process is not an arg-max-age process,
// or the sample set is not upward-closed in p(C).
inline std::vector<StructureFinding> multi_structure_violations(const MultiSolution& sol, const IidChannel& ch) {
  std::vector<StructureFinding> out;
  const auto& cfg = sol.config();
  const auto& space = sol.ages();
  for (int e = cfg.min_active_energy(); e <= cfg.buffer_capacity; ++e)
    for (std::size_t idx = 0; idx < space.size(); ++idx) {
      auto ages = space.ages(idx);
      const int max_age = *std::max_element(ages.begin(), ages.end());
      std::ostringstream where;
      where << "(E=" << e;
      for (int t : ages) where << "," << t;
      where << ")";
      for (std::size_t c = 0; c < ch.num_states(); ++c) {
        const int k = sol.sample_choice(e, ages, c);
        if (k != 0 && ages[k - 1] != max_age)
          out.push_back({"sampled process is arg-max age", where.str() + " C" + std::to_string(c + 1) +
                                                              " samples process " + std::to_string(k)});
      }
      detail::check_upward_closed_in_p(
          ch.success_probs(), [&](std::size_t c) { return sol.sample_choice(e, ages, c) != 0; }, where.str(), out);
    }
  return out;
}

struct MultiThresholdReport {
  int min_active_energy = 0;
  int num_processes = 1;
  int age_cap = 2;
  // p_th(E, T) per (E, age index of the solution's AgeSpace).
  std::vector<std::optional<double>> p_threshold;
  std::size_t age_count = 0;
  // T_th(E, T_-k*): index E * rest_space.size() + rest index; the arg-max
  // process is placed first and its age ranges over [max(rest), T_max].
  std::vector<std::optional<int>> t_threshold;
  std::vector<char> t_upward_closed;
  std::size_t rest_count = 0;
  std::vector<StructureFinding> conjecture_violations;
};

inline MultiThresholdReport extract_thresholds_multi(const MultiSolution& sol, const IidChannel& ch) {
  if (auto bad = multi_structure_violations(sol, ch); !bad.empty())
    throw StructureViolation(bad.front().property + " at " + bad.front().cell);
  const auto& cfg = sol.config();
  const auto& space = sol.ages();
  const int n = cfg.num_processes;
  MultiThresholdReport r;
  r.min_active_energy = cfg.min_active_energy();
  r.num_processes = n;
  r.age_cap = cfg.age_cap;
  r.age_count = space.size();
  r.p_threshold.assign(sol.num_states(), std::nullopt);
  for (int e = r.min_active_energy; e <= cfg.buffer_capacity; ++e)
    for (std::size_t idx = 0; idx < space.size(); ++idx) {
      std::optional<double> best;
      for (std::size_t c = 0; c < ch.num_states(); ++c)
        if (sol.sample_choice(e, space.ages(idx), c) != 0 && (!best || ch.success(c) < *best)) best = ch.success(c);
      r.p_threshold[sol.state(e, idx)] = best;
    }

  if (n >= 2) {
    AgeSpace rest(n - 1, cfg.age_cap, AgeLayout::kFull);
    r.rest_count = rest.size();
    r.t_threshold.assign(static_cast<std::size_t>(cfg.buffer_capacity + 1) * rest.size(), std::nullopt);
    r.t_upward_closed.assign(r.t_threshold.size(), 1);
    std::vector<int> ages(n);
    for (int e = r.min_active_energy; e <= cfg.buffer_capacity; ++e)
      for (std::size_t ri = 0; ri < rest.size(); ++ri) {
        auto others = rest.ages(ri);
        std::copy(others.begin(), others.end(), ages.begin() + 1);
        const int lo = *std::max_element(others.begin(), others.end());
        const std::size_t cell = static_cast<std::size_t>(e) * rest.size() + ri;
        for (int mx = lo; mx <= cfg.age_cap; ++mx) {
          ages[0] = mx;
          if (sol.probe(e, ages)) {
            if (!r.t_threshold[cell]) r.t_threshold[cell] = mx;
          } else if (r.t_threshold[cell]) {
            r.t_upward_closed[cell] = 0;
          }
        }
        if (!r.t_upward_closed[cell]) {
          std::ostringstream where;
          where << "E=" << e;
          for (int t : others) where << "," << t;
          r.conjecture_violations.push_back({"probe set upward-closed in max age", where.str()});
        }
      }
  }
  return r;
}

}  // namespace aoi
