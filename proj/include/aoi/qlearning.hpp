#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "aoi/channel.hpp"
#include "aoi/config.hpp"
#include "aoi/energy.hpp"
#include "aoi/error.hpp"
#include "aoi/random.hpp"
#include "aoi/simulator.hpp"
#include "aoi/solver_iid_single.hpp"
#include "aoi/solver_markov.hpp"
#include "aoi/value_iteration.hpp"

namespace aoi {

// d(n) = d0 / (1 + n)^omega. With omega in (0.5, 1] the sum of d diverges and
// the sum of d^2 converges.
struct StepSizeSchedule {
  double d0 = 0.5;
  double omega = 0.6;

  void validate() const {
    if (!(d0 > 0.0) || !std::isfinite(d0)) throw InvalidConfig("step size d0 must be positive");
    if (!(omega > 0.5 && omega <= 1.0)) throw InvalidConfig("step size exponent must lie in (0.5, 1]");
  }
  double operator()(std::uint64_t visits) const { return d0 / std::pow(1.0 + static_cast<double>(visits), omega); }
};

// epsilon(t) = max(floor, epsilon * decay^t). The default is constant.
struct ExplorationSchedule {
  double epsilon = 0.1;
  double floor = 0.01;
  double decay = 1.0;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw InvalidConfig("exploration epsilon must lie in (0, 1]");
    if (!(floor > 0.0 && floor <= epsilon)) throw InvalidConfig("exploration floor must lie in (0, epsilon]");
    if (!(decay > 0.0 && decay <= 1.0)) throw InvalidConfig("exploration decay must lie in (0, 1]");
  }
  double at(std::uint64_t t) const {
    if (decay == 1.0) return epsilon;
    return std::max(floor, epsilon * std::pow(decay, static_cast<double>(t)));
  }
};

struct QLearningOptions {
  StepSizeSchedule step;
  ExplorationSchedule explore;
  bool known_success_probs = true;  // false: p(C) in the sample update is replaced by r(t)
  double initial_q = 0.0;
};

// Two tables: one over (state, b), one over (intermediate state, a); entries
// stored at [index * 2 + action]. probe_live marks states where b = 1 is
// feasible; inter_live marks intermediate states that can be reached.
struct QTables {
  std::vector<double> state_q;
  std::vector<double> inter_q;
  std::vector<std::uint64_t> state_visits;
  std::vector<std::uint64_t> inter_visits;
  std::vector<char> probe_live;
  std::vector<char> inter_live;
  std::uint64_t steps = 0;

  std::size_t num_states() const { return probe_live.size(); }
  std::size_t num_intermediate() const { return inter_live.size(); }

  double q_state(std::size_t s, int b) const { return state_q[s * 2 + b]; }
  double q_inter(std::size_t v, int a) const { return inter_q[v * 2 + a]; }

  // min over feasible b of Q(s, b).
  double min_state(std::size_t s) const {
    const double q0 = state_q[s * 2];
    return probe_live[s] ? std::min(q0, state_q[s * 2 + 1]) : q0;
  }
  double min_inter(std::size_t v) const { return std::min(inter_q[v * 2], inter_q[v * 2 + 1]); }

  // Greedy action with ties to the energy-conserving one.
  int greedy_state(std::size_t s) const {
    return probe_live[s] && strictly_better(state_q[s * 2 + 1], state_q[s * 2]) ? 1 : 0;
  }
  int greedy_inter(std::size_t v) const { return strictly_better(inter_q[v * 2 + 1], inter_q[v * 2]) ? 1 : 0; }

  std::uint64_t state_visit_total(std::size_t s) const { return state_visits[s * 2] + state_visits[s * 2 + 1]; }

  friend bool operator==(const QTables&, const QTables&) = default;
};

inline void to_json(nlohmann::json& j, const QTables& q) {
  j = nlohmann::json{{"state_q", q.state_q},           {"inter_q", q.inter_q},
                     {"state_visits", q.state_visits}, {"inter_visits", q.inter_visits},
                     {"probe_live", q.probe_live},     {"inter_live", q.inter_live},
                     {"steps", q.steps}};
}

inline void from_json(const nlohmann::json& j, QTables& q) {
  j.at("state_q").get_to(q.state_q);
  j.at("inter_q").get_to(q.inter_q);
  j.at("state_visits").get_to(q.state_visits);
  j.at("inter_visits").get_to(q.inter_visits);
  j.at("probe_live").get_to(q.probe_live);
  j.at("inter_live").get_to(q.inter_live);
  j.at("steps").get_to(q.steps);
  const std::size_t s = q.probe_live.size(), v = q.inter_live.size();
  if (q.state_q.size() != 2 * s || q.state_visits.size() != 2 * s || q.inter_q.size() != 2 * v ||
      q.inter_visits.size() != 2 * v)
    throw InvalidConfig("QTables: inconsistent table sizes");
}

// epsilon-greedy over {0, 1}; action 1 is offered only when feasible. With a
// single feasible action no randomness is consumed.
inline int epsilon_greedy(double q0, double q1, bool second_feasible, double eps, Rng& rng) {
  if (!second_feasible) return 0;
  if (uniform01(rng) < eps) return static_cast<int>(uniform_index(rng, 2));
  return strictly_better(q1, q0) ? 1 : 0;
}

inline int select_state_action(const QTables& q, std::size_t s, double eps, Rng& rng) {
  return epsilon_greedy(q.state_q[s * 2], q.state_q[s * 2 + 1], q.probe_live[s] != 0, eps, rng);
}

inline int select_inter_action(const QTables& q, std::size_t v, double eps, Rng& rng) {
  if (!q.inter_live[v]) throw InfeasibleAction("intermediate state is unreachable");
  return epsilon_greedy(q.inter_q[v * 2], q.inter_q[v * 2 + 1], true, eps, rng);
}

// Step sizes applied by one record.
struct UpdateStats {
  int updates = 0;
  double step_sum = 0.0;
};

// Update targets implied by one record, all evaluated at the current Q. A
// probing slot yields two: Q(s, 1) and Q(v, a).
struct QTarget {
  bool inter = false;  // false: state table
  std::size_t cell = 0;  // index * 2 + action
  double target = 0.0;
};

struct QTargets {
  std::array<QTarget, 2> items{};
  int count = 0;
  void push(bool inter, std::size_t cell, double target) { items[count++] = {inter, cell, target}; }
};

// Q <- Q + d(nu) (target - Q) for every target; nu is the visit count before
// the update.
inline UpdateStats apply_targets(QTables& q, const QTargets& targets, const StepSizeSchedule& step) {
  UpdateStats st;
  for (int i = 0; i < targets.count; ++i) {
    const auto& t = targets.items[i];
    auto& table = t.inter ? q.inter_q : q.state_q;
    auto& nu = t.inter ? q.inter_visits : q.state_visits;
    const double d = step(nu[t.cell]);
    table[t.cell] += d * (t.target - table[t.cell]);
    ++nu[t.cell];
    ++st.updates;
    st.step_sum += d;
  }
  ++q.steps;
  return st;
}

namespace detail {

inline void check_record(bool ok, const std::string& why) {
  if (!ok) throw MismatchedRecord(why);
}

inline QTables make_tables(std::size_t states, std::size_t inters, double init) {
  QTables q;
  q.state_q.assign(states * 2, init);
  q.inter_q.assign(inters * 2, init);
  q.state_visits.assign(states * 2, 0);
  q.inter_visits.assign(inters * 2, 0);
  q.probe_live.assign(states, 0);
  q.inter_live.assign(inters, 0);
  return q;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// i.i.d. channel, single process.

struct IidQModel {
  SystemConfig cfg;
  SingleGrid grid;
  std::vector<double> success;
  bool known_success_probs = true;
  StepSizeSchedule step;

  IidQModel(const SystemConfig& c, const IidChannel& ch, const QLearningOptions& opts)
      : cfg(validate(c)), grid{c.buffer_capacity, c.age_cap, ch.num_states()},
        known_success_probs(opts.known_success_probs), step(opts.step) {
    if (cfg.num_processes != 1) throw InvalidConfig("Q-learning supports a single process");
    opts.step.validate();
    opts.explore.validate();
    for (std::size_t c2 = 0; c2 < ch.num_states(); ++c2) success.push_back(ch.success(c2));
  }

  QTables make_tables(double init = 0.0) const {
    QTables q = detail::make_tables(grid.num_states(), grid.num_intermediate(), init);
    for (int e = cfg.min_active_energy(); e <= grid.capacity; ++e)
      for (int t = 1; t <= grid.age_cap; ++t) {
        q.probe_live[grid.state(e, t)] = 1;
        for (std::size_t c = 0; c < grid.channels; ++c) q.inter_live[grid.inter(e, t, c)] = 1;
      }
    return q;
  }
};

// One slot as seen by the learner.
struct IidRecord {
  int energy = 0;
  int age = 1;
  bool probed = false;
  std::optional<std::size_t> channel;  // 0-based
  bool sampled = false;
  std::optional<bool> success;
  int arrivals = 0;
  int next_energy = 0;
  int next_age = 1;

  static IidRecord from(const SlotOutcome<AgeState>& o) {
    return {o.before.energy, o.before.ages.at(0), o.probed, o.channel, o.sampled != 0, o.success,
            o.arrivals,      o.next.energy,       o.next.ages.at(0)};
  }
};

// Targets of the update matching the record's (state kind, action). On a
// probe the state-level b = 1 target uses the channel observed in this slot.
inline QTargets q_targets_iid(const QTables& q, const IidQModel& m, const IidRecord& r) {
  const auto& cfg = m.cfg;
  const auto& g = m.grid;
  using detail::check_record;
  check_record(r.energy >= 0 && r.energy <= g.capacity && r.age >= 1 && r.age <= g.age_cap, "state off the grid");
  check_record(r.probed == r.channel.has_value(), "channel observation must accompany a probe");
  check_record(r.sampled == r.success.has_value(), "ACK/NACK must accompany a sample");
  check_record(!r.sampled || r.probed, "sampling without probing is not an MDP action");
  check_record(!r.probed || r.energy >= cfg.min_active_energy(), "probe infeasible at E=" + std::to_string(r.energy));
  check_record(!r.channel || *r.channel < g.channels, "channel index out of range");
  check_record(r.arrivals >= 0, "negative arrivals");
  const int spent = (r.probed ? cfg.probe_cost : 0) + (r.sampled ? cfg.sample_cost : 0);
  const bool delivered = r.success.value_or(false);
  const int e_next = buffer_add(r.energy - spent, r.arrivals, g.capacity);
  const int t_next = delivered ? 1 : cfg.next_age(r.age);
  check_record(r.next_energy == e_next && r.next_age == t_next, "next state inconsistent with observations");

  QTargets out;
  const double a = cfg.discount;
  const std::size_t s = g.state(r.energy, r.age);
  const double t = r.age;
  if (!r.probed) {
    out.push(false, s * 2, t + a * q.min_state(g.state(e_next, t_next)));
    return out;
  }
  const std::size_t v = g.inter(r.energy, r.age, *r.channel);
  out.push(false, s * 2 + 1, q.min_inter(v));
  double target;
  if (!r.sampled) {
    target = t + a * q.min_state(g.state(e_next, t_next));
  } else if (m.known_success_probs) {
    const double p = m.success[*r.channel];
    const int tn = cfg.next_age(r.age);
    target = t * (1.0 - p) + a * p * q.min_state(g.state(e_next, 1)) + a * (1.0 - p) * q.min_state(g.state(e_next, tn));
  } else {
    target = (delivered ? 0.0 : t) + a * q.min_state(g.state(e_next, t_next));
  }
  out.push(true, v * 2 + (r.sampled ? 1 : 0), target);
  return out;
}

inline UpdateStats q_update_iid(QTables& q, const IidQModel& m, const IidRecord& r) {
  return apply_targets(q, q_targets_iid(q, m, r), m.step);
}

// Q* from a converged J: Q(s,0) = T + a E_A J(min(E+A,B), T+1);
// Q(v,0), Q(v,1) from the intermediate-state equations; Q(s,1) = sum_j q_j min_a Q(v_j, a).
inline QTables optimal_q_iid(const std::vector<double>& J, const IidQModel& m, const IidChannel& ch,
                             const ArrivalDistribution& arr) {
  const auto& cfg = m.cfg;
  const auto& g = m.grid;
  QTables q = m.make_tables();
  const double a = cfg.discount;
  for (int e = 0; e <= g.capacity; ++e)
    for (int t = 1; t <= g.age_cap; ++t) {
      const int tn = cfg.next_age(t);
      const std::size_t s = g.state(e, t);
      q.state_q[s * 2] = t + a * detail::expected_over_arrivals(J, g, arr, e, tn);
      if (!q.probe_live[s]) continue;
      const int spent = e - cfg.probe_cost - cfg.sample_cost;
      const double idle = t + a * detail::expected_over_arrivals(J, g, arr, e - cfg.probe_cost, tn);
      const double fresh = detail::expected_over_arrivals(J, g, arr, spent, 1);
      const double stale = detail::expected_over_arrivals(J, g, arr, spent, tn);
      double v1 = 0.0;
      for (std::size_t c = 0; c < g.channels; ++c) {
        const double p = ch.success(c);
        const std::size_t v = g.inter(e, t, c);
        q.inter_q[v * 2] = idle;
        q.inter_q[v * 2 + 1] = t * (1.0 - p) + a * p * fresh + a * (1.0 - p) * stale;
        v1 += ch.occurrence(c) * q.min_inter(v);
      }
      q.state_q[s * 2 + 1] = v1;
    }
  return q;
}

// Greedy two-stage policy read off Q tables.
struct GreedyQIidPolicy {
  const QTables* q;
  SingleGrid grid;
  bool probe(const AgeState& s) const { return q->greedy_state(grid.state(s.energy, s.ages[0])) == 1; }
  int sample(const AgeState& s, std::optional<std::size_t> c) const {
    return c ? q->greedy_inter(grid.inter(s.energy, s.ages[0], *c)) : 0;
  }
};

// Learning agent for IidEnv: epsilon-greedy behavior plus q_update_iid.
class IidQLearner {
 public:
  IidQLearner(const SystemConfig& cfg, const IidChannel& ch, const QLearningOptions& opts = {})
      : model_(cfg, ch, opts), opts_(opts), q_(model_.make_tables(opts.initial_q)) {}

  struct Behavior {
    IidQLearner* self;
    Rng* rng;
    double eps;
    bool probe(const AgeState& s) {
      return select_state_action(self->q_, self->model_.grid.state(s.energy, s.ages[0]), eps, *rng) == 1;
    }
    int sample(const AgeState& s, std::optional<std::size_t> c) {
      if (!c) return 0;
      return select_inter_action(self->q_, self->model_.grid.inter(s.energy, s.ages[0], *c), eps, *rng);
    }
  };

  Behavior behavior(Rng& rng, double eps) { return {this, &rng, eps}; }
  UpdateStats update(const SlotOutcome<AgeState>& o) { return q_update_iid(q_, model_, IidRecord::from(o)); }
  GreedyQIidPolicy greedy() const { return {&q_, model_.grid}; }

  const QTables& tables() const { return q_; }
  QTables& tables() { return q_; }
  const IidQModel& model() const { return model_; }
  const QLearningOptions& options() const { return opts_; }

 private:
  IidQModel model_;
  QLearningOptions opts_;
  QTables q_;
};

// ---------------------------------------------------------------------------
// Markovian channel and harvesting, single process.

struct MarkovQModel {
  SystemConfig cfg;
  MarkovGrid grid;
  std::vector<double> success;
  bool known_success_probs = true;
  StepSizeSchedule step;

  MarkovQModel(const SystemConfig& c, const MarkovChannel& ch, const QLearningOptions& opts)
      : cfg(validate(c)), grid{c.buffer_capacity, c.age_cap, ch.num_states()},
        known_success_probs(opts.known_success_probs), step(opts.step) {
    if (cfg.num_processes != 1) throw InvalidConfig("Q-learning supports a single process");
    opts.step.validate();
    opts.explore.validate();
    for (std::size_t c2 = 0; c2 < ch.num_states(); ++c2) success.push_back(ch.success(c2));
  }

  std::size_t state(const MarkovAgentState& s) const {
    return grid.state(s.energy, s.age, s.since_probe, s.prev_channel, s.harvest);
  }

  QTables make_tables(double init = 0.0) const {
    QTables q = detail::make_tables(grid.num_states(), grid.num_intermediate(), init);
    for (int e = cfg.min_active_energy(); e <= grid.capacity; ++e)
      for (int t = 1; t <= grid.age_cap; ++t)
        for (std::size_t c = 0; c < grid.channels; ++c)
          for (Harvest h : kHarvestStates) {
            q.inter_live[grid.inter(e, t, c, h)] = 1;
            for (int tau = 1; tau <= t; ++tau) q.probe_live[grid.state(e, t, tau, c, h)] = 1;
          }
    return q;
  }
};

struct MarkovRecord {
  MarkovAgentState state;
  bool probed = false;
  std::optional<std::size_t> channel;
  bool sampled = false;
  std::optional<bool> success;
  int arrivals = 0;
  Harvest next_harvest = Harvest::kHarvesting;
  MarkovAgentState next;

  static MarkovRecord from(const SlotOutcome<MarkovAgentState>& o) {
    return {o.before,   o.probed, o.channel, o.sampled != 0, o.success,
            o.arrivals, o.next_harvest.value_or(o.next.harvest), o.next};
  }
};

// As q_targets_iid. In H_2 the arrival entering the target is taken as 0.
inline QTargets q_targets_markov(const QTables& q, const MarkovQModel& m, const MarkovRecord& r) {
  const auto& cfg = m.cfg;
  const auto& g = m.grid;
  const auto& s0 = r.state;
  using detail::check_record;
  check_record(s0.energy >= 0 && s0.energy <= g.capacity && s0.age >= 1 && s0.age <= g.age_cap &&
                   s0.since_probe >= 1 && s0.since_probe <= s0.age && s0.prev_channel < g.channels,
               "state off the grid");
  check_record(r.probed == r.channel.has_value(), "channel observation must accompany a probe");
  check_record(r.sampled == r.success.has_value(), "ACK/NACK must accompany a sample");
  check_record(!r.sampled || r.probed, "sampling without probing is not an MDP action");
  check_record(!r.probed || s0.energy >= cfg.min_active_energy(), "probe infeasible at E=" + std::to_string(s0.energy));
  check_record(!r.channel || *r.channel < g.channels, "channel index out of range");
  check_record(r.arrivals >= 0, "negative arrivals");
  const int arrivals = s0.harvest == Harvest::kIdle ? 0 : r.arrivals;
  const int spent = (r.probed ? cfg.probe_cost : 0) + (r.sampled ? cfg.sample_cost : 0);
  const bool delivered = r.success.value_or(false);
  MarkovAgentState expect;
  expect.energy = buffer_add(s0.energy - spent, arrivals, g.capacity);
  expect.age = delivered ? 1 : cfg.next_age(s0.age);
  expect.since_probe = r.probed ? 1 : cfg.next_age(s0.since_probe);
  expect.prev_channel = r.probed ? *r.channel : s0.prev_channel;
  expect.harvest = r.next_harvest;
  check_record(r.next == expect, "next state inconsistent with observations");

  QTargets out;
  const double a = cfg.discount;
  const std::size_t s = m.state(s0);
  const double t = s0.age;
  if (!r.probed) {
    out.push(false, s * 2, t + a * q.min_state(m.state(expect)));
    return out;
  }
  const std::size_t c = *r.channel;
  const std::size_t v = g.inter(s0.energy, s0.age, c, s0.harvest);
  out.push(false, s * 2 + 1, q.min_inter(v));
  double target;
  if (!r.sampled) {
    target = t + a * q.min_state(m.state(expect));
  } else if (m.known_success_probs) {
    const double p = m.success[c];
    const int tn = cfg.next_age(s0.age);
    const double fresh = q.min_state(g.state(expect.energy, 1, 1, c, expect.harvest));
    const double stale = q.min_state(g.state(expect.energy, tn, 1, c, expect.harvest));
    target = t * (1.0 - p) + a * p * fresh + a * (1.0 - p) * stale;
  } else {
    target = (delivered ? 0.0 : t) + a * q.min_state(m.state(expect));
  }
  out.push(true, v * 2 + (r.sampled ? 1 : 0), target);
  return out;
}

inline UpdateStats q_update_markov(QTables& q, const MarkovQModel& m, const MarkovRecord& r) {
  return apply_targets(q, q_targets_markov(q, m, r), m.step);
}

inline QTables optimal_q_markov(const std::vector<double>& J, const MarkovQModel& m, const MarkovChannel& ch,
                                const MarkovEnergy& en) {
  const auto& cfg = m.cfg;
  const auto& g = m.grid;
  const TauStepTable powers(ch, g.max_tau());
  QTables q = m.make_tables();
  const double a = cfg.discount;
  const int active = cfg.min_active_energy();
  for (int e = active; e <= g.capacity; ++e)
    for (int t = 1; t <= g.age_cap; ++t) {
      const int tn = cfg.next_age(t);
      const int spent = e - cfg.probe_cost - cfg.sample_cost;
      for (std::size_t c = 0; c < g.channels; ++c)
        for (Harvest h : kHarvestStates) {
          const double p = ch.success(c);
          const std::size_t v = g.inter(e, t, c, h);
          q.inter_q[v * 2] = t + a * detail::expected_markov(J, g, en, h, e - cfg.probe_cost, tn, 1, c);
          q.inter_q[v * 2 + 1] = t * (1.0 - p) + a * p * detail::expected_markov(J, g, en, h, spent, 1, 1, c) +
                                 a * (1.0 - p) * detail::expected_markov(J, g, en, h, spent, tn, 1, c);
        }
    }
  for (int e = 0; e <= g.capacity; ++e)
    for (int t = 1; t <= g.age_cap; ++t)
      for (int tau = 1; tau <= t; ++tau)
        for (std::size_t cp = 0; cp < g.channels; ++cp)
          for (Harvest h : kHarvestStates) {
            const std::size_t s = g.state(e, t, tau, cp, h);
            q.state_q[s * 2] =
                t + a * detail::expected_markov(J, g, en, h, e, cfg.next_age(t), cfg.next_age(tau), cp);
            if (!q.probe_live[s]) continue;
            auto w = powers.row(tau, cp);
            double v1 = 0.0;
            for (std::size_t c = 0; c < g.channels; ++c) v1 += w[c] * q.min_inter(g.inter(e, t, c, h));
            q.state_q[s * 2 + 1] = v1;
          }
  return q;
}

struct GreedyQMarkovPolicy {
  const QTables* q;
  const MarkovQModel* model;
  bool probe(const MarkovAgentState& s) const { return q->greedy_state(model->state(s)) == 1; }
  int sample(const MarkovAgentState& s, std::optional<std::size_t> c) const {
    return c ? q->greedy_inter(model->grid.inter(s.energy, s.age, *c, s.harvest)) : 0;
  }
};

class MarkovQLearner {
 public:
  MarkovQLearner(const SystemConfig& cfg, const MarkovChannel& ch, const QLearningOptions& opts = {})
      : model_(cfg, ch, opts), opts_(opts), q_(model_.make_tables(opts.initial_q)) {}

  struct Behavior {
    MarkovQLearner* self;
    Rng* rng;
    double eps;
    bool probe(const MarkovAgentState& s) { return select_state_action(self->q_, self->model_.state(s), eps, *rng) == 1; }
    int sample(const MarkovAgentState& s, std::optional<std::size_t> c) {
      if (!c) return 0;
      return select_inter_action(self->q_, self->model_.grid.inter(s.energy, s.age, *c, s.harvest), eps, *rng);
    }
  };

  Behavior behavior(Rng& rng, double eps) { return {this, &rng, eps}; }
  UpdateStats update(const SlotOutcome<MarkovAgentState>& o) { return q_update_markov(q_, model_, MarkovRecord::from(o)); }
  GreedyQMarkovPolicy greedy() const { return {&q_, &model_}; }

  const QTables& tables() const { return q_; }
  QTables& tables() { return q_; }
  const MarkovQModel& model() const { return model_; }
  const QLearningOptions& options() const { return opts_; }

 private:
  MarkovQModel model_;
  QLearningOptions opts_;
  QTables q_;
};

// ---------------------------------------------------------------------------
// Online learning loop.

struct LearningOptions {
  long horizon = 500'000;
  long window = 10'000;
  long report_every = 1'000;
};

struct LearningPoint {
  long step;
  double windowed_aoi;  // behavior policy, trailing window
  double epsilon;
  double mean_step_size;  // over updates since the previous point
};

inline void write_learning_curve_csv(std::ostream& os, const std::vector<LearningPoint>& curve) {
  os << "step,windowed_aoi,epsilon,mean_step_size\n";
  for (const auto& p : curve) os << p.step << ',' << p.windowed_aoi << ',' << p.epsilon << ',' << p.mean_step_size << '\n';
}

// Runs `learner` in `env` for opts.horizon slots; exploration draws come from
// `rng`, separate from the environment's stream.
template <class Learner, class Env>
std::vector<LearningPoint> run_learning(Learner& learner, Env& env, const LearningOptions& opts, Rng& rng) {
  if (opts.horizon < 1) throw std::invalid_argument("run_learning: horizon must be >= 1");
  if (opts.window < 1 || opts.report_every < 1) throw std::invalid_argument("run_learning: window and report period must be >= 1");
  const auto& explore = learner.options().explore;
  std::vector<LearningPoint> curve;
  std::deque<double> window;
  double window_sum = 0.0, step_sum = 0.0;
  long step_count = 0;
  for (long t = 0; t < opts.horizon; ++t) {
    const double eps = explore.at(static_cast<std::uint64_t>(t));
    auto behavior = learner.behavior(rng, eps);
    const auto outcome = env.step(behavior);
    const UpdateStats st = learner.update(outcome);
    step_sum += st.step_sum;
    step_count += st.updates;
    window.push_back(outcome.cost);
    window_sum += outcome.cost;
    if (static_cast<long>(window.size()) > opts.window) {
      window_sum -= window.front();
      window.pop_front();
    }
    if ((t + 1) % opts.report_every == 0 || t + 1 == opts.horizon) {
      curve.push_back({t + 1, window_sum / static_cast<double>(window.size()), eps,
                       step_count ? step_sum / static_cast<double>(step_count) : 0.0});
      step_sum = 0.0;
      step_count = 0;
    }
  }
  return curve;
}

}  // namespace aoi
