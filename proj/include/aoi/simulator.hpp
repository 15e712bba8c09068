#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/container/static_vector.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "aoi/channel.hpp"
#include "aoi/config.hpp"
#include "aoi/energy.hpp"
#include "aoi/error.hpp"
#include "aoi/random.hpp"
#include "aoi/solver_iid_multi.hpp"
#include "aoi/solver_iid_single.hpp"
#include "aoi/solver_markov.hpp"

namespace aoi {

inline constexpr int kMaxSimProcesses = 16;

// Whether the source may learn C(t) by paying E_p before deciding to sample.
// In blind mode there is no probe; a sample costs E_s and is sent over an
// unobserved channel.
enum class ProbeMode { kProbing, kBlind };

// Source state of the i.i.d. system: energy and the N ages.
struct AgeState {
  int energy = 0;
  boost::container::static_vector<int, kMaxSimProcesses> ages;

  friend bool operator==(const AgeState&, const AgeState&) = default;
};

// What the source knows in the Markovian system.
struct MarkovAgentState {
  int energy = 0;
  int age = 1;
  int since_probe = 1;  // tau
  std::size_t prev_channel = 0;
  Harvest harvest = Harvest::kHarvesting;

  friend bool operator==(const MarkovAgentState&, const MarkovAgentState&) = default;
};

// Result of one slot. `channel` is set iff the slot probed, `success` iff a
// sample was sent, `next_harvest` iff harvesting is Markovian.
template <class State>
struct SlotOutcome {
  State before;
  double cost = 0.0;
  bool probed = false;
  int sampled = 0;  // 0 idle, otherwise 1-based process index
  std::optional<std::size_t> channel;
  std::optional<bool> success;
  int arrivals = 0;
  std::optional<Harvest> next_harvest;
  State next;
};

// Two-stage decision contract: probe(s) first; when probing or in blind mode
// the environment then asks sample(s, channel), with channel == nullopt in
// blind mode. sample returns 0 (idle) or the 1-based process to sample.
template <class P, class State>
concept TwoStagePolicy = requires(P& p, const State& s, std::optional<std::size_t> c) {
  { p.probe(s) } -> std::convertible_to<bool>;
  { p.sample(s, c) } -> std::convertible_to<int>;
};

namespace detail {

inline void require_feasible(bool ok, const char* what, int energy) {
  if (!ok) throw InfeasibleAction(std::string(what) + " with E=" + std::to_string(energy));
}

}  // namespace detail

// Slot dynamics of the i.i.d. system with N processes. Event order within a
// slot: decide b; probe (pay E_p, observe C); decide a; sample (pay E_s,
// observe r); cost; arrivals; clip at B.
class IidEnv {
 public:
  IidEnv(const SystemConfig& cfg, IidChannel channel, ArrivalDistribution arrivals, ProbeMode mode, Rng rng)
      : cfg_(validate(cfg)), channel_(std::move(channel)), arrivals_(std::move(arrivals)), mode_(mode),
        rng_(std::move(rng)) {
    if (cfg_.num_processes > kMaxSimProcesses) throw InvalidConfig("too many processes for the simulator");
    state_.ages.assign(cfg_.num_processes, 1);
  }

  const AgeState& state() const { return state_; }
  void reset(const AgeState& s) {
    if (s.energy < 0 || s.energy > cfg_.buffer_capacity || static_cast<int>(s.ages.size()) != cfg_.num_processes)
      throw std::invalid_argument("IidEnv::reset: state outside the grid");
    state_ = s;
  }
  long slot() const { return slot_; }
  const SystemConfig& config() const { return cfg_; }
  ProbeMode mode() const { return mode_; }

  template <class P>
    requires TwoStagePolicy<P, AgeState>
  SlotOutcome<AgeState> step(P& policy) {
    SlotOutcome<AgeState> out;
    out.before = state_;
    int energy = state_.energy;
    std::optional<ChannelState> ch;
    int k = 0;
    if (mode_ == ProbeMode::kProbing) {
      if (policy.probe(std::as_const(state_))) {
        detail::require_feasible(energy >= cfg_.probe_cost, "probe", energy);
        energy -= cfg_.probe_cost;
        ch = draw_state(channel_, rng_);
        out.probed = true;
        out.channel = static_cast<std::size_t>(ch->index - 1);
        k = policy.sample(std::as_const(state_), out.channel);
      }
    } else {
      k = policy.sample(std::as_const(state_), std::nullopt);
    }
    if (k < 0 || k > cfg_.num_processes) throw InfeasibleAction("sample index out of range");
    bool delivered = false;
    if (k != 0) {
      detail::require_feasible(energy >= cfg_.sample_cost, "sample", energy);
      energy -= cfg_.sample_cost;
      if (!ch) ch = draw_state(channel_, rng_);
      delivered = sample_success(*ch, rng_);
      out.success = delivered;
      out.sampled = k;
    }
    double cost = 0.0;
    for (int i = 0; i < cfg_.num_processes; ++i) {
      const bool reset = delivered && i == k - 1;
      if (!reset) cost += state_.ages[i];
      state_.ages[i] = reset ? 1 : cfg_.next_age(state_.ages[i]);
    }
    out.cost = cost;
    out.arrivals = draw_arrival(arrivals_, std::nullopt, rng_);
    const int spent = (out.probed ? cfg_.probe_cost : 0) + (k != 0 ? cfg_.sample_cost : 0);
    state_.energy = buffer_add(energy, out.arrivals, cfg_.buffer_capacity);
    if (state_.energy != std::min(out.before.energy - spent + out.arrivals, cfg_.buffer_capacity) ||
        state_.energy < 0)
      throw std::logic_error("IidEnv: energy bookkeeping broken");
    ++slot_;
    out.next = state_;
    return out;
  }

 private:
  SystemConfig cfg_;
  IidChannel channel_;
  ArrivalDistribution arrivals_;
  ProbeMode mode_;
  Rng rng_;
  AgeState state_;
  long slot_ = 0;
};

// Single-process Markovian system: the channel evolves every slot whether or
// not it is probed, and arrivals are gated by the harvest chain. The source
// tracks tau (slots since the last probe) and the last probed channel state.
class MarkovEnv {
 public:
  MarkovEnv(const SystemConfig& cfg, MarkovChannel channel, MarkovEnergy energy, ProbeMode mode, Rng rng)
      : cfg_(validate(cfg)), channel_(std::move(channel)), energy_(std::move(energy)), mode_(mode),
        rng_(std::move(rng)) {
    // tau = 1 means the channel was observed one slot ago in prev_channel.
    true_channel_ = static_cast<std::size_t>(draw_state(channel_, state_.prev_channel, rng_).index - 1);
  }

  const MarkovAgentState& state() const { return state_; }
  std::size_t true_channel() const { return true_channel_; }
  long slot() const { return slot_; }
  const SystemConfig& config() const { return cfg_; }

  template <class P>
    requires TwoStagePolicy<P, MarkovAgentState>
  SlotOutcome<MarkovAgentState> step(P& policy) {
    SlotOutcome<MarkovAgentState> out;
    out.before = state_;
    int energy = state_.energy;
    int k = 0;
    if (mode_ == ProbeMode::kProbing) {
      if (policy.probe(std::as_const(state_))) {
        detail::require_feasible(energy >= cfg_.probe_cost, "probe", energy);
        energy -= cfg_.probe_cost;
        out.probed = true;
        out.channel = true_channel_;
        k = policy.sample(std::as_const(state_), out.channel);
      }
    } else {
      k = policy.sample(std::as_const(state_), std::nullopt);
    }
    if (k < 0 || k > 1) throw InfeasibleAction("sample index out of range");
    bool delivered = false;
    if (k == 1) {
      detail::require_feasible(energy >= cfg_.sample_cost, "sample", energy);
      energy -= cfg_.sample_cost;
      delivered = sample_success(channel_.state(true_channel_), rng_);
      out.success = delivered;
      out.sampled = 1;
    }
    out.cost = delivered ? 0.0 : state_.age;
    out.arrivals = draw_arrival(energy_.arrivals, state_.harvest, rng_);
    state_.energy = buffer_add(energy, out.arrivals, cfg_.buffer_capacity);
    state_.age = delivered ? 1 : cfg_.next_age(state_.age);
    if (out.probed) {
      state_.since_probe = 1;
      state_.prev_channel = true_channel_;
    } else {
      state_.since_probe = cfg_.next_age(state_.since_probe);
    }
    state_.harvest = step_harvest(energy_.chain, state_.harvest, rng_);
    out.next_harvest = state_.harvest;
    true_channel_ = static_cast<std::size_t>(draw_state(channel_, true_channel_, rng_).index - 1);
    if (mode_ == ProbeMode::kProbing && state_.since_probe > state_.age) throw std::logic_error("MarkovEnv: tau exceeds age");
    ++slot_;
    out.next = state_;
    return out;
  }

 private:
  SystemConfig cfg_;
  MarkovChannel channel_;
  MarkovEnergy energy_;
  ProbeMode mode_;
  Rng rng_;
  MarkovAgentState state_;
  std::size_t true_channel_ = 0;
  long slot_ = 0;
};

// ---------------------------------------------------------------------------
// Policies.

struct GreedySinglePolicy {
  const Policy1* policy;
  bool probe(const AgeState& s) const { return policy->probe(s.energy, s.ages[0]); }
  int sample(const AgeState& s, std::optional<std::size_t> c) const {
    return c && policy->sample(s.energy, s.ages[0], *c) ? 1 : 0;
  }
};

struct GreedyMultiPolicy {
  const MultiSolution* solution;
  bool probe(const AgeState& s) const { return solution->probe(s.energy, {s.ages.data(), s.ages.size()}); }
  int sample(const AgeState& s, std::optional<std::size_t> c) const {
    return c ? solution->sample_choice(s.energy, {s.ages.data(), s.ages.size()}, *c) : 0;
  }
};

struct NoProbePolicy {
  const NoProbeSolution* solution;
  bool probe(const AgeState&) const { return false; }
  int sample(const AgeState& s, std::optional<std::size_t>) const {
    return solution->sample(s.energy, s.ages[0]) ? 1 : 0;
  }
};

struct GreedyMarkovPolicy {
  const MarkovSolution* solution;
  bool probe(const MarkovAgentState& s) const {
    return solution->probe(s.energy, s.age, s.since_probe, s.prev_channel, s.harvest);
  }
  int sample(const MarkovAgentState& s, std::optional<std::size_t> c) const {
    return c && solution->sample(s.energy, s.age, *c, s.harvest) ? 1 : 0;
  }
};

namespace detail {
inline int max_age_process(std::span<const int> ages) {
  return static_cast<int>(std::max_element(ages.begin(), ages.end()) - ages.begin()) + 1;
}
inline std::span<const int> ages_of(const AgeState& s) { return {s.ages.data(), s.ages.size()}; }
inline std::span<const int> ages_of(const MarkovAgentState& s) { return {&s.age, 1}; }
}  // namespace detail

// Never probes, never samples.
struct AlwaysIdlePolicy {
  template <class S>
  bool probe(const S&) const { return false; }
  template <class S>
  int sample(const S&, std::optional<std::size_t>) const { return 0; }
};

// Probes and samples the oldest process whenever E >= E_p + E_s.
struct ProbeAndSampleAlwaysPolicy {
  SystemConfig cfg;
  template <class S>
  bool probe(const S& s) const { return s.energy >= cfg.min_active_energy(); }
  template <class S>
  int sample(const S& s, std::optional<std::size_t>) const {
    return s.energy >= cfg.min_active_energy() ? detail::max_age_process(detail::ages_of(s)) : 0;
  }
};

// Uniformly random feasible action at each of the two decision points.
struct UniformRandomPolicy {
  SystemConfig cfg;
  Rng rng;
  template <class S>
  bool probe(const S& s) {
    return s.energy >= cfg.min_active_energy() && uniform_index(rng, 2) == 1;
  }
  template <class S>
  int sample(const S& s, std::optional<std::size_t>) {
    if (s.energy < cfg.min_active_energy()) return 0;
    return static_cast<int>(uniform_index(rng, static_cast<std::size_t>(cfg.num_processes) + 1));
  }
};

// ---------------------------------------------------------------------------
// Policy evaluation by independent replicates.

struct EvalOptions {
  long horizon = 1'000'000;
  int replicates = 10;
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0: hardware concurrency
  long trace_every = 0;  // record every k-th slot of replicate 0; 0 disables
};

struct TraceRow {
  long slot;
  int energy;
  std::vector<int> ages;
  bool probed;
  int sampled;
  int channel;  // 1-based, 0 if not probed
  int success;  // -1 if no sample
  double cost;
};

struct EvalReport {
  std::vector<double> per_seed;  // time-averaged AoI per replicate
  double mean = 0.0;
  double ci_half_width = 0.0;    // 95% Student-t over replicates
  long horizon = 0;
  double outage_fraction = 0.0;  // share of slots with E < E_p + E_s (E < E_s blind)
  std::vector<TraceRow> trace;
};

// Two-sided 95% Student-t half-width of the mean of `xs`.
inline double ci95_half_width(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  if (n < 2) return std::numeric_limits<double>::infinity();
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1));
  boost::math::students_t dist(static_cast<double>(n - 1));
  return boost::math::quantile(boost::math::complement(dist, 0.025)) * sd / std::sqrt(static_cast<double>(n));
}

namespace detail {

template <class S>
TraceRow trace_row(long slot, const SlotOutcome<S>& o) {
  auto ages = ages_of(o.before);
  return {slot,
          o.before.energy,
          std::vector<int>(ages.begin(), ages.end()),
          o.probed,
          o.sampled,
          o.channel ? static_cast<int>(*o.channel) + 1 : 0,
          o.success ? static_cast<int>(*o.success) : -1,
          o.cost};
}

// make_env(rng) -> environment; make_policy(replicate) -> policy.
template <class MakeEnv, class MakePolicy>
EvalReport run_replicates(MakeEnv&& make_env, MakePolicy&& make_policy, int outage_level, const EvalOptions& opts) {
  if (opts.horizon < 1 || opts.replicates < 1) throw std::invalid_argument("evaluate: horizon and replicates must be >= 1");
  EvalReport rep;
  rep.horizon = opts.horizon;
  rep.per_seed.assign(opts.replicates, 0.0);
  std::vector<double> outage(opts.replicates, 0.0);
  auto run_one = [&](int r) {
    auto env = make_env(make_rng(opts.seed, static_cast<std::uint64_t>(r)));
    auto policy = make_policy(r);
    double total = 0.0;
    long short_slots = 0;
    for (long t = 0; t < opts.horizon; ++t) {
      if (env.state().energy < outage_level) ++short_slots;
      auto o = env.step(policy);
      total += o.cost;
      if (r == 0 && opts.trace_every > 0 && t % opts.trace_every == 0) rep.trace.push_back(trace_row(t, o));
    }
    rep.per_seed[r] = total / static_cast<double>(opts.horizon);
    outage[r] = static_cast<double>(short_slots) / static_cast<double>(opts.horizon);
  };
  unsigned threads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(opts.replicates));
  if (threads <= 1) {
    for (int r = 0; r < opts.replicates; ++r) run_one(r);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (int r = static_cast<int>(w); r < opts.replicates; r += static_cast<int>(threads)) run_one(r);
      });
    for (auto& th : pool) th.join();
  }
  rep.mean = std::accumulate(rep.per_seed.begin(), rep.per_seed.end(), 0.0) / opts.replicates;
  rep.ci_half_width = ci95_half_width(rep.per_seed);
  rep.outage_fraction = std::accumulate(outage.begin(), outage.end(), 0.0) / opts.replicates;
  return rep;
}

}  // namespace detail

// Empirical time-averaged AoI (realized costs) of a policy in the i.i.d.
// system. make_policy(replicate) must return a fresh policy per replicate.
template <class MakePolicy>
EvalReport evaluate_policy(MakePolicy&& make_policy, const SystemConfig& cfg, const IidChannel& ch,
                           const ArrivalDistribution& arr, ProbeMode mode, const EvalOptions& opts = {}) {
  const int outage_level = mode == ProbeMode::kProbing ? cfg.min_active_energy() : cfg.sample_cost;
  return detail::run_replicates([&](Rng rng) { return IidEnv(cfg, ch, arr, mode, std::move(rng)); },
                                make_policy, outage_level, opts);
}

template <class MakePolicy>
EvalReport evaluate_policy(MakePolicy&& make_policy, const SystemConfig& cfg, const MarkovChannel& ch,
                           const MarkovEnergy& en, ProbeMode mode, const EvalOptions& opts = {}) {
  const int outage_level = mode == ProbeMode::kProbing ? cfg.min_active_energy() : cfg.sample_cost;
  return detail::run_replicates([&](Rng rng) { return MarkovEnv(cfg, ch, en, mode, std::move(rng)); },
                                make_policy, outage_level, opts);
}

// ---------------------------------------------------------------------------
// Probing versus sampling blind, i.i.d. single process.

struct ProbingPoint {
  double lambda;
  int probe_cost;
  int sample_cost;
};

struct ProbingComparisonRow {
  ProbingPoint point;
  EvalReport probing;
  EvalReport blind;
  double diff_mean = 0.0;  // probing - blind, paired by replicate index
  double diff_ci_half_width = 0.0;
};

inline std::vector<ProbingComparisonRow> compare_probing(const SystemConfig& base, const IidChannel& ch,
                                                         const std::vector<ProbingPoint>& points,
                                                         const EvalOptions& opts, const IterationOptions& it = {}) {
  std::vector<ProbingComparisonRow> rows;
  for (const auto& pt : points) {
    SystemConfig cfg = base;
    cfg.probe_cost = pt.probe_cost;
    cfg.sample_cost = pt.sample_cost;
    validate(cfg);
    const auto arr = ArrivalDistribution::bernoulli(pt.lambda);
    const auto probing = value_iteration(cfg, ch, arr, it);
    const auto blind = value_iteration_no_probe(cfg, ch, arr, it);
    ProbingComparisonRow row{pt, {}, {}};
    row.probing = evaluate_policy([&](int) { return GreedySinglePolicy{&probing.policy}; }, cfg, ch, arr,
                                  ProbeMode::kProbing, opts);
    row.blind = evaluate_policy([&](int) { return NoProbePolicy{&blind}; }, cfg, ch, arr, ProbeMode::kBlind, opts);
    std::vector<double> d(opts.replicates);
    for (int r = 0; r < opts.replicates; ++r) d[r] = row.probing.per_seed[r] - row.blind.per_seed[r];
    row.diff_mean = std::accumulate(d.begin(), d.end(), 0.0) / opts.replicates;
    row.diff_ci_half_width = ci95_half_width(d);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace aoi
