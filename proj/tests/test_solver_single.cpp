#include <gtest/gtest.h>

#include <cmath>

#include "aoi/solver_iid_single.hpp"
#include "oracles.hpp"

using namespace aoi;

namespace {

IidChannel five_state() { return IidChannel({0.9, 0.7, 0.5, 0.3, 0.1}, {0.2, 0.2, 0.2, 0.2, 0.2}); }

SystemConfig small_cfg(int b = 6, int tmax = 12) {
  SystemConfig c;
  c.buffer_capacity = b;
  c.age_cap = tmax;
  return c;
}

}  // namespace

TEST(BellmanBackup, FirstIterateFromZero) {
  SystemConfig cfg;
  const auto ch = five_state();
  const auto arr = ArrivalDistribution::bernoulli(0.5);
  const auto t1 = bellman_backup(std::vector<double>(13 * 50, 0.0), cfg, ch, arr);
  for (int t = 1; t <= 50; ++t) {
    double expect = 0.0;
    for (double p : ch.success_probs()) expect += 0.2 * std::min<double>(t, t * (1.0 - p));
    expect = std::min<double>(t, expect);
    for (int e = 2; e <= 12; ++e) EXPECT_NEAR(t1.j(e, t), expect, 1e-12);
    EXPECT_DOUBLE_EQ(t1.j(0, t), t);
    EXPECT_DOUBLE_EQ(t1.j(1, t), t);
  }
  EXPECT_NEAR(t1.j(2, 4), 2.0, 1e-12);
}

TEST(ValueIteration, ContractsAndMeetsIterationBound) {
  const auto cfg = small_cfg();
  const auto sol = value_iteration(cfg, five_state(), ArrivalDistribution::bernoulli(0.5));
  const auto& e = sol.error_trace;
  ASSERT_GE(e.size(), 3u);
  EXPECT_EQ(first_contraction_violation(e, cfg.discount), -1);
  const double bound = std::ceil(std::log(1e-8 / e[0]) / std::log(cfg.discount));
  // One extra entry records the final greedy backup.
  EXPECT_LE(static_cast<double>(e.size() - 1), bound + 1);
}

TEST(ValueIteration, MatchesBruteForceEnumeration) {
  oracle::SingleModel tiny;
  SystemConfig cfg;
  cfg.buffer_capacity = tiny.B;
  cfg.age_cap = tiny.Tmax;
  cfg.discount = tiny.alpha;
  const auto sol = value_iteration(cfg, IidChannel(tiny.p, tiny.q), ArrivalDistribution({0, 1}, {0.5, 0.5}));
  const auto best = oracle::brute_force_optimum(tiny);
  for (int e = 0; e <= tiny.B; ++e)
    for (int t = 1; t <= tiny.Tmax; ++t) EXPECT_NEAR(sol.tables.j(e, t), best[tiny.index(e, t)], 1e-6);
}

TEST(ValueIteration, GreedyPolicyValueEqualsJ) {
  oracle::SingleModel tiny;
  tiny.B = 3;
  tiny.Tmax = 5;
  SystemConfig cfg;
  cfg.buffer_capacity = tiny.B;
  cfg.age_cap = tiny.Tmax;
  const auto sol = value_iteration(cfg, IidChannel(tiny.p, tiny.q), ArrivalDistribution({0, 1}, {0.5, 0.5}));
  oracle::TwoStagePolicy pol{std::vector<char>(tiny.states()), std::vector<char>(tiny.states() * 2)};
  for (int e = 0; e <= tiny.B; ++e)
    for (int t = 1; t <= tiny.Tmax; ++t) {
      pol.probe[tiny.index(e, t)] = sol.policy.probe(e, t);
      for (std::size_t c = 0; c < 2; ++c) pol.sample[tiny.index(e, t) * 2 + c] = sol.policy.sample(e, t, c);
    }
  const auto J = oracle::evaluate_discounted(tiny, pol);
  for (int e = 0; e <= tiny.B; ++e)
    for (int t = 1; t <= tiny.Tmax; ++t) EXPECT_NEAR(sol.tables.j(e, t), J(tiny.index(e, t)), 1e-6);
}

TEST(ValueIteration, MonotoneInAgeAndChannelQuality) {
  const auto cfg = small_cfg(8, 20);
  const auto ch = five_state();
  const auto sol = value_iteration(cfg, ch, ArrivalDistribution::bernoulli(0.3));
  for (int e = 0; e <= cfg.buffer_capacity; ++e)
    for (int t = 2; t <= cfg.age_cap; ++t) EXPECT_GE(sol.tables.j(e, t), sol.tables.j(e, t - 1) - 1e-10);
  for (int e = cfg.min_active_energy(); e <= cfg.buffer_capacity; ++e)
    for (int t = 1; t <= cfg.age_cap; ++t)
      for (std::size_t c = 1; c < ch.num_states(); ++c)
        EXPECT_LE(sol.tables.w(e, t, c - 1), sol.tables.w(e, t, c) + 1e-10);
}

TEST(ValueIteration, ForcedIdleBelowActiveEnergy) {
  const auto cfg = small_cfg();
  const auto arr = ArrivalDistribution::bernoulli(0.5);
  const auto sol = value_iteration(cfg, five_state(), arr);
  for (int t = 1; t <= cfg.age_cap; ++t) {
    EXPECT_FALSE(sol.policy.probe(1, t));
    const double fixed = t + cfg.discount * detail::expected_over_arrivals(sol.tables.J, sol.tables.grid, arr, 1,
                                                                         cfg.next_age(t));
    EXPECT_NEAR(sol.tables.j(1, t), fixed, 1e-7);
  }
}

TEST(ValueIteration, SamplingIsThresholdInSuccessProbability) {
  const auto cfg = small_cfg(8, 20);
  const auto ch = IidChannel({0.3, 0.9, 0.1, 0.5}, {0.1, 0.4, 0.3, 0.2});
  const auto sol = value_iteration(cfg, ch, ArrivalDistribution::bernoulli(0.4));
  EXPECT_TRUE(sampling_structure_violations(sol.policy, cfg, ch).empty());
  const auto rep = extract_thresholds(sol, cfg, ch);
  for (int e = cfg.min_active_energy(); e <= cfg.buffer_capacity; ++e)
    for (int t = 1; t <= cfg.age_cap; ++t)
      for (std::size_t c = 0; c < ch.num_states(); ++c)
        EXPECT_EQ(sol.policy.sample(e, t, c), rep.p_th(e, t).has_value() && ch.success(c) >= *rep.p_th(e, t));
}

TEST(ExtractThresholds, RejectsNonThresholdSampling) {
  const auto cfg = small_cfg();
  const auto ch = five_state();
  auto sol = value_iteration(cfg, ch, ArrivalDistribution::bernoulli(0.5));
  // Sample on the worst channel, not on the best one.
  sol.policy.sample_table[sol.policy.grid.inter(cfg.buffer_capacity, 5, 0)] = 0;
  sol.policy.sample_table[sol.policy.grid.inter(cfg.buffer_capacity, 5, 4)] = 1;
  EXPECT_THROW(extract_thresholds(sol, cfg, ch), StructureViolation);
}

TEST(ExtractThresholds, AgeThresholdsOnFig2Instance) {
  SystemConfig cfg;
  const auto ch = five_state();
  const auto sol = value_iteration(cfg, ch, ArrivalDistribution::bernoulli(0.5));
  const auto rep = extract_thresholds(sol, cfg, ch);
  EXPECT_FALSE(rep.t_th(0).has_value());
  EXPECT_FALSE(rep.t_th(1).has_value());
  for (int e = 2; e <= cfg.buffer_capacity; ++e) {
    ASSERT_TRUE(rep.t_th(e).has_value()) << "E=" << e;
    if (e > 2) {
      EXPECT_LE(*rep.t_th(e), *rep.t_th(e - 1));
    }
  }
  EXPECT_TRUE(rep.conjecture_violations.empty());
}

TEST(ValueIteration, FreeProbingIsAllowed) {
  auto cfg = small_cfg();
  cfg.probe_cost = 0;
  const auto ch = five_state();
  const auto arr = ArrivalDistribution::bernoulli(0.5);
  const auto probing = value_iteration(cfg, ch, arr);
  const auto blind = value_iteration_no_probe(cfg, ch, arr);
  for (std::size_t s = 0; s < probing.tables.J.size(); ++s) EXPECT_LE(probing.tables.J[s], blind.J[s] + 1e-9);
}

TEST(ValueIteration, RejectsBadTolerance) {
  IterationOptions opts;
  opts.tol = 0.0;
  EXPECT_THROW(value_iteration(small_cfg(), five_state(), ArrivalDistribution::bernoulli(0.5), opts),
               std::invalid_argument);
  opts.tol = 1e-8;
  opts.max_iters = 3;
  EXPECT_THROW(value_iteration(small_cfg(), five_state(), ArrivalDistribution::bernoulli(0.5), opts), NoConvergence);
}

TEST(Contraction, DetectsViolations) {
  EXPECT_EQ(first_contraction_violation({1.0, 0.9, 0.5}, 0.95), -1);
  EXPECT_EQ(first_contraction_violation({1.0, 0.9, 0.9}, 0.95), 1);
  EXPECT_THROW(assert_contraction({1.0, 2.0}, 0.5), ContractionViolation);
}

TEST(TieRule, PrefersEnergyConservingAction) {
  EXPECT_FALSE(strictly_better(1.0, 1.0));
  EXPECT_FALSE(strictly_better(1.0 - 1e-15, 1.0));
  EXPECT_TRUE(strictly_better(0.9, 1.0));
}

TEST(NoProbe, IdleOnlyBelowSampleCost) {
  auto cfg = small_cfg();
  cfg.sample_cost = 2;
  const auto arr = ArrivalDistribution::bernoulli(0.5);
  const auto sol = value_iteration_no_probe(cfg, five_state(), arr);
  EXPECT_EQ(first_contraction_violation(sol.error_trace, cfg.discount), -1);
  for (int t = 1; t <= cfg.age_cap; ++t)
    for (int e = 0; e < 2; ++e) {
      EXPECT_FALSE(sol.sample(e, t));
      const double fixed =
          t + cfg.discount * detail::expected_over_arrivals(sol.J, sol.grid, arr, e, cfg.next_age(t));
      EXPECT_NEAR(sol.j(e, t), fixed, 1e-7);
    }
}

TEST(NoProbe, DeadChannelNeverSamples) {
  const auto cfg = small_cfg();
  const auto sol = value_iteration_no_probe(cfg, IidChannel({0.0, 0.0}, {0.5, 0.5}), ArrivalDistribution::bernoulli(0.5));
  for (char s : sol.sample_table) EXPECT_EQ(s, 0);
  const auto probing = value_iteration(cfg, IidChannel({0.0, 0.0}, {0.5, 0.5}), ArrivalDistribution::bernoulli(0.5));
  for (char s : probing.policy.probe_table) EXPECT_EQ(s, 0);
}
