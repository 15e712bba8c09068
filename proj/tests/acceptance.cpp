// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Runs the full-size experiments, so expect minutes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "aoi/aoi.hpp"
#include "oracles.hpp"

using namespace aoi;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [fail] " << what << ";";
    }
  }
  void note(const std::string& what) { detail << " " << what << ";"; }
};

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

// ---------------------------------------------------------------------------

void contraction(Verdict& v) {
  auto check = [&](const std::string& what, const std::vector<double>& trace, double alpha) {
    const long bad = first_contraction_violation(trace, alpha);
    v.require(bad < 0, what + " at iteration " + std::to_string(bad));
    return trace.size();
  };
  std::size_t solves = 0;
  for (const auto& name : {"fig2", "fig5", "fig6"}) {
    const Preset p = make_preset(name);
    const auto ch = p.model.iid_channel();
    for (double lambda : p.lambda_sweep) {
      const auto arr = ArrivalDistribution::bernoulli(lambda);
      check(std::string(name) + " lambda=" + fmt(lambda), value_iteration(p.model.system, ch, arr).error_trace,
            p.model.system.discount);
      check(std::string(name) + " no-probe lambda=" + fmt(lambda),
            value_iteration_no_probe(p.model.system, ch, arr).error_trace, p.model.system.discount);
      solves += 2;
    }
    for (const auto& pt : p.probing_points) {
      SystemConfig cfg = p.model.system;
      cfg.probe_cost = pt.probe_cost;
      cfg.sample_cost = pt.sample_cost;
      const auto arr = ArrivalDistribution::bernoulli(pt.lambda);
      const std::string tag = std::string(name) + " Es=" + std::to_string(pt.sample_cost) + " lambda=" + fmt(pt.lambda);
      check(tag, value_iteration(cfg, ch, arr).error_trace, cfg.discount);
      check(tag + " no-probe", value_iteration_no_probe(cfg, ch, arr).error_trace, cfg.discount);
      solves += 2;
    }
  }
  const Preset multi = make_preset("multi3");
  for (double lambda : multi.lambda_sweep) {
    check("multi3 lambda=" + fmt(lambda),
          value_iteration_multi(multi.model.system, multi.model.iid_channel(), ArrivalDistribution::bernoulli(lambda))
              .error_trace,
          multi.model.system.discount);
    ++solves;
  }
  for (const auto& name : {"fig3", "fig4", "fig6"}) {
    const Preset p = make_preset(name);
    const ModelConfig& m = p.model.is_markov() ? p.model : *p.markov_model;
    check(std::string(name) + " markov", value_iteration_markov(m.system, m.markov_channel(), m.markov_energy()).error_trace,
          m.system.discount);
    ++solves;
  }
  v.note(std::to_string(solves) + " solves checked at slack 1e-12");
}

// ---------------------------------------------------------------------------

void monotonicity(Verdict& v) {
  constexpr double kTol = 1e-10;
  const Preset fig2 = make_preset("fig2");
  const auto ch = fig2.model.iid_channel();
  const auto& order = ch.by_descending_success();
  long checked = 0;
  for (double lambda : fig2.lambda_sweep) {
    const auto& cfg = fig2.model.system;
    const auto sol = value_iteration(cfg, ch, ArrivalDistribution::bernoulli(lambda));
    int bad_j = 0, bad_w = 0;
    for (int e = 0; e <= cfg.buffer_capacity; ++e)
      for (int t = 1; t < cfg.age_cap; ++t) {
        bad_j += sol.tables.j(e, t + 1) < sol.tables.j(e, t) - kTol;
        for (std::size_t k = 1; k < order.size(); ++k)
          bad_w += sol.tables.w(e, t, order[k]) < sol.tables.w(e, t, order[k - 1]) - kTol;
        checked += static_cast<long>(order.size());
      }
    v.require(bad_j == 0, "fig2 lambda=" + fmt(lambda) + ": J decreasing in T at " + std::to_string(bad_j) + " cells");
    v.require(bad_w == 0, "fig2 lambda=" + fmt(lambda) + ": W increasing as p drops at " + std::to_string(bad_w) + " cells");
  }

  const Preset multi = make_preset("multi3");
  const auto mch = multi.model.iid_channel();
  const auto& morder = mch.by_descending_success();
  const auto& cfg = multi.model.system;
  for (double lambda : multi.lambda_sweep) {
    const auto sol = value_iteration_multi(cfg, mch, ArrivalDistribution::bernoulli(lambda));
    const auto& space = sol.ages();
    int bad_j = 0, bad_w = 0;
    for (int e = 0; e <= cfg.buffer_capacity; ++e)
      for (std::size_t idx = 0; idx < space.size(); ++idx) {
        auto ages = space.ages(idx);
        std::vector<int> a(ages.begin(), ages.end());
        for (std::size_t k = 0; k < a.size(); ++k) {
          if (a[k] == cfg.age_cap) continue;
          auto up = a;
          ++up[k];
          bad_j += sol.j(e, up) < sol.j(e, a) - kTol;
        }
        for (std::size_t k = 1; k < morder.size(); ++k)
          bad_w += sol.w(e, a, morder[k]) < sol.w(e, a, morder[k - 1]) - kTol;
        checked += static_cast<long>(a.size() + morder.size());
      }
    v.require(bad_j == 0, "multi3 lambda=" + fmt(lambda) + ": J decreasing in an age at " + std::to_string(bad_j) + " cells");
    v.require(bad_w == 0, "multi3 lambda=" + fmt(lambda) + ": W increasing as p drops at " + std::to_string(bad_w) + " cells");
  }
  v.note(std::to_string(checked) + " comparisons on fig2 and multi3 at tol 1e-10");
}

// ---------------------------------------------------------------------------

void structure(Verdict& v) {
  std::size_t solves = 0;
  for (const auto& name : {"fig2", "fig5", "fig6"}) {
    const Preset p = make_preset(name);
    const auto ch = p.model.iid_channel();
    std::vector<std::pair<SystemConfig, double>> cases;
    for (double l : p.lambda_sweep) cases.emplace_back(p.model.system, l);
    for (const auto& pt : p.probing_points) {
      SystemConfig cfg = p.model.system;
      cfg.probe_cost = pt.probe_cost;
      cfg.sample_cost = pt.sample_cost;
      cases.emplace_back(cfg, pt.lambda);
    }
    for (const auto& [cfg, lambda] : cases) {
      const auto sol = value_iteration(cfg, ch, ArrivalDistribution::bernoulli(lambda));
      const auto bad = sampling_structure_violations(sol.policy, cfg, ch);
      v.require(bad.empty(), std::string(name) + " lambda=" + fmt(lambda) + ": " + std::to_string(bad.size()) +
                                 " cells not upward-closed in p" + (bad.empty() ? "" : " (first " + bad[0].cell + ")"));
      ++solves;
    }
  }
  const Preset multi = make_preset("multi3");
  const auto mch = multi.model.iid_channel();
  for (double lambda : multi.lambda_sweep) {
    const auto sol = value_iteration_multi(multi.model.system, mch, ArrivalDistribution::bernoulli(lambda));
    const auto bad = multi_structure_violations(sol, mch);
    v.require(bad.empty(), "multi3 lambda=" + fmt(lambda) + ": " + std::to_string(bad.size()) + " violations" +
                               (bad.empty() ? "" : " (first " + bad[0].property + " at " + bad[0].cell + ")"));
    ++solves;
  }
  v.note(std::to_string(solves) + " policies checked");
}

// ---------------------------------------------------------------------------

void brute_force(Verdict& v) {
  oracle::SingleModel tiny;
  SystemConfig cfg;
  cfg.buffer_capacity = tiny.B;
  cfg.age_cap = tiny.Tmax;
  cfg.probe_cost = tiny.Ep;
  cfg.sample_cost = tiny.Es;
  cfg.discount = tiny.alpha;
  const auto sol = value_iteration(cfg, IidChannel(tiny.p, tiny.q), ArrivalDistribution(tiny.arrivals, tiny.arrival_probs));
  const auto best = oracle::brute_force_optimum(tiny);
  double worst = 0.0;
  for (int e = 0; e <= tiny.B; ++e)
    for (int t = 1; t <= tiny.Tmax; ++t)
      worst = std::max(worst, std::abs(sol.tables.j(e, t) - best[tiny.index(e, t)]));
  v.require(worst < 1e-6, "max |J_VI - J_enum| = " + fmt(worst));
  v.note("B=2 Tmax=3, max |J_VI - J_enum| = " + fmt(worst, 3));
}

// ---------------------------------------------------------------------------

void fig2_thresholds(Verdict& v) {
  const Preset p = make_preset("fig2");
  const auto& cfg = p.model.system;
  const auto ch = p.model.iid_channel();
  const int band = truncation_band_limit(cfg.age_cap);
  const int active = cfg.min_active_energy();
  std::vector<SingleThresholdReport> reps;
  for (double lambda : p.lambda_sweep)
    reps.push_back(extract_thresholds(value_iteration(cfg, ch, ArrivalDistribution::bernoulli(lambda)), cfg, ch));
  int bad_t_e = 0, bad_p_e = 0, bad_p_t = 0, bad_t_l = 0, bad_p_l = 0;
  std::string first_p_e;
  long checked = 0;
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const auto& r = reps[k];
    for (int e = active; e <= cfg.buffer_capacity; ++e) {
      if (e > active) bad_t_e += !age_threshold_le(r.t_th(e), r.t_th(e - 1), band);
      if (k > 0) bad_t_l += !age_threshold_le(r.t_th(e), reps[k - 1].t_th(e), band);
      for (int t = 1; t <= band; ++t) {
        if (e > active && !prob_threshold_le(r.p_th(e, t), r.p_th(e - 1, t)) && bad_p_e++ == 0)
          first_p_e = " (first lambda=" + fmt(p.lambda_sweep[k]) + " E=" + std::to_string(e) + " T=" + std::to_string(t) +
                      ": " + fmt(r.p_th(e, t).value_or(NAN)) + " vs " + fmt(r.p_th(e - 1, t).value_or(NAN)) + " at E-1)";
        if (t > 1) bad_p_t += !prob_threshold_le(r.p_th(e, t), r.p_th(e, t - 1));
        if (k > 0) bad_p_l += !prob_threshold_le(r.p_th(e, t), reps[k - 1].p_th(e, t));
        checked += 3;
      }
    }
  }
  v.require(bad_t_e == 0, "T_th increasing in E at " + std::to_string(bad_t_e) + " cells");
  v.require(bad_t_l == 0, "T_th increasing in lambda at " + std::to_string(bad_t_l) + " cells");
  v.require(bad_p_e == 0, "p_th increasing in E at " + std::to_string(bad_p_e) + " cells" + first_p_e);
  v.require(bad_p_t == 0, "p_th increasing in T at " + std::to_string(bad_p_t) + " cells");
  v.require(bad_p_l == 0, "p_th increasing in lambda at " + std::to_string(bad_p_l) + " cells");
  std::ostringstream row;
  row << "T_th(E) at lambda=0.5:";
  for (int e = active; e <= cfg.buffer_capacity; ++e) {
    const auto t = reps[2].t_th(e);
    row << ' ' << (t ? std::to_string(*t) : std::string("-"));
  }
  v.note(row.str());
  v.note(std::to_string(checked) + " comparisons, band T <= " + std::to_string(band));
}

// ---------------------------------------------------------------------------

void fig3_thresholds(Verdict& v) {
  const Preset p = make_preset("fig3");
  const auto& cfg = p.model.system;
  const auto ch = p.model.markov_channel();
  const auto sol = value_iteration_markov(cfg, ch, p.model.markov_energy());
  const auto r = extract_thresholds_markov(sol, cfg, ch);
  const int band = truncation_band_limit(cfg.age_cap);
  const int active = cfg.min_active_energy();
  const auto& order = ch.by_descending_success();
  const std::size_t good = order.front(), bad = order.back();
  const Harvest h1 = Harvest::kHarvesting, h2 = Harvest::kIdle;
  int c_order = 0, h_order = 0, p_h = 0, p_e = 0, p_t = 0;
  long checked = 0;
  for (int e = active; e <= cfg.buffer_capacity; ++e) {
    for (int tau = 1; tau <= cfg.age_cap; ++tau) {
      for (Harvest h : kHarvestStates) c_order += !age_threshold_le(r.t_th(e, tau, good, h), r.t_th(e, tau, bad, h), band);
      for (std::size_t cp = 0; cp < ch.num_states(); ++cp)
        h_order += !age_threshold_le(r.t_th(e, tau, cp, h1), r.t_th(e, tau, cp, h2), band);
      checked += 4;
    }
    for (int t = 1; t <= band; ++t) {
      p_h += !prob_threshold_le(r.p_th(e, t, h1), r.p_th(e, t, h2));
      for (Harvest h : kHarvestStates) {
        if (e > active) p_e += !prob_threshold_le(r.p_th(e, t, h), r.p_th(e - 1, t, h));
        if (t > 1) p_t += !prob_threshold_le(r.p_th(e, t, h), r.p_th(e, t - 1, h));
      }
      checked += 5;
    }
  }
  v.require(c_order == 0, "T_th(C1) > T_th(C2) at " + std::to_string(c_order) + " cells");
  v.require(h_order == 0, "T_th(H1) > T_th(H2) at " + std::to_string(h_order) + " cells");
  v.require(p_h == 0, "p_th(H1) > p_th(H2) at " + std::to_string(p_h) + " cells");
  v.require(p_e == 0, "p_th increasing in E at " + std::to_string(p_e) + " cells");
  v.require(p_t == 0, "p_th increasing in T at " + std::to_string(p_t) + " cells");
  v.note(std::to_string(checked) + " comparisons, band T <= " + std::to_string(band) + ", " +
         std::to_string(sol.error_trace.size()) + " iterations");
}

// ---------------------------------------------------------------------------

void fig5_sign(Verdict& v) {
  const Preset p = make_preset("fig5");
  EvalOptions eo;
  eo.horizon = 1'000'000;
  eo.replicates = 10;
  eo.seed = p.eval.seed;
  const auto rows = compare_probing(p.model.system, p.model.iid_channel(), p.probing_points, eo);
  for (const auto& row : rows) {
    const auto& pr = row.probing;
    const auto& bl = row.blind;
    const std::string tag = "Es=" + std::to_string(row.point.sample_cost) + " lambda=" + fmt(row.point.lambda);
    if (row.point.sample_cost == 5) {
      v.require(pr.mean + pr.ci_half_width < bl.mean - bl.ci_half_width,
                tag + ": probing " + fmt(pr.mean) + "+-" + fmt(pr.ci_half_width, 2) + " not below blind " +
                    fmt(bl.mean) + "+-" + fmt(bl.ci_half_width, 2));
    } else {
      v.require(row.diff_mean >= -row.diff_ci_half_width,
                tag + ": probing beats blind by " + fmt(-row.diff_mean) + " > CI " + fmt(row.diff_ci_half_width, 2));
    }
    if (row.point.lambda == 0.5) v.note(tag + " probing " + fmt(pr.mean) + " blind " + fmt(bl.mean));
  }
}

// ---------------------------------------------------------------------------

template <class Learner, class Env, class MakeEnv, class Eval>
std::vector<double> learn_seeds(const Preset& p, const Learner& proto, MakeEnv&& make_env, Eval&& eval) {
  std::vector<double> out;
  for (int k = 0; k < 2; ++k) {
    const std::uint64_t seed = p.eval.seed + static_cast<std::uint64_t>(k);
    Learner learner = proto;
    Env env = make_env(make_rng(seed, 0));
    Rng explore = make_rng(seed, 1);
    run_learning(learner, env, p.learning_run, explore);
    out.push_back(eval(learner.greedy()).mean);
  }
  return out;
}

void learning(Verdict& v) {
  const Preset p = make_preset("fig6");
  EvalOptions eo = p.eval;
  auto judge = [&](const std::string& variant, double vi, double random, const std::vector<double>& greedy) {
    for (std::size_t k = 0; k < greedy.size(); ++k) {
      const double ratio = greedy[k] / vi;
      v.require(std::abs(ratio - 1.0) <= 0.05, variant + " seed " + std::to_string(k) + ": Q/VI = " + fmt(ratio));
      v.require(greedy[k] < 0.8 * random,
                variant + " seed " + std::to_string(k) + ": Q policy gains only " + fmt(100 * (1 - greedy[k] / random), 3) +
                    "% over random");
      v.note(variant + " seed " + std::to_string(k) + " Q/VI=" + fmt(ratio));
    }
    v.require(vi < 0.8 * random, variant + ": VI gains only " + fmt(100 * (1 - vi / random), 3) + "% over random");
    v.note(variant + " VI " + fmt(vi) + " random " + fmt(random));
  };
  {
    const auto& cfg = p.model.system;
    const auto ch = p.model.iid_channel();
    const auto arr = p.model.arrivals();
    const auto sol = value_iteration(cfg, ch, arr);
    auto eval = [&](auto policy) {
      return evaluate_policy([&](int) { return policy; }, cfg, ch, arr, ProbeMode::kProbing, eo);
    };
    const double vi = eval(GreedySinglePolicy{&sol.policy}).mean;
    const double rnd = evaluate_policy([&](int r) { return UniformRandomPolicy{cfg, make_rng(eo.seed + 7919, r)}; }, cfg,
                                       ch, arr, ProbeMode::kProbing, eo)
                           .mean;
    const auto greedy = learn_seeds<IidQLearner, IidEnv>(
        p, IidQLearner(cfg, ch, p.learning),
        [&](Rng rng) { return IidEnv(cfg, ch, arr, ProbeMode::kProbing, std::move(rng)); }, eval);
    judge("iid", vi, rnd, greedy);
  }
  {
    const auto& m = *p.markov_model;
    const auto& cfg = m.system;
    const auto ch = m.markov_channel();
    const auto en = m.markov_energy();
    const auto sol = value_iteration_markov(cfg, ch, en);
    auto eval = [&](auto policy) {
      return evaluate_policy([&](int) { return policy; }, cfg, ch, en, ProbeMode::kProbing, eo);
    };
    const double vi = eval(GreedyMarkovPolicy{&sol}).mean;
    const double rnd = evaluate_policy([&](int r) { return UniformRandomPolicy{cfg, make_rng(eo.seed + 7919, r)}; }, cfg,
                                       ch, en, ProbeMode::kProbing, eo)
                           .mean;
    const auto greedy = learn_seeds<MarkovQLearner, MarkovEnv>(
        p, MarkovQLearner(cfg, ch, p.learning),
        [&](Rng rng) { return MarkovEnv(cfg, ch, en, ProbeMode::kProbing, std::move(rng)); }, eval);
    judge("markov", vi, rnd, greedy);
  }
}

// ---------------------------------------------------------------------------
// Mean update increment at Q* for every live cell, from transitions drawn by
// a sampler written here rather than by the environments.

struct IncrementStats {
  long cells = 0;
  long failures = 0;
  double worst_z = 0.0;
  std::vector<double> z;
  std::string first_failure;

  void add(const std::string& cell, const std::vector<double>& inc, double floor) {
    const double n = static_cast<double>(inc.size());
    double mean = 0.0;
    for (double x : inc) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : inc) ss += (x - mean) * (x - mean);
    const double se = std::sqrt(ss / (n - 1) / n);
    ++cells;
    if (se > 0) worst_z = std::max(worst_z, std::abs(mean) / se);
    z.push_back(se > 0 ? std::abs(mean) / se : 0.0);
    if (std::abs(mean) > 3.0 * se + floor) {
      if (failures++ == 0) first_failure = cell + " mean " + fmt(mean, 3) + " se " + fmt(se, 3);
    }
  }
};

constexpr int kIncrementSamples = 100'000;

// Non-gating diagnostic: per cell, |z| > 3 has probability 0.0027 under a
// zero mean, so across many cells some exceedances are expected by chance.
std::string family_note(const IncrementStats& st) {
  const double per_cell = 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), 3.0));
  const double zb = boost::math::quantile(boost::math::complement(boost::math::normal(), per_cell / (2.0 * st.cells)));
  long over = 0;
  for (double x : st.z) over += x > zb;
  return std::to_string(st.failures) + " exceedances vs " + fmt(per_cell * st.cells, 3) +
         " expected by chance, " + std::to_string(over) + " beyond the family-wise bound z=" + fmt(zb, 3);
}

void increments_iid(Verdict& v) {
  const Preset p = make_preset("fig6");
  const auto& cfg = p.model.system;
  const auto ch = p.model.iid_channel();
  const auto arr = p.model.arrivals();
  const auto sol = value_iteration(cfg, ch, arr);
  const IidQModel model(cfg, ch, p.learning);
  const QTables q = optimal_q_iid(sol.tables.J, model, ch, arr);
  const auto& g = model.grid;
  // min_b Q*(s,b) is one more backup of J; the gap bounds the bias of every target.
  double floor = 0.0;
  for (std::size_t s = 0; s < g.num_states(); ++s) floor = std::max(floor, std::abs(q.min_state(s) - sol.tables.J[s]));
  floor += 1e-12;
  Rng rng = make_rng(20231, 0);
  IncrementStats st;
  std::vector<double> inc(kIncrementSamples);
  auto finish = [&](int e, int t, bool probed, std::optional<std::size_t> c, bool sampled, IidRecord r) {
    const int spent = (probed ? cfg.probe_cost : 0) + (sampled ? cfg.sample_cost : 0);
    r.energy = e;
    r.age = t;
    r.probed = probed;
    r.channel = c;
    r.sampled = sampled;
    if (sampled) r.success = bernoulli(rng, ch.success(*c));
    r.arrivals = draw_arrival(arr, std::nullopt, rng);
    r.next_energy = std::min(e - spent + r.arrivals, cfg.buffer_capacity);
    r.next_age = r.success.value_or(false) ? 1 : std::min(t + 1, cfg.age_cap);
    return r;
  };
  auto cell_name = [](const char* kind, int e, int t, int extra, int a) {
    return std::string(kind) + "(E=" + std::to_string(e) + ",T=" + std::to_string(t) +
           (extra >= 0 ? ",C=" + std::to_string(extra + 1) : std::string()) + ",a=" + std::to_string(a) + ")";
  };
  for (int e = 0; e <= cfg.buffer_capacity; ++e)
    for (int t = 1; t <= cfg.age_cap; ++t) {
      const std::size_t s = g.state(e, t);
      for (int i = 0; i < kIncrementSamples; ++i) {
        const auto r = finish(e, t, false, std::nullopt, false, {});
        inc[i] = q_targets_iid(q, model, r).items[0].target - q.state_q[s * 2];
      }
      st.add(cell_name("Q", e, t, -1, 0), inc, floor);
      if (!q.probe_live[s]) continue;
      for (int i = 0; i < kIncrementSamples; ++i) {
        const std::size_t c = categorical(rng, ch.occurrence_probs());
        const auto r = finish(e, t, true, c, false, {});
        inc[i] = q_targets_iid(q, model, r).items[0].target - q.state_q[s * 2 + 1];
      }
      st.add(cell_name("Q", e, t, -1, 1), inc, floor);
      for (std::size_t c = 0; c < g.channels; ++c) {
        const std::size_t vi = g.inter(e, t, c);
        for (int a = 0; a < 2; ++a) {
          for (int i = 0; i < kIncrementSamples; ++i) {
            const auto r = finish(e, t, true, c, a == 1, {});
            inc[i] = q_targets_iid(q, model, r).items[1].target - q.inter_q[vi * 2 + a];
          }
          st.add(cell_name("Qv", e, t, static_cast<int>(c), a), inc, floor);
        }
      }
    }
  v.require(st.failures == 0, "iid: " + std::to_string(st.failures) + " cells outside 3 SE, first " + st.first_failure);
  v.note("iid " + std::to_string(st.cells) + " cells, max |mean|/SE " + fmt(st.worst_z, 3) + ", floor " + fmt(floor, 2) +
         ", " + family_note(st));
}

void increments_markov(Verdict& v) {
  const Preset p = make_preset("fig6");
  const auto& m = *p.markov_model;
  const auto& cfg = m.system;
  const auto ch = m.markov_channel();
  const auto en = m.markov_energy();
  const auto sol = value_iteration_markov(cfg, ch, en);
  const MarkovQModel model(cfg, ch, p.learning);
  const QTables q = optimal_q_markov(sol.J, model, ch, en);
  const auto& g = model.grid;
  double floor = 0.0;
  for (int e = 0; e <= cfg.buffer_capacity; ++e)
    for (int t = 1; t <= cfg.age_cap; ++t)
      for (int tau = 1; tau <= t; ++tau)
        for (std::size_t cp = 0; cp < g.channels; ++cp)
          for (Harvest h : kHarvestStates) {
            const std::size_t s = g.state(e, t, tau, cp, h);
            floor = std::max(floor, std::abs(q.min_state(s) - sol.J[s]));
          }
  floor += 1e-12;
  // Row tau of Q^tau for C_prev, by repeated multiplication.
  auto weights = [&](int tau, std::size_t cp) {
    std::vector<double> w(g.channels, 0.0);
    w[cp] = 1.0;
    for (int k = 0; k < tau; ++k) {
      std::vector<double> nxt(g.channels, 0.0);
      for (std::size_t i = 0; i < g.channels; ++i)
        for (std::size_t j = 0; j < g.channels; ++j) nxt[j] += w[i] * ch.transition()(i, j);
      w = nxt;
    }
    return w;
  };
  Rng rng = make_rng(20231, 1);
  IncrementStats st;
  std::vector<double> inc(kIncrementSamples);
  auto finish = [&](const MarkovAgentState& s0, bool probed, std::optional<std::size_t> c, bool sampled) {
    MarkovRecord r;
    r.state = s0;
    r.probed = probed;
    r.channel = c;
    r.sampled = sampled;
    if (sampled) r.success = bernoulli(rng, ch.success(*c));
    const bool harvesting = s0.harvest == Harvest::kHarvesting;
    const double a1 = uniform01(rng);
    double acc = 0.0;
    r.arrivals = en.arrivals.support().back();
    for (std::size_t k = 0; k < en.arrivals.support().size(); ++k) {
      acc += en.arrivals.probs()[k];
      if (a1 < acc) {
        r.arrivals = en.arrivals.support()[k];
        break;
      }
    }
    if (!harvesting) r.arrivals = 0;
    const double leave = harvesting ? en.chain.h12 : en.chain.h21;
    const bool flip = uniform01(rng) < leave;
    r.next_harvest = flip ? (harvesting ? Harvest::kIdle : Harvest::kHarvesting) : s0.harvest;
    const int spent = (probed ? cfg.probe_cost : 0) + (sampled ? cfg.sample_cost : 0);
    r.next.energy = std::min(s0.energy - spent + r.arrivals, cfg.buffer_capacity);
    r.next.age = r.success.value_or(false) ? 1 : std::min(s0.age + 1, cfg.age_cap);
    r.next.since_probe = probed ? 1 : std::min(s0.since_probe + 1, cfg.age_cap);
    r.next.prev_channel = probed ? *c : s0.prev_channel;
    r.next.harvest = r.next_harvest;
    return r;
  };
  for (int e = 0; e <= cfg.buffer_capacity; ++e)
    for (int t = 1; t <= cfg.age_cap; ++t)
      for (Harvest h : kHarvestStates) {
        const std::string where = "(E=" + std::to_string(e) + ",T=" + std::to_string(t) + "," + harvest_name(h);
        for (int tau = 1; tau <= t; ++tau)
          for (std::size_t cp = 0; cp < g.channels; ++cp) {
            const MarkovAgentState s0{e, t, tau, cp, h};
            const std::size_t s = model.state(s0);
            const std::string cell = where + ",tau=" + std::to_string(tau) + ",Cp=" + std::to_string(cp + 1);
            for (int i = 0; i < kIncrementSamples; ++i)
              inc[i] = q_targets_markov(q, model, finish(s0, false, std::nullopt, false)).items[0].target - q.state_q[s * 2];
            st.add("Q" + cell + ",b=0)", inc, floor);
            if (!q.probe_live[s]) continue;
            const auto w = weights(tau, cp);
            for (int i = 0; i < kIncrementSamples; ++i) {
              const std::size_t c = categorical(rng, w);
              inc[i] = q_targets_markov(q, model, finish(s0, true, c, false)).items[0].target - q.state_q[s * 2 + 1];
            }
            st.add("Q" + cell + ",b=1)", inc, floor);
          }
        if (e < cfg.min_active_energy()) continue;
        for (std::size_t c = 0; c < g.channels; ++c) {
          const std::size_t vi = g.inter(e, t, c, h);
          const MarkovAgentState s0{e, t, 1, 0, h};
          for (int a = 0; a < 2; ++a) {
            for (int i = 0; i < kIncrementSamples; ++i)
              inc[i] = q_targets_markov(q, model, finish(s0, true, c, a == 1)).items[1].target - q.inter_q[vi * 2 + a];
            st.add("Qv" + where + ",C=" + std::to_string(c + 1) + ",a=" + std::to_string(a) + ")", inc, floor);
          }
        }
      }
  v.require(st.failures == 0, "markov: " + std::to_string(st.failures) + " cells outside 3 SE, first " + st.first_failure);
  v.note("markov " + std::to_string(st.cells) + " cells, max |mean|/SE " + fmt(st.worst_z, 3) + ", floor " + fmt(floor, 2) +
         ", " + family_note(st));
}

void increments(Verdict& v) {
  increments_iid(v);
  increments_markov(v);
}

// ---------------------------------------------------------------------------

void stationary(Verdict& v) {
  const Preset p = make_preset("fig2");
  const auto& cfg = p.model.system;
  const auto ch = p.model.iid_channel();
  const auto arr = ArrivalDistribution::bernoulli(0.5);
  const auto sol = value_iteration(cfg, ch, arr);

  oracle::SingleModel m;
  m.B = cfg.buffer_capacity;
  m.Ep = cfg.probe_cost;
  m.Es = cfg.sample_cost;
  m.Tmax = cfg.age_cap;
  m.alpha = cfg.discount;
  m.p = ch.success_probs();
  m.q = ch.occurrence_probs();
  m.arrivals = arr.support();
  m.arrival_probs = arr.probs();
  const std::size_t mc = m.p.size();
  oracle::TwoStagePolicy pol{std::vector<char>(m.states()), std::vector<char>(m.states() * mc)};
  for (int e = 0; e <= m.B; ++e)
    for (int t = 1; t <= m.Tmax; ++t) {
      pol.probe[m.index(e, t)] = sol.policy.probe(e, t);
      for (std::size_t c = 0; c < mc; ++c) pol.sample[m.index(e, t) * mc + c] = sol.policy.sample(e, t, c);
    }
  Eigen::MatrixXd P;
  Eigen::VectorXd c;
  oracle::policy_chain(m, pol, P, c);
  const double exact = oracle::stationary_cost(P, c);

  EvalOptions eo;
  eo.horizon = 1'000'000;
  eo.replicates = 10;
  eo.seed = p.eval.seed;
  const auto rep =
      evaluate_policy([&](int) { return GreedySinglePolicy{&sol.policy}; }, cfg, ch, arr, ProbeMode::kProbing, eo);
  v.require(std::abs(rep.mean - exact) <= rep.ci_half_width,
            "simulated " + fmt(rep.mean, 6) + " vs exact " + fmt(exact, 6) + " outside CI " + fmt(rep.ci_half_width, 3));
  v.note("simulated " + fmt(rep.mean, 6) + " +- " + fmt(rep.ci_half_width, 3) + ", exact " + fmt(exact, 6));
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<void(Verdict&)> run;
  };
  const std::vector<Criterion> criteria{
      {"value iteration contracts on every solver and preset", contraction},
      {"J monotone in age and W monotone in p", monotonicity},
      {"threshold structure of the optimal policies", structure},
      {"value iteration matches brute-force enumeration", brute_force},
      {"fig2 threshold orderings in E, T and lambda", fig2_thresholds},
      {"fig3 threshold orderings in C_prev, H, E and T", fig3_thresholds},
      {"fig5 probing versus blind sampling", fig5_sign},
      {"fig6 Q-learning reaches value-iteration performance", learning},
      {"expected Q-learning increment vanishes at Q*", increments},
      {"simulated AoI matches the exact stationary cost", stationary},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].run(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !v.pass;
    std::printf("%s %2zu %s (%.1fs):%s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, secs,
                v.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
