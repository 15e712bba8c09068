#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aoi/model.hpp"
#include "aoi/qlearning.hpp"
#include "aoi/simulator.hpp"

namespace aoi {

// Parameter sets of the numerical experiments. `model` is the main instance;
// fig6 also carries the Markovian variant.
struct Preset {
  std::string name;
  std::string description;
  ModelConfig model;
  std::optional<ModelConfig> markov_model;
  std::vector<double> lambda_sweep;          // solve / sweep
  std::vector<ProbingPoint> probing_points;  // compare-probing
  QLearningOptions learning;
  LearningOptions learning_run;
  EvalOptions eval;
};

namespace presets {

inline ModelConfig five_state_iid(int capacity, int age_cap, double lambda) {
  ModelConfig m;
  m.system.buffer_capacity = capacity;
  m.system.age_cap = age_cap;
  m.success_probs = {0.9, 0.7, 0.5, 0.3, 0.1};
  m.occurrence_probs = std::vector<double>{0.2, 0.2, 0.2, 0.2, 0.2};
  m.set_bernoulli_rate(lambda);
  return m;
}

inline ModelConfig two_state_markov(int capacity, int age_cap) {
  ModelConfig m;
  m.system.buffer_capacity = capacity;
  m.system.age_cap = age_cap;
  m.success_probs = {0.9, 0.4};
  m.transition_matrix = std::vector<std::vector<double>>{{0.9, 0.1}, {0.1, 0.9}};
  m.set_bernoulli_rate(0.4);
  m.harvest = HarvestChain(0.3, 0.3);
  return m;
}

inline const std::vector<double> kLambdaSweep{0.1, 0.3, 0.5, 0.7, 0.9};

inline Preset fig2() {
  Preset p;
  p.name = "fig2";
  p.description = "i.i.d. channel, N=1: T_th(E) and p_th(E,T) across lambda";
  p.model = five_state_iid(12, 50, 0.5);
  p.lambda_sweep = kLambdaSweep;
  return p;
}

// Three processes sharing the fig2 channel and buffer; T_max kept small so the
// full age table stays tractable.
inline Preset multi3() {
  Preset p;
  p.name = "multi3";
  p.description = "i.i.d. channel, N=3: T_th(E,T_2,T_3) and p_th(E,T_1,T_2,T_3)";
  p.model = five_state_iid(12, 15, 0.5);
  p.model.system.num_processes = 3;
  p.lambda_sweep = {0.2, 0.5, 0.8};
  return p;
}

inline Preset fig3() {
  Preset p;
  p.name = "fig3";
  p.description = "Markov channel and harvesting: probing thresholds T_th(E,tau,C_prev,H)";
  p.model = two_state_markov(9, 30);
  p.lambda_sweep = {0.4};
  return p;
}

inline Preset fig4() {
  Preset p = fig3();
  p.name = "fig4";
  p.description = "Markov channel and harvesting: p_th(E,T,H) and post-probe T_th(E,C,H)";
  return p;
}

inline Preset fig5() {
  Preset p;
  p.name = "fig5";
  p.description = "probing versus blind sampling, i.i.d. channel, N=1";
  p.model = five_state_iid(12, 50, 0.5);
  p.lambda_sweep = kLambdaSweep;
  for (int es : {1, 5})
    for (double l : kLambdaSweep) p.probing_points.push_back({l, 1, es});
  return p;
}

inline Preset fig6() {
  Preset p;
  p.name = "fig6";
  p.description = "Q-learning against value iteration, B=5, T_max=7";
  p.model = five_state_iid(5, 7, 0.4);
  p.markov_model = two_state_markov(5, 7);
  p.lambda_sweep = {0.4};
  p.learning.step = {1.0, 0.6};
  p.learning.explore.epsilon = 0.2;
  p.learning_run.horizon = 500'000;
  return p;
}

}  // namespace presets

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"fig2", "multi3", "fig3", "fig4", "fig5", "fig6"};
  return names;
}

inline Preset make_preset(const std::string& name) {
  if (name == "fig2") return presets::fig2();
  if (name == "multi3") return presets::multi3();
  if (name == "fig3") return presets::fig3();
  if (name == "fig4") return presets::fig4();
  if (name == "fig5") return presets::fig5();
  if (name == "fig6") return presets::fig6();
  throw InvalidConfig("unknown preset '" + name + "'");
}

}  // namespace aoi
